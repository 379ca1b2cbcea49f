"""Losses, optimisation, the training loop and per-question-type metrics."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .fusion import AnswerVocabulary
from .lexicon import Vocabulary, WordVectors, build_vocabulary
from .model import FDAModel, ModelDims, check_variant, predict_multiple_choice, predict_open_ended
from .numerics import Node, Param, Tape, clip_grad_norm
from .sceneworld import REPORT_QTYPES, Dataset

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("all",) + REPORT_QTYPES
HISTORY_COLUMNS = ("epoch", "split", "mode", "variant", "all", "yesno", "number", "other", "loss")
OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    def __init__(self, message, model=None, history=None):
        super().__init__(message)
        self.model = model
        self.history = history


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    clip_norm: float = 5.0
    embed_dim: int = 16
    state_dim: int = 32
    visual_dim: int = 32
    threshold: float = 0.5
    variant: str = "fda"
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        check_variant(self.variant)
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        for k in ("batch_size", "embed_dim", "state_dim", "visual_dim", "clip_norm", "adam_eps"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive, got {getattr(self, k)}")
        for k in ("epochs", "learning_rate", "weight_decay"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be nonnegative, got {getattr(self, k)}")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [-1, 1]")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.embed_dim, self.state_dim, self.visual_dim)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


# --- optimisation -----------------------------------------------------------


class Adam:
    def __init__(self, params: Sequence[Param], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = [p for p in params if not p.frozen]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: Sequence[Param], lr=1e-2, weight_decay=0.0):
        self.params = [p for p in params if not p.frozen]
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self):
        for p in self.params:
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            p.value -= self.lr * g


def make_optimizer(config: TrainConfig, params):
    if config.optimizer == "sgd":
        return SGD(params, config.learning_rate, config.weight_decay)
    return Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps,
                config.weight_decay)


# --- losses -----------------------------------------------------------------


def _loss_node(tape: Tape, model: FDAModel, items, traces=None) -> tuple[Node | None, int]:
    losses = []
    skipped = 0
    for k, (sample, scene) in enumerate(items):
        target = model.answers.get(sample.answer)
        if target is None:
            skipped += 1
            continue
        trace = traces[k] if traces is not None else None
        logits = model.forward(tape, scene, sample.tokens, trace)
        losses.append(tape.softmax_cross_entropy(logits, target))
    if skipped:
        log.warning("skipped %d sample(s) with answers outside the vocabulary", skipped)
    if not losses:
        return None, skipped
    return tape.mean(losses), skipped


def batch_loss(model: FDAModel, batch, variant: str | None = None) -> float:
    """Mean cross-entropy over (QASample, Scene) pairs."""
    if variant is not None and variant != model.variant:
        raise ValueError(f"model is {model.variant!r}, batch requested {variant!r}")
    if not batch:
        raise ValueError("empty batch")
    loss, _ = _loss_node(Tape(grad=False), model, batch)
    if loss is None:
        raise ValueError("no sample in the batch has an answer in the vocabulary")
    return float(loss.value)


# --- metrics ----------------------------------------------------------------


@dataclass
class MetricsTable:
    """Exact-match accuracy overall and per reporting question type.

    Question types with no samples are ``None`` rather than 0.
    """

    all: float | None
    yesno: float | None = None
    number: float | None = None
    other: float | None = None
    counts: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, samples, predictions) -> "MetricsTable":
        hits: Counter = Counter()
        counts: Counter = Counter()
        for sample, pred in zip(samples, predictions):
            t = sample.report_qtype
            counts[t] += 1
            hits[t] += pred == sample.answer
        total = sum(counts.values())
        acc = {t: hits[t] / counts[t] if counts[t] else None for t in REPORT_QTYPES}
        return cls(sum(hits.values()) / total if total else None,
                   counts={t: counts[t] for t in REPORT_QTYPES if counts[t]}, **acc)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


def _select_all(model: FDAModel, pairs):
    return [model.select(scene, sample.tokens) for sample, scene in pairs]


def predict_dataset(model: FDAModel, dataset: Dataset, mode: str = "open", traces=None):
    """Predicted answers (and their probabilities) for every sample, in order."""
    pairs = dataset.pairs()
    if mode == "mc":
        missing = [q.id for q, _ in pairs if not q.choices]
        if missing:
            raise ValueError(f"multiple-choice evaluation needs choices; missing on {missing[:3]}")
    elif mode != "open":
        raise ValueError(f"unknown mode {mode!r}")
    traces = traces if traces is not None else _select_all(model, pairs)
    out = []
    for (sample, scene), trace in zip(pairs, traces):
        if mode == "open":
            ans, p, _ = predict_open_ended(model, scene, sample.tokens, trace)
        else:
            ans, p, _ = predict_multiple_choice(model, scene, sample.tokens, sample.choices, trace)
        out.append((ans, p))
    return out


def evaluate(model: FDAModel, dataset: Dataset, mode: str = "open", variant: str | None = None,
             traces=None) -> MetricsTable:
    if variant is not None and variant != model.variant:
        raise ValueError(f"model is {model.variant!r}, evaluation requested {variant!r}")
    preds = predict_dataset(model, dataset, mode, traces)
    return MetricsTable.from_predictions(dataset.samples, [a for a, _ in preds])


def dataset_loss(model: FDAModel, dataset: Dataset, traces=None) -> float:
    pairs = dataset.pairs()
    loss, _ = _loss_node(Tape(grad=False), model, pairs, traces)
    return float("nan") if loss is None else float(loss.value)


# --- training loop ----------------------------------------------------------


@dataclass
class TrainResult:
    model: FDAModel
    history: list
    config: TrainConfig
    best_epoch: int
    best_metric: float | None


def build_answer_vocabulary(train: Dataset, universe=(), top_k=None) -> AnswerVocabulary:
    return AnswerVocabulary.from_answers((q.answer for q in train.samples), top_k, universe)


def init_model(config: TrainConfig, vocab: Vocabulary, answers: AnswerVocabulary,
               matcher: WordVectors | None) -> FDAModel:
    rng = np.random.default_rng(config.seed)
    return FDAModel.initialize(config.variant, vocab, answers, config.dims, rng,
                               matcher, config.threshold)


def _history_row(epoch, split, mode, variant, metrics: MetricsTable | None, loss):
    row = {"epoch": epoch, "split": split, "mode": mode, "variant": variant, "loss": loss}
    for k in METRIC_COLUMNS:
        row[k] = None if metrics is None else getattr(metrics, k)
    return row


def train(config: TrainConfig, train_data: Dataset, val_data: Dataset | None = None,
          matcher: WordVectors | None = None, answers: AnswerVocabulary | None = None,
          vocab: Vocabulary | None = None) -> TrainResult:
    """Seeded mini-batch training; keeps the epoch with the best validation accuracy."""
    if train_data.visual_dim != config.visual_dim:
        raise ValueError(f"dataset visual_dim {train_data.visual_dim} != config {config.visual_dim}")
    vocab = vocab or build_vocabulary(q.tokens for q in train_data.samples)
    answers = answers or build_answer_vocabulary(train_data)
    model = init_model(config, vocab, answers, matcher)
    params = model.params()
    opt = make_optimizer(config, params)
    rng = np.random.default_rng([config.seed, 1])

    pairs = train_data.pairs()
    traces = _select_all(model, pairs)
    val_traces = _select_all(model, val_data.pairs()) if val_data else None
    has_mc = bool(val_data) and all(q.choices for q in val_data.samples)

    history = []
    best_state, best_epoch, best_metric = model.copy_state(), 0, None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(pairs))
        total, n_batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            model.zero_grad()
            tape = Tape()
            loss, _ = _loss_node(tape, model, [pairs[i] for i in idx], [traces[i] for i in idx])
            if loss is None:
                continue
            value = float(loss.value)
            if not math.isfinite(value):
                model.load_state(best_state)
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, batch {n_batches}; "
                    f"restored epoch {best_epoch}", model, history)
            tape.backward(loss)
            clip_grad_norm(params, config.clip_norm)
            opt.step()
            total += value
            n_batches += 1
        train_loss = total / max(n_batches, 1)
        history.append(_history_row(epoch, "train", "open", config.variant, None, train_loss))

        if val_data:
            val_loss = dataset_loss(model, val_data, val_traces)
            open_m = evaluate(model, val_data, "open", traces=val_traces)
            history.append(_history_row(epoch, "val", "open", config.variant, open_m, val_loss))
            if has_mc:
                mc_m = evaluate(model, val_data, "mc", traces=val_traces)
                history.append(_history_row(epoch, "val", "mc", config.variant, mc_m, val_loss))
            metric = open_m.all
            log.info("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.4f",
                     epoch, train_loss, val_loss, metric)
        else:
            metric = -train_loss
            log.info("epoch %d train_loss=%.4f", epoch, train_loss)
        if best_metric is None or metric > best_metric:
            best_state, best_epoch, best_metric = model.copy_state(), epoch, metric

    model.load_state(best_state)
    if not val_data and best_metric is not None:
        best_metric = None
    return TrainResult(model, history, config, best_epoch, best_metric)


def write_history_csv(path, history: Sequence[dict]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: _fmt(row.get(k)) for k in HISTORY_COLUMNS})


def read_history_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        row["epoch"] = int(row["epoch"])
        for k in METRIC_COLUMNS + ("loss",):
            row[k] = float(row[k]) if row[k] not in ("", None) else None
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# --- reference baselines ----------------------------------------------------


def answer_prior(train_data: Dataset, qtype: str | None = None) -> str:
    """Most frequent training answer (optionally within one generation qtype)."""
    counts = Counter(q.answer for q in train_data.samples if qtype is None or q.qtype == qtype)
    if not counts:
        raise ValueError(f"no training answers for qtype {qtype!r}")
    return min(counts, key=lambda a: (-counts[a], a))


def accuracy(samples, predictions) -> float | None:
    samples = list(samples)
    if not samples:
        return None
    return sum(p == q.answer for q, p in zip(samples, predictions)) / len(samples)
