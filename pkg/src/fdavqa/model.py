"""The full question-answering pipeline and its ablation variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import DEFAULT_THRESHOLD, SelectionTrace, global_only_trace, select
from .encoders import INIT_SCALE, LSTMParams, encode_question, encode_visual
from .fusion import AnswerVocabulary, FusionParams, argmax_lowest, fuse, fusion_logits, restricted_argmax
from .lexicon import EmbeddingTable, Vocabulary, WordVectors, embed_tokens
from .numerics import Node, Param, ShapeError, Tape, softmax

VARIANTS = ("question_only", "image_only", "q_plus_i", "lstm_q_i", "fda")
VARIANT_TITLES = {
    "question_only": "Question",
    "image_only": "Image",
    "q_plus_i": "Q+I",
    "lstm_q_i": "LSTM Q+I",
    "fda": "FDA",
}


class VariantError(ValueError):
    pass


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise VariantError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class ModelDims:
    embed_dim: int = 16
    state_dim: int = 32
    visual_dim: int = 32

    def __post_init__(self):
        for k in ("embed_dim", "state_dim", "visual_dim"):
            if getattr(self, k) <= 0:
                raise ShapeError(f"model {k}", (getattr(self, k),))


class FDAModel:
    """Parameters plus the forward pipeline for one variant.

    Only the components a variant actually uses are allocated:

    ============== ========== ============ ======================
    variant         question   visual       visual feed
    ============== ========== ============ ======================
    question_only   LSTM       all-ones     none
    image_only      all-ones   LSTM         global only
    q_plus_i        mean emb.  affine       global only
    lstm_q_i        LSTM       LSTM         global only
    fda             LSTM       LSTM         matched objects, global
    ============== ========== ============ ======================
    """

    def __init__(self, variant: str, vocab: Vocabulary, answers: AnswerVocabulary,
                 dims: ModelDims, matcher: WordVectors | None = None,
                 threshold: float = DEFAULT_THRESHOLD, values: dict | None = None):
        self.variant = check_variant(variant)
        self.vocab = vocab
        self.answers = answers
        self.dims = dims
        self.threshold = threshold
        self.matcher = matcher
        if variant == "fda" and matcher is None:
            raise ValueError("the fda variant needs matcher word vectors")
        values = values or {}
        d = dims

        def zeros(name, shape):
            return Param(name, values.get(name, np.zeros(shape)))

        self.embed = None
        if variant != "image_only":
            self.embed = EmbeddingTable(values.get("embed", np.zeros((len(vocab), d.embed_dim))))
        self.qlstm = self.vlstm = None
        self.vproj = self.qbow = self.vbow = None
        if variant in ("question_only", "lstm_q_i", "fda"):
            self.qlstm = LSTMParams("qlstm", d.embed_dim, d.state_dim, _sub(values, "qlstm"))
        if variant in ("image_only", "lstm_q_i", "fda"):
            self.vlstm = LSTMParams("vlstm", d.state_dim, d.state_dim, _sub(values, "vlstm"))
            if d.visual_dim != d.state_dim:
                self.vproj = (zeros("vproj.W", (d.state_dim, d.visual_dim)),
                              zeros("vproj.b", (d.state_dim,)))
        if variant == "q_plus_i":
            self.qbow = (zeros("qbow.W", (d.state_dim, d.embed_dim)), zeros("qbow.b", (d.state_dim,)))
            self.vbow = (zeros("vbow.W", (d.state_dim, d.visual_dim)), zeros("vbow.b", (d.state_dim,)))
        fusion_values = {k: v for k, v in values.items() if k.startswith(("fc.", "cls."))}
        self.fusion = FusionParams(d.state_dim, len(answers), fusion_values)
        self._ones = np.ones(d.state_dim)

    @classmethod
    def initialize(cls, variant: str, vocab: Vocabulary, answers: AnswerVocabulary,
                   dims: ModelDims, rng, matcher: WordVectors | None = None,
                   threshold: float = DEFAULT_THRESHOLD, scale: float = INIT_SCALE) -> "FDAModel":
        """Uniform(-scale, scale) weights, zero biases, forget-gate bias 1."""
        model = cls(variant, vocab, answers, dims, matcher, threshold)
        for p in model.params():
            if p.name.endswith(".b_f"):
                p.value[:] = 1.0
            elif p.name.endswith((".b", ".b_i", ".b_o", ".b_g")):
                continue
            else:
                p.value[:] = rng.uniform(-scale, scale, p.shape)
        return model

    def params(self) -> list[Param]:
        """Trainable parameter groups in a fixed order."""
        out = []
        if self.embed is not None:
            out.append(self.embed.param)
        for lstm in (self.qlstm, self.vlstm):
            if lstm is not None:
                out.extend(lstm.params())
        for pair in (self.vproj, self.qbow, self.vbow):
            if pair is not None:
                out.extend(pair)
        out.extend(self.fusion.params())
        return out

    def state_dict(self) -> dict:
        return {p.name: p.value for p in self.params()}

    def copy_state(self) -> dict:
        return {p.name: p.value.copy() for p in self.params()}

    def load_state(self, state: dict):
        for p in self.params():
            if state[p.name].shape != p.shape:
                raise ShapeError(f"load {p.name}", state[p.name].shape, p.shape)
            p.value[...] = state[p.name]

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    # --- forward --------------------------------------------------------

    def select(self, scene, tokens: Sequence[str]) -> SelectionTrace | None:
        """The visual feed this variant would use (None when it ignores the scene)."""
        if scene.visual_dim != self.dims.visual_dim:
            raise ShapeError("scene features vs model visual_dim",
                             (scene.visual_dim,), (self.dims.visual_dim,))
        if self.variant == "question_only":
            return None
        if self.variant == "fda":
            return select(tokens, scene, self.matcher, self.matcher, self.threshold)
        return global_only_trace(scene)

    def question_state(self, tape: Tape, tokens: Sequence[str]) -> Node:
        if self.variant == "image_only":
            return Node(self._ones)
        embedded = embed_tokens(self.vocab, self.embed, tokens, tape)
        if self.variant == "q_plus_i":
            if not embedded:
                mean = Node(np.zeros(self.dims.embed_dim))
            else:
                mean = tape.mean(embedded)
            return tape.affine(self.qbow[0], mean, self.qbow[1])
        return encode_question(tape, self.qlstm, embedded)

    def visual_state(self, tape: Tape, trace: SelectionTrace | None) -> Node:
        if self.variant == "question_only":
            return Node(self._ones)
        feed = [Node(f) for f in trace.feed_sequence]
        if self.variant == "q_plus_i":
            return tape.affine(self.vbow[0], feed[-1], self.vbow[1])
        return encode_visual(tape, self.vlstm, feed, self.vproj)

    def forward(self, tape: Tape, scene, tokens: Sequence[str],
                trace: SelectionTrace | None = None) -> Node:
        """Answer logits for one question."""
        if trace is None:
            trace = self.select(scene, tokens)
        q = self.question_state(tape, tokens)
        v = self.visual_state(tape, trace)
        return fusion_logits(tape, fuse(tape, q, v), self.fusion)

    def logits(self, scene, tokens, trace=None) -> np.ndarray:
        return self.forward(Tape(grad=False), scene, tokens, trace).value

    def predict_proba(self, scene, tokens, trace=None) -> np.ndarray:
        return softmax(self.logits(scene, tokens, trace))


def _sub(values: dict, prefix: str) -> dict:
    p = prefix + "."
    return {k[len(p):]: v for k, v in values.items() if k.startswith(p)}


def predict_open_ended(model: FDAModel, scene, tokens, trace=None):
    """(answer, probability, selection trace) for the arg-max answer."""
    if trace is None:
        trace = model.select(scene, tokens)
    probs = model.predict_proba(scene, tokens, trace)
    k = argmax_lowest(probs)
    return model.answers.answers[k], float(probs[k]), trace


def predict_multiple_choice(model: FDAModel, scene, tokens, choices: Sequence[str], trace=None):
    """Best of ``choices`` under the open-ended distribution."""
    if not choices:
        raise ValueError("multiple choice needs at least one candidate")
    if trace is None:
        trace = model.select(scene, tokens)
    probs = model.predict_proba(scene, tokens, trace)
    idx = [model.answers.get(c) for c in choices]
    pos = restricted_argmax(probs, idx)
    p = 0.0 if idx[pos] is None else float(probs[idx[pos]])
    return choices[pos], p, trace
