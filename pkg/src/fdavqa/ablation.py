"""Train and score every variant on one shared split."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import Checkpoint, dumps
from .model import VARIANT_TITLES, VARIANTS, check_variant
from .sceneworld import Dataset, has_conflicting_distractor
from .training import (METRIC_COLUMNS, MetricsTable, TrainConfig, accuracy, answer_prior,
                       predict_dataset, train)

log = logging.getLogger(__name__)

REPORT_COLUMNS = (("All", "all"), ("Y/N", "yesno"), ("Other", "other"), ("Num", "number"))
CSV_COLUMNS = ("variant", "title", "mode", "seed", "all", "yesno", "other", "number",
               "color_conflict", "best_epoch", "checkpoint_sha256")


@dataclass
class AblationRun:
    variant: str
    seed: int
    mode: str
    metrics: MetricsTable
    color_conflict: float | None
    best_epoch: int
    checkpoint_sha256: str


@dataclass
class AblationReport:
    runs: list
    variants: tuple
    seeds: tuple
    modes: tuple
    prior_answer: str
    prior: MetricsTable
    color_marginal_answer: str | None
    color_marginal: float | None
    n_conflict: int
    models: dict = field(default_factory=dict, repr=False, compare=False)
    checkpoints: dict = field(default_factory=dict, repr=False, compare=False)
    histories: dict = field(default_factory=dict, repr=False, compare=False)

    def select(self, variant: str, mode: str = "open") -> list[AblationRun]:
        return [r for r in self.runs if r.variant == variant and r.mode == mode]

    def mean(self, variant: str, mode: str = "open") -> MetricsTable:
        """Seed-averaged metrics; a bucket is None when every seed left it empty."""
        runs = self.select(variant, mode)
        if not runs:
            raise KeyError(f"no runs for {variant!r} in mode {mode!r}")
        values = {}
        for k in METRIC_COLUMNS:
            xs = [getattr(r.metrics, k) for r in runs if getattr(r.metrics, k) is not None]
            values[k] = float(np.mean(xs)) if xs else None
        return MetricsTable(counts=dict(runs[0].metrics.counts), **values)

    def mean_color_conflict(self, variant: str) -> float | None:
        xs = [r.color_conflict for r in self.select(variant, "open") if r.color_conflict is not None]
        return float(np.mean(xs)) if xs else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.runs:
            m = r.metrics
            w.writerow([r.variant, VARIANT_TITLES[r.variant], r.mode, r.seed,
                        *(_num(getattr(m, k)) for _, k in REPORT_COLUMNS),
                        _num(r.color_conflict), r.best_epoch, r.checkpoint_sha256])
        for mode in self.modes:
            for v in self.variants:
                m = self.mean(v, mode)
                cc = self.mean_color_conflict(v) if mode == "open" else None
                w.writerow([v, VARIANT_TITLES[v], mode, "mean",
                            *(_num(getattr(m, k)) for _, k in REPORT_COLUMNS), _num(cc), "", ""])
        w.writerow(["answer_prior", f"prior={self.prior_answer}", "open", "",
                    *(_num(getattr(self.prior, k)) for _, k in REPORT_COLUMNS),
                    _num(self.color_marginal), "", ""])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned tables, one per mode, in percent."""
        titles = [VARIANT_TITLES[v] for v in self.variants]
        width = max(len(t) for t in titles + ["Answer prior"])
        lines = []
        for mode in self.modes:
            name = "Open-ended" if mode == "open" else "Multiple-choice"
            lines.append(f"{name} (mean over seeds {', '.join(map(str, self.seeds))})")
            head = f"{'':<{width}}" + "".join(f"{c:>8}" for c, _ in REPORT_COLUMNS)
            if mode == "open":
                head += f"{'Color*':>8}"
            lines.append(head)
            for v, t in zip(self.variants, titles):
                m = self.mean(v, mode)
                row = f"{t:<{width}}" + "".join(f"{_pct(getattr(m, k)):>8}" for _, k in REPORT_COLUMNS)
                if mode == "open":
                    row += f"{_pct(self.mean_color_conflict(v)):>8}"
                lines.append(row)
            if mode == "open":
                row = f"{'Answer prior':<{width}}" + "".join(
                    f"{_pct(getattr(self.prior, k)):>8}" for _, k in REPORT_COLUMNS)
                lines.append(row + f"{_pct(self.color_marginal):>8}")
            lines.append("")
        lines.append(f"* color questions whose scene holds a differently colored object "
                     f"(n={self.n_conflict}); prior row uses the most frequent training color")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, txt_path = out / "ablation.csv", out / "ablation.txt"
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        txt_path.write_text(self.to_text(), encoding="utf-8")
        return csv_path, txt_path


def _num(x):
    return "" if x is None else f"{x:.6f}"


def _pct(x):
    return "-" if x is None else f"{100 * x:.2f}"


def conflict_subset(dataset: Dataset) -> list[int]:
    """Indices of color questions with a conflicting distractor in the scene."""
    return [i for i, (q, s) in enumerate(dataset.pairs()) if has_conflicting_distractor(q, s)]


def color_marginal(train_data: Dataset) -> str | None:
    counts = Counter(q.answer for q in train_data.samples if q.qtype == "color")
    if not counts:
        return None
    return min(counts, key=lambda a: (-counts[a], a))


def run_ablation(train_data: Dataset, test_data: Dataset, config: TrainConfig,
                 val_data: Dataset | None = None, matcher=None, answers=None,
                 variants: Sequence[str] = VARIANTS, seeds: Sequence[int] = (0, 1, 2),
                 checkpoint_dir=None, keep_models: bool = False) -> AblationReport:
    """Every (variant, seed) pair shares the split; only the variant tag and seed change."""
    variants = tuple(check_variant(v) for v in variants)
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    modes = ("open", "mc") if test_data.samples and all(q.choices for q in test_data.samples) \
        else ("open",)
    conflict = conflict_subset(test_data)
    samples = test_data.samples
    runs, models, ckpts, histories = [], {}, {}, {}
    for v in variants:
        for s in seeds:
            cfg = replace(config, variant=v, seed=s)
            log.info("ablation: training %s seed %d", v, s)
            result = train(cfg, train_data, val_data, matcher, answers)
            blob = dumps(Checkpoint(result.model, cfg, result.best_epoch, result.best_metric))
            sha = hashlib.sha256(blob).hexdigest()
            if checkpoint_dir is not None:
                path = Path(checkpoint_dir) / f"{v}-s{s}.ckpt"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(blob)
            if keep_models:
                models[(v, s)] = result.model
                ckpts[(v, s)] = blob
                histories[(v, s)] = result.history
            traces = [result.model.select(sc, q.tokens) for q, sc in test_data.pairs()]
            for mode in modes:
                preds = [a for a, _ in predict_dataset(result.model, test_data, mode, traces)]
                metrics = MetricsTable.from_predictions(samples, preds)
                cc = None
                if mode == "open" and conflict:
                    cc = accuracy([samples[i] for i in conflict], [preds[i] for i in conflict])
                runs.append(AblationRun(v, s, mode, metrics, cc, result.best_epoch, sha))

    prior_answer = answer_prior(train_data)
    prior = MetricsTable.from_predictions(samples, [prior_answer] * len(samples))
    marginal = color_marginal(train_data)
    marginal_acc = None
    if marginal is not None and conflict:
        marginal_acc = accuracy([samples[i] for i in conflict], [marginal] * len(conflict))
    return AblationReport(runs, variants, seeds, modes, prior_answer, prior, marginal,
                          marginal_acc, len(conflict), models, ckpts, histories)
