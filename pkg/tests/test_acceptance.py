"""Acceptance checks; each test prints one PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
The ablation fixture trains 15 models (about 3 minutes on one core).
"""

import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from fdavqa.ablation import run_ablation
from fdavqa.attention import match_objects
from fdavqa.checkpoint import loads
from fdavqa.cli import main
from fdavqa.gradcheck import TOY_ANSWERS, TOY_DIMS, TOY_WORLD, check_variant_gradients
from fdavqa.lexicon import EmbeddingTable, LabelEmbeddings, Vocabulary, WordVectors
from fdavqa.model import VARIANTS, predict_open_ended
from fdavqa.sceneworld import (Scene, SceneConfig, SceneObject, answer_universe, generate_dataset,
                               generate_splits, plural, world_word_vectors)
from fdavqa.training import TrainConfig, build_answer_vocabulary, predict_dataset

from conftest import make_scene

pytestmark = pytest.mark.acceptance

SEED = 7
SIZES = {"train": 2000, "val": 500, "test": 500}
CONFIG = TrainConfig(epochs=15, learning_rate=3e-3)
SEEDS = (0, 1, 2)
BASELINES = ("question_only", "image_only", "q_plus_i", "lstm_q_i")


def verdict(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def experiment():
    world = SceneConfig()
    splits = generate_splits(SEED, world, SIZES)
    words = world_word_vectors(world)
    answers = build_answer_vocabulary(splits["train"], answer_universe(world))
    start = time.perf_counter()
    report = run_ablation(splits["train"], splits["test"], CONFIG, splits["val"], words, answers,
                          VARIANTS, SEEDS, keep_models=True)
    return {"report": report, "splits": splits, "seconds": time.perf_counter() - start}


# --- gradient integrity -----------------------------------------------------


def test_gradient_integrity(capsys):
    start = time.perf_counter()
    r = check_variant_gradients("fda", seed=0, tolerance=1e-4)
    seconds = time.perf_counter() - start
    ok = r.passed and r.worst < 1e-4 and seconds < 60
    verdict(capsys, "gradient check (fda, toy dims)", ok,
            f"max rel err {r.worst:.2e} < 1e-4 over {len(r.lines())} groups, {seconds:.1f}s < 60s, "
            f"dims {TOY_DIMS}, K={len(TOY_ANSWERS)}, <= {TOY_WORLD.max_objects} objects")


# --- selector oracle --------------------------------------------------------


def _cos(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return 0.0 if na == 0 or nb == 0 else float(a @ b) / (na * nb)


def brute_threshold_filter(tokens, scene, labels, words, t):
    """Every (word, object) pair above t, ordered by word position then decreasing similarity."""
    pairs = []
    for pos, w in enumerate(tokens):
        for k, obj in enumerate(scene.objects):
            s = _cos(words.vector(w), labels.vector(obj.label))
            if s > t:
                pairs.append((pos, -s, k))
    pairs.sort()
    return [(p, k) for p, _, k in pairs]


def _random_instance(rng):
    n_names = int(rng.integers(2, 9))
    names = [f"n{i}" for i in range(n_names)]
    dim = int(rng.integers(2, 6))
    matrix = np.vstack([np.zeros(dim), rng.normal(size=(n_names, dim))])
    words = WordVectors(Vocabulary(names), EmbeddingTable(matrix, trainable=False))
    labels = LabelEmbeddings.from_word_vectors(words, names)
    objs = [SceneObject(names[int(rng.integers(n_names))], "red", "small", (0, 0, .1, .1), np.zeros(3))
            for _ in range(int(rng.integers(1, 9)))]
    scene = Scene("r", objs, np.zeros(3))
    pool = names + ["unk"]
    tokens = [pool[int(rng.integers(len(pool)))] for _ in range(int(rng.integers(0, 9)))]
    return tokens, scene, labels, words


def test_selector_oracle(capsys):
    rng = np.random.default_rng(2024)
    mismatches = violations = 0
    for _ in range(1000):
        tokens, scene, labels, words = _random_instance(rng)
        found = {}
        for t in (0.3, 0.5, 0.7):
            got = [(m.word_position, m.object_index) for m in match_objects(tokens, scene, labels, words, t)]
            mismatches += got != brute_threshold_filter(tokens, scene, labels, words, t)
            found[t] = set(got)
        violations += not (found[0.7] <= found[0.5] <= found[0.3])
    verdict(capsys, "selector oracle equivalence", mismatches == 0 and violations == 0,
            f"1000 instances x 3 thresholds, {mismatches} mismatches, {violations} monotonicity violations")


# --- ablation ---------------------------------------------------------------


def test_ablation_runtime(experiment, capsys):
    s = experiment["seconds"]
    verdict(capsys, "ablation runtime", s < 15 * 60, f"{s / 60:.1f} min < 15 min for 5 variants x 3 seeds")


def test_fda_beats_no_attention_by_ten_points(experiment, capsys):
    r = experiment["report"]
    fda, lstm = r.mean("fda").all, r.mean("lstm_q_i").all
    verdict(capsys, "FDA vs lstm_q_i overall", fda - lstm >= 0.10,
            f"{100 * fda:.2f} - {100 * lstm:.2f} = {100 * (fda - lstm):.2f} >= 10 points")


def test_fda_color_conflict_accuracy(experiment, capsys):
    r = experiment["report"]
    cc = r.mean_color_conflict("fda")
    verdict(capsys, "FDA on conflicting-distractor color questions", cc >= 0.90,
            f"{100 * cc:.2f}% >= 90% (n={r.n_conflict})")


def test_no_attention_near_color_marginal(experiment, capsys):
    r = experiment["report"]
    cc, marginal = r.mean_color_conflict("lstm_q_i"), r.color_marginal
    verdict(capsys, "lstm_q_i vs color marginal", abs(cc - marginal) <= 0.15,
            f"|{100 * cc:.2f} - {100 * marginal:.2f}| <= 15 points (marginal answer "
            f"{r.color_marginal_answer!r})")


def test_color_ordering(experiment, capsys):
    r = experiment["report"]
    f, l, q = (r.mean_color_conflict(v) for v in ("fda", "lstm_q_i", "question_only"))
    verdict(capsys, "color ordering FDA > lstm_q_i > question_only", f > l > q,
            f"{100 * f:.2f} > {100 * l:.2f} > {100 * q:.2f}")


def test_image_only_tracks_answer_prior(experiment, capsys):
    r = experiment["report"]
    img, prior = r.mean("image_only"), r.prior
    gaps = {k: abs(getattr(img, k) - getattr(prior, k)) for k in ("yesno", "number")}
    verdict(capsys, "image_only within 5 points of the answer prior", max(gaps.values()) <= 0.05,
            ", ".join(f"{k} {100 * getattr(img, k):.2f} vs {100 * getattr(prior, k):.2f}"
                      for k in gaps) + f" (prior answer {r.prior_answer!r})")


def test_question_only_beats_image_only(experiment, capsys):
    r = experiment["report"]
    q, i = r.mean("question_only").all, r.mean("image_only").all
    verdict(capsys, "question_only > image_only overall", q > i, f"{100 * q:.2f} > {100 * i:.2f}")


def test_fda_beats_every_baseline_both_modes(experiment, capsys):
    r = experiment["report"]
    worst = min(r.mean("fda", m).all - r.mean(v, m).all for m in r.modes for v in BASELINES)
    best = {m: max(BASELINES, key=lambda v: r.mean(v, m).all) for m in r.modes}
    verdict(capsys, "FDA All exceeds every baseline (open and mc)", worst > 0,
            "; ".join(f"{m}: {100 * r.mean('fda', m).all:.2f} vs best baseline {best[m]} "
                      f"{100 * r.mean(best[m], m).all:.2f}" for m in r.modes))


def test_mc_dominates_open(experiment, capsys):
    r = experiment["report"]
    test = experiment["splits"]["test"]
    covered = all(q.answer in q.choices and len(q.choices) == 18 for q in test.samples)
    bad = [(o.variant, o.seed) for o, m in
           ((o, next(m for m in r.select(o.variant, "mc") if m.seed == o.seed))
            for v in VARIANTS for o in r.select(v, "open"))
           if m.metrics.all < o.metrics.all]
    verdict(capsys, "multiple-choice >= open-ended per run", covered and not bad,
            f"{len(VARIANTS) * len(SEEDS)} runs, ground truth in all 18 choices: {covered}, "
            f"violations: {bad or 'none'}")


def test_validation_loss_decreases_early(experiment, capsys):
    hist = experiment["report"].histories[("fda", 0)]
    losses = [h["loss"] for h in hist if h["split"] == "val" and h["mode"] == "open"][:3]
    ok = len(losses) == 3 and losses[0] > losses[1] > losses[2]
    verdict(capsys, "FDA validation loss strictly decreasing over epochs 1-3", ok,
            " > ".join(f"{x:.4f}" for x in losses))


def test_trained_model_names_red_ball(experiment, capsys):
    model = experiment["report"].models[("fda", 0)]
    scene = make_scene([("ball", "red")], SceneConfig())
    ans, p, trace = predict_open_ended(model, scene, "what color is the ball".split())
    verdict(capsys, "one red ball, 'what color is the ball'", ans == "red",
            f"answer {ans!r} (p={p:.3f}), matched {[m.label for m in trace.matches]}")


# --- reproducibility --------------------------------------------------------


def test_checkpoint_round_trip(experiment, capsys):
    r = experiment["report"]
    test = experiment["splits"]["test"]
    diffs = 0
    for key, blob in r.checkpoints.items():
        model = r.models[key]
        back = loads(blob).model
        for mode in r.modes:
            diffs += predict_dataset(model, test, mode) != predict_dataset(back, test, mode)
    verdict(capsys, "checkpoint round trip", diffs == 0,
            f"{len(r.checkpoints)} checkpoints x {len(r.modes)} modes x {len(test)} samples, "
            f"{diffs} differing prediction lists")


def test_ablate_determinism(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-data", "--seed", "3", "--out", str(data), "--train", "200", "--val", "50",
                 "--test", "50"]) == 0
    argv = ["ablate", "--data", str(data), "--seeds", "0,1", "--epochs", "2", "--embed-dim", "8",
            "--state-dim", "16"]
    for name in ("a", "b"):
        assert main([*argv, "--out", str(tmp_path / name)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    n_ckpt = sum(f.suffix == ".ckpt" for f in files)
    verdict(capsys, "ablate determinism", same and n_ckpt == len(VARIANTS) * 2,
            f"{len(files)} files ({n_ckpt} checkpoints) byte-identical across two invocations")


# --- dataset oracle ---------------------------------------------------------


def scene_oracle(tokens, scene):
    """Answer recomputed from the object list alone."""
    counts = Counter(o.label for o in scene.objects)
    if tokens[0] == "what":
        (obj,) = [o for o in scene.objects if o.label == tokens[4]]
        return {"color": obj.color, "size": obj.size}[tokens[1]]
    if tokens[0] == "how":
        return str(min(sum(c for n, c in counts.items() if plural(n) == tokens[2]), 9))
    return "yes" if counts.get(tokens[3], 0) else "no"


def test_dataset_oracle(capsys):
    data = generate_dataset(11, SceneConfig(), 10_000)
    wrong = sum(scene_oracle(q.tokens, s) != q.answer for q, s in data.pairs())
    verdict(capsys, "dataset oracle agreement", wrong == 0 and len(data) == 10_000,
            f"{len(data) - wrong}/{len(data)} stored answers match the scene oracle")


if __name__ == "__main__":
    sys.exit(pytest.main(["-s", "-q", str(Path(__file__))]))
