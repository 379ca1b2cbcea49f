import pytest

from fdavqa.ablation import (CSV_COLUMNS, color_marginal, conflict_subset, run_ablation)
from fdavqa.checkpoint import loads
from fdavqa.model import VARIANTS
from fdavqa.sceneworld import has_conflicting_distractor
from fdavqa.training import TrainConfig

CFG = TrainConfig(epochs=1, learning_rate=5e-3, embed_dim=8, state_dim=16)


@pytest.fixture(scope="module")
def report(small_splits, words, tmp_path_factory):
    ckdir = tmp_path_factory.mktemp("ck")
    r = run_ablation(small_splits["train"], small_splits["test"], CFG, small_splits["val"], words,
                     seeds=(0, 1), checkpoint_dir=ckdir, keep_models=True)
    return r, ckdir


def test_report_covers_every_variant_seed_and_mode(report):
    r, ckdir = report
    assert r.modes == ("open", "mc") and r.seeds == (0, 1) and r.variants == VARIANTS
    assert len(r.runs) == len(VARIANTS) * 2 * 2
    for v in VARIANTS:
        for s in (0, 1):
            blob = (ckdir / f"{v}-s{s}.ckpt").read_bytes()
            assert blob == r.checkpoints[(v, s)]
            assert loads(blob).config.variant == v and loads(blob).config.seed == s


def test_csv_layout_and_means(report):
    r, _ = report
    lines = r.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(r.runs) + 2 * len(VARIANTS) + 1
    assert lines[-1].startswith(f"answer_prior,prior={r.prior_answer},open,")
    runs = r.select("fda", "open")
    assert r.mean("fda").all == pytest.approx(sum(x.metrics.all for x in runs) / 2)
    with pytest.raises(KeyError):
        r.mean("fda", "nope")
    text = r.to_text()
    assert "Open-ended" in text and "Multiple-choice" in text and "Color*" in text


def test_mc_never_below_open(report):
    r, _ = report
    for v in VARIANTS:
        for o, m in zip(r.select(v, "open"), r.select(v, "mc")):
            assert m.metrics.all >= o.metrics.all


def test_ablation_is_byte_identical_across_runs(report, small_splits, words, tmp_path):
    r, _ = report
    again = run_ablation(small_splits["train"], small_splits["test"], CFG, small_splits["val"], words,
                         seeds=(0, 1))
    assert again.to_csv() == r.to_csv() and again.to_text() == r.to_text()
    a = r.write(tmp_path / "a")
    b = again.write(tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_conflict_subset_and_marginal(small_splits):
    data = small_splits["test"]
    idx = conflict_subset(data)
    pairs = data.pairs()
    assert all(pairs[i][0].qtype == "color" for i in idx)
    assert len(idx) == sum(has_conflicting_distractor(q, s) for q, s in pairs)
    assert color_marginal(small_splits["train"]) in {q.answer for q in small_splits["train"].samples}
    with pytest.raises(ValueError):
        run_ablation(small_splits["train"], data, CFG, seeds=())
