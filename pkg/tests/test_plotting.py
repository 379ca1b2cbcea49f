import xml.etree.ElementTree as ET

import pytest

from fdavqa.ablation import run_ablation
from fdavqa.plotting import plot_metrics_csv
from fdavqa.training import TrainConfig, train, write_history_csv

CFG = TrainConfig(epochs=2, learning_rate=5e-3, embed_dim=8, state_dim=16)
SVG = "{http://www.w3.org/2000/svg}"


def test_history_plot(tmp_path, small_splits, words):
    r = train(CFG, small_splits["train"], small_splits["val"], words)
    csv_path = tmp_path / "h.csv"
    write_history_csv(csv_path, r.history)
    out = plot_metrics_csv(csv_path, tmp_path / "h.svg")
    root = ET.parse(out).getroot()
    assert root.tag == SVG + "svg"
    assert len(root.findall(f"{SVG}polyline")) == 3
    texts = {t.text for t in root.iter(SVG + "text")}
    assert {"Training loss", "Validation accuracy", "val open", "val mc"} <= texts


def test_ablation_plot(tmp_path, small_splits, words):
    rep = run_ablation(small_splits["train"], small_splits["test"], CFG, None, words,
                       variants=("fda", "question_only"), seeds=(0,))
    csv_path, _ = rep.write(tmp_path)
    root = ET.parse(plot_metrics_csv(csv_path, tmp_path / "a.svg")).getroot()
    texts = {t.text for t in root.iter(SVG + "text")}
    assert {"Ablation (open)", "Ablation (mc)", "FDA", "Question"} <= texts
    assert len(root.findall(f"{SVG}rect")) > 8


def test_empty_history_and_unknown_csv(tmp_path):
    h = tmp_path / "empty.csv"
    h.write_text("epoch,split,mode,variant,all,yesno,number,other,loss\n")
    assert "(no data)" in plot_metrics_csv(h, tmp_path / "e.svg").read_text()
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="not a training history"):
        plot_metrics_csv(bad, tmp_path / "b.svg")
