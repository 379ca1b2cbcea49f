import json
import struct
from dataclasses import replace

import numpy as np
import pytest

from fdavqa.checkpoint import (MAGIC, Checkpoint, CheckpointError, CheckpointVersionError, dumps,
                               load_checkpoint, loads, save_checkpoint)
from fdavqa.model import VARIANTS
from fdavqa.training import TrainConfig, predict_dataset, train

CFG = TrainConfig(epochs=1, learning_rate=5e-3, embed_dim=8, state_dim=16)


@pytest.fixture(scope="module")
def trained(small_splits, words):
    return {v: train(replace(CFG, variant=v), small_splits["train"], small_splits["val"], words)
            for v in VARIANTS}


@pytest.mark.parametrize("variant", VARIANTS)
def test_round_trip_is_bit_identical(trained, small_splits, variant, tmp_path):
    r = trained[variant]
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, Checkpoint(r.model, r.config, r.best_epoch, r.best_metric))
    back = load_checkpoint(path)
    assert back.config == r.config and back.epoch == r.best_epoch and back.val_metric == r.best_metric
    a, b = r.model.state_dict(), back.model.state_dict()
    assert a.keys() == b.keys()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    data = small_splits["test"]
    for mode in ("open", "mc"):
        assert predict_dataset(r.model, data, mode) == predict_dataset(back.model, data, mode)
    assert dumps(back) == path.read_bytes()


def _with_header(blob, **changes):
    (hlen,) = struct.unpack("<Q", blob[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(blob[start:start + hlen])
    header.update(changes)
    raw = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(raw)) + raw + blob[start + hlen:]


def test_version_mismatch_names_both_versions(trained):
    blob = dumps(Checkpoint(trained["fda"].model, CFG))
    with pytest.raises(CheckpointVersionError) as e:
        loads(_with_header(blob, format_version=99))
    assert e.value.found == 99 and "99" in str(e.value) and "version 1" in str(e.value)


def test_corrupt_files_are_rejected(trained):
    blob = dumps(Checkpoint(trained["fda"].model, CFG))
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"PK" + blob[2:])
    with pytest.raises(CheckpointError, match="truncated"):
        loads(blob[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        loads(blob + b"\0")
    with pytest.raises(CheckpointError, match="header"):
        loads(MAGIC + struct.pack("<Q", 4) + b"{{{{")
    with pytest.raises(CheckpointError, match="do not match"):
        loads(_with_header(blob, variant="question_only"))


def test_matcher_is_stored_only_when_present(trained, words):
    fda = loads(dumps(Checkpoint(trained["fda"].model, CFG))).model
    assert np.array_equal(fda.matcher.table.matrix, words.table.matrix)
    assert fda.matcher.vocab.tokens == words.vocab.tokens
    assert loads(dumps(Checkpoint(trained["question_only"].model, CFG))).model.matcher is None


def test_zero_epochs_saves_seeded_initialization(small_splits, words):
    cfg = replace(CFG, epochs=0, seed=11)
    a = train(cfg, small_splits["train"], None, words).model
    b = train(cfg, small_splits["train"], None, words).model
    assert dumps(Checkpoint(a, cfg)) == dumps(Checkpoint(b, cfg))
    c = train(replace(cfg, seed=12), small_splits["train"], None, words).model
    assert dumps(Checkpoint(a, cfg)) != dumps(Checkpoint(c, cfg))
