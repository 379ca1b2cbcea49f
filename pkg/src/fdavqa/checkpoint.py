"""Single-file checkpoints: JSON header, then float64 parameter payloads.

Layout::

    MAGIC
    uint64-le  header length
    header     UTF-8 JSON (config, vocabularies, group names and shapes)
    repeated per group, in header order:
        uint64-le  number of values
        float64-le values (C order)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fusion import AnswerVocabulary
from .lexicon import EmbeddingTable, Vocabulary, WordVectors
from .model import FDAModel, ModelDims
from .training import TrainConfig

MAGIC = b"FDAVQA-CKPT\n"
FORMAT_VERSION = 1
_U64 = struct.Struct("<Q")
_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    def __init__(self, found, expected=FORMAT_VERSION):
        self.found = found
        self.expected = expected
        super().__init__(f"checkpoint format version {found} is not supported "
                         f"(this build reads version {expected})")


@dataclass
class Checkpoint:
    model: FDAModel
    config: TrainConfig
    epoch: int = 0
    val_metric: float | None = None


def _stores_matcher(model: FDAModel) -> bool:
    # only the attending variant reads the matcher
    return model.variant == "fda" and model.matcher is not None


def _groups(model: FDAModel) -> list[tuple[str, np.ndarray]]:
    out = [(p.name, p.value) for p in model.params()]
    if _stores_matcher(model):
        out.append(("matcher", model.matcher.table.matrix))
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    groups = _groups(model)
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "variant": model.variant,
        "dims": [model.dims.embed_dim, model.dims.state_dim, model.dims.visual_dim],
        "threshold": model.threshold,
        "vocabulary": model.vocab.tokens,
        "answers": model.answers.answers,
        "matcher_tokens": model.matcher.vocab.tokens if _stores_matcher(model) else None,
        "groups": [{"name": n, "shape": list(v.shape)} for n, v in groups],
        "epoch": ckpt.epoch,
        "val_metric": ckpt.val_metric,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _U64.pack(len(raw)), raw]
    for _, v in groups:
        arr = np.ascontiguousarray(v, dtype=_F64)
        parts.append(_U64.pack(arr.size))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (hlen,) = _U64.unpack(take(_U64.size))
    try:
        header = json.loads(take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version)

    values = {}
    for g in header["groups"]:
        (n,) = _U64.unpack(take(_U64.size))
        shape = tuple(g["shape"])
        if n != int(np.prod(shape)):
            raise CheckpointError(f"group {g['name']}: {n} values for shape {shape}")
        values[g["name"]] = np.frombuffer(take(8 * n), dtype=_F64).astype(np.float64).reshape(shape)
    if pos != len(data):
        raise CheckpointError("trailing bytes after the last parameter group")

    matcher = None
    if header["matcher_tokens"] is not None:
        matcher = WordVectors(Vocabulary(header["matcher_tokens"]),
                              EmbeddingTable(values.pop("matcher"), trainable=False, name="matcher"))
    model = FDAModel(header["variant"], Vocabulary(header["vocabulary"]),
                     AnswerVocabulary(header["answers"]), ModelDims(*header["dims"]),
                     matcher, header["threshold"], values)
    expected = {p.name for p in model.params()}
    if expected != set(values):
        raise CheckpointError(f"parameter groups {sorted(set(values) ^ expected)} do not match "
                              f"variant {header['variant']!r}")
    return Checkpoint(model, TrainConfig.from_dict(header["config"]), header["epoch"],
                      header["val_metric"])


def save_checkpoint(path, ckpt: Checkpoint):
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
