"""Token vocabularies, embedding tables and word-vector files."""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .numerics import DTYPE, Param, Tape, cosine_similarity

UNK = "<unk>"
INIT_SCALE = 0.08

_PUNCT = re.compile(r"[^\w\s']")


class EmbeddingFileError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


class Vocabulary:
    """Dense token index with ``<unk>`` reserved at index 0."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens and tokens[0] == UNK:
            tokens = tokens[1:]
        self.tokens = [UNK] + tokens
        self.index = {}
        for i, t in enumerate(self.tokens):
            if t in self.index:
                raise ValueError(f"duplicate token {t!r}")
            self.index[t] = i

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    def lookup(self, token: str) -> int:
        return self.index.get(token, 0)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, 0) for t in tokens]

    def token(self, i: int) -> str:
        return self.tokens[i]


def build_vocabulary(corpus: Iterable) -> Vocabulary:
    """Vocabulary ordered by descending frequency, then lexicographically.

    ``corpus`` yields either raw strings (tokenized with :func:`tokenize`) or
    token lists.
    """
    counts: Counter = Counter()
    seen = False
    for item in corpus:
        seen = True
        counts.update(tokenize(item) if isinstance(item, str) else item)
    counts.pop(UNK, None)
    if not seen or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(ordered)


class EmbeddingTable:
    """A ``len(vocab) x dim`` matrix held in a :class:`Param`."""

    def __init__(self, matrix, trainable: bool = True, name: str = "embed"):
        self.param = Param(name, matrix, frozen=not trainable)
        if self.param.value.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-d, got {self.param.value.shape}")

    @classmethod
    def random(cls, vocab_size: int, dim: int, rng, scale: float = INIT_SCALE,
               name: str = "embed") -> "EmbeddingTable":
        return cls(rng.uniform(-scale, scale, size=(vocab_size, dim)), True, name)

    @property
    def matrix(self) -> np.ndarray:
        return self.param.value

    @property
    def trainable(self) -> bool:
        return not self.param.frozen

    @property
    def dim(self) -> int:
        return self.param.value.shape[1]

    def __len__(self):
        return self.param.value.shape[0]


def embed_tokens(vocab: Vocabulary, table: EmbeddingTable, tokens: Sequence[str],
                 tape: Tape | None = None):
    """One row per token (unknowns map to the ``<unk>`` row).

    With a ``tape`` the rows are returned as nodes whose gradients flow into
    the looked-up rows of a trainable table; otherwise plain arrays.
    """
    if len(table) != len(vocab):
        raise ValueError(f"table has {len(table)} rows for a vocabulary of {len(vocab)}")
    ids = vocab.encode(tokens)
    if tape is None:
        return [table.matrix[i].copy() for i in ids]
    return tape.rows(table.param, ids)


class WordVectors:
    """Frozen word vectors used for similarity matching."""

    def __init__(self, vocab: Vocabulary, table: EmbeddingTable):
        if len(vocab) != len(table):
            raise ValueError("vocabulary and table sizes differ")
        self.vocab = vocab
        self.table = table
        self._zero = np.zeros(table.dim, dtype=DTYPE)

    @property
    def dim(self) -> int:
        return self.table.dim

    def __contains__(self, token):
        return token in self.vocab and self.vocab.lookup(token) != 0

    def vector(self, token: str) -> np.ndarray:
        i = self.vocab.lookup(token)
        return self._zero if i == 0 else self.table.matrix[i]

    def similarity(self, a: str, b: str) -> float:
        return cosine_similarity(self.vector(a), self.vector(b))


class LabelEmbeddings:
    """Object label -> vector; unknown labels resolve to the zero vector."""

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int):
        self.dim = dim
        self._vectors = {k: np.asarray(v, dtype=DTYPE) for k, v in vectors.items()}
        for k, v in self._vectors.items():
            if v.shape != (dim,):
                raise ValueError(f"label {k!r} has shape {v.shape}, expected ({dim},)")
        self._zero = np.zeros(dim, dtype=DTYPE)

    @classmethod
    def from_word_vectors(cls, words: WordVectors, labels: Iterable[str]) -> "LabelEmbeddings":
        return cls({lab: words.vector(lab) for lab in labels if lab in words}, words.dim)

    def __contains__(self, label):
        return label in self._vectors

    def vector(self, label: str) -> np.ndarray:
        return self._vectors.get(label, self._zero)


def load_pretrained_embeddings(path) -> tuple[Vocabulary, EmbeddingTable]:
    """Read ``token v1 ... vd`` lines into a frozen table.

    Row 0 of the returned table is the all-zero ``<unk>`` vector.
    """
    path = Path(path)
    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split(" ")
            token, fields = parts[0], parts[1:]
            if not token or not fields:
                raise EmbeddingFileError(path, lineno, "expected a token followed by values")
            try:
                values = [float(x) for x in fields]
            except ValueError:
                raise EmbeddingFileError(path, lineno, "non-numeric field") from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingFileError(
                    path, lineno, f"dimension {len(values)} differs from {dim}")
            if token in seen or token == UNK:
                raise EmbeddingFileError(
                    path, lineno, f"duplicate token {token!r} (first at line {seen.get(token, '?')})")
            seen[token] = lineno
            tokens.append(token)
            rows.append(values)
    if dim is None:
        raise EmbeddingFileError(path, 0, "no embeddings found")
    matrix = np.zeros((len(tokens) + 1, dim), dtype=DTYPE)
    if rows:
        matrix[1:] = np.array(rows, dtype=DTYPE)
    return Vocabulary(tokens), EmbeddingTable(matrix, trainable=False, name="matcher")


def save_pretrained_embeddings(path, vocab: Vocabulary, table: EmbeddingTable):
    """Write every non-``<unk>`` row with round-trip float precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i in range(1, len(vocab)):
            vals = " ".join(repr(float(x)) for x in table.matrix[i])
            f.write(f"{vocab.token(i)} {vals}\n")
