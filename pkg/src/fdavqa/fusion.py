"""Multimodal fusion and the answer classifier."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .numerics import Node, Param, ShapeError, Tape, softmax

INIT_SCALE = 0.08


class AnswerVocabulary:
    """Closed answer set, ordered by training frequency then lexicographically."""

    def __init__(self, answers: Sequence[str]):
        self.answers = list(answers)
        if not self.answers:
            raise ValueError("answer vocabulary is empty")
        self.index = {a: i for i, a in enumerate(self.answers)}
        if len(self.index) != len(self.answers):
            raise ValueError("duplicate answers")

    @classmethod
    def from_answers(cls, answers: Iterable[str], top_k: int | None = None,
                     universe: Iterable[str] = ()) -> "AnswerVocabulary":
        """Top-``top_k`` answers by frequency; ``universe`` entries never seen
        in training are appended (lexicographically) after the seen ones."""
        counts = Counter(answers)
        ordered = sorted(counts, key=lambda a: (-counts[a], a))
        if top_k is not None:
            ordered = ordered[:top_k]
        unseen = sorted(set(universe) - set(ordered))
        if top_k is not None:
            unseen = unseen[:max(0, top_k - len(ordered))]
        return cls(ordered + unseen)

    def __len__(self):
        return len(self.answers)

    def __contains__(self, answer):
        return answer in self.index

    def __eq__(self, other):
        return isinstance(other, AnswerVocabulary) and self.answers == other.answers

    def __repr__(self):
        return f"AnswerVocabulary(K={len(self)})"

    def get(self, answer: str, default=None):
        return self.index.get(answer, default)


class FusionParams:
    """One tanh hidden layer followed by the K-way classifier."""

    def __init__(self, state_dim: int, n_answers: int, values: dict | None = None,
                 hidden_dim: int | None = None):
        hidden_dim = hidden_dim or state_dim
        values = values or {}
        self.fc_W = Param("fc.W", values.get("fc.W", np.zeros((hidden_dim, state_dim))))
        self.fc_b = Param("fc.b", values.get("fc.b", np.zeros(hidden_dim)))
        self.cls_W = Param("cls.W", values.get("cls.W", np.zeros((n_answers, hidden_dim))))
        self.cls_b = Param("cls.b", values.get("cls.b", np.zeros(n_answers)))
        if self.fc_W.shape != (hidden_dim, state_dim) or self.cls_W.shape != (n_answers, hidden_dim):
            raise ShapeError("fusion stack", self.fc_W.shape, self.cls_W.shape)

    @classmethod
    def init(cls, state_dim, n_answers, rng, scale=INIT_SCALE, hidden_dim=None):
        hidden_dim = hidden_dim or state_dim
        return cls(state_dim, n_answers, {
            "fc.W": rng.uniform(-scale, scale, (hidden_dim, state_dim)),
            "fc.b": np.zeros(hidden_dim),
            "cls.W": rng.uniform(-scale, scale, (n_answers, hidden_dim)),
            "cls.b": np.zeros(n_answers),
        }, hidden_dim)

    @property
    def n_answers(self) -> int:
        return self.cls_W.shape[0]

    def params(self) -> list[Param]:
        return [self.fc_W, self.fc_b, self.cls_W, self.cls_b]


def fuse(tape: Tape, q_state: Node, v_state: Node) -> Node:
    """tanh(question state) * relu(visual state), elementwise."""
    if q_state.shape != v_state.shape:
        raise ShapeError("fuse", q_state.shape, v_state.shape)
    return tape.mul(tape.tanh(q_state), tape.relu(v_state))


def fusion_logits(tape: Tape, fused: Node, params: FusionParams) -> Node:
    hidden = tape.tanh(tape.affine(params.fc_W, fused, params.fc_b))
    return tape.affine(params.cls_W, hidden, params.cls_b)


def classify(fused, params: FusionParams, tape: Tape | None = None) -> np.ndarray:
    """Probability distribution over the K answers."""
    tape = tape or Tape(grad=False)
    if not isinstance(fused, Node):
        fused = Node(fused)
    return softmax(fusion_logits(tape, fused, params).value)


def argmax_lowest(scores) -> int:
    """Index of the maximum; ties go to the lowest index."""
    return int(np.argmax(scores))


def restricted_argmax(probs, candidate_indices: Sequence[int | None]) -> int | None:
    """Position in ``candidate_indices`` with the highest probability.

    ``None`` entries (answers outside the vocabulary) score zero. Ties go to the
    candidate with the lowest answer index.
    """
    if not candidate_indices:
        raise ValueError("no candidates to choose from")
    best, best_key = None, None
    for pos, idx in enumerate(candidate_indices):
        p = 0.0 if idx is None else float(probs[idx])
        key = (p, -(idx if idx is not None else len(probs)))
        if best_key is None or key > best_key:
            best, best_key = pos, key
    return best
