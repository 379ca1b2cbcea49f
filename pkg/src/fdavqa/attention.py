"""Question-driven object selection.

Every question word is compared with every object label through frozen word
vectors. Objects whose label is similar enough to some word are fed to the
visual LSTM in question-word order, and the whole-scene feature goes last.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lexicon import LabelEmbeddings, WordVectors
from .numerics import cosine_similarity

DEFAULT_THRESHOLD = 0.5
TRACE_COLUMNS = ("word_position", "word", "object_index", "label", "similarity", "feed_rank")


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class Match:
    word_position: int
    word: str
    object_index: int
    label: str
    similarity: float


@dataclass
class SelectionTrace:
    matches: list
    feed_sequence: list
    feed_objects: list = field(default_factory=list)
    global_included: bool = True

    def feed_rank(self, object_index: int) -> int:
        return self.feed_objects.index(object_index)


def match_objects(tokens: Sequence[str], scene, label_embeddings: LabelEmbeddings,
                  matcher_embeddings: WordVectors,
                  threshold: float = DEFAULT_THRESHOLD) -> list[Match]:
    """All (word, object) pairs with cosine similarity strictly above ``threshold``.

    Sorted by word position, then descending similarity, then object index.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [-1, 1]")
    label_vecs = [label_embeddings.vector(o.label) for o in scene.objects]
    matches = []
    for pos, word in enumerate(tokens):
        w = matcher_embeddings.vector(word)
        if not np.any(w):
            continue
        for k, (obj, lv) in enumerate(zip(scene.objects, label_vecs)):
            sim = cosine_similarity(w, lv)
            if sim > threshold:
                matches.append(Match(pos, word, k, obj.label, sim))
    matches.sort(key=lambda m: (m.word_position, -m.similarity, m.object_index))
    return matches


def build_visual_sequence(matches: Sequence[Match], scene) -> SelectionTrace:
    """Matched object features (first occurrence only), then the global feature."""
    feed_objects = []
    for m in matches:
        if not 0 <= m.object_index < len(scene.objects):
            raise TraceError(
                f"match for word {m.word!r} points at object {m.object_index}, "
                f"scene {scene.id} has {len(scene.objects)}")
        if m.object_index not in feed_objects:
            feed_objects.append(m.object_index)
    feed = [scene.objects[k].feature for k in feed_objects] + [scene.global_feature]
    return SelectionTrace(list(matches), feed, feed_objects)


def global_only_trace(scene) -> SelectionTrace:
    return SelectionTrace([], [scene.global_feature], [])


def select(tokens, scene, label_embeddings, matcher_embeddings,
           threshold: float = DEFAULT_THRESHOLD) -> SelectionTrace:
    matches = match_objects(tokens, scene, label_embeddings, matcher_embeddings, threshold)
    return build_visual_sequence(matches, scene)


def trace_rows(trace: SelectionTrace) -> list[dict]:
    return [{"word_position": m.word_position, "word": m.word,
             "object_index": m.object_index, "label": m.label,
             "similarity": m.similarity, "feed_rank": trace.feed_rank(m.object_index)}
            for m in trace.matches]


def explain_trace(trace: SelectionTrace, scene, tokens: Sequence[str]) -> str:
    if not trace.matches:
        return f"{' '.join(tokens)}\n(no matches: global feature only)"
    lines = [" ".join(tokens)]
    for m in trace.matches:
        lines.append(f"{m.word} → {m.label} ({m.similarity:.2f})")
    order = [f"{scene.objects[k].label}#{k}" for k in trace.feed_objects] + ["<global>"]
    lines.append("feed: " + " -> ".join(order))
    return "\n".join(lines)


def trace_csv(trace: SelectionTrace) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in trace_rows(trace):
        writer.writerow({**row, "similarity": f"{row['similarity']:.6f}"})
    return buf.getvalue()
