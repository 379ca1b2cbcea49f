"""Finite-difference checks of every variant at toy dimensions."""

from __future__ import annotations

import numpy as np

from .fusion import AnswerVocabulary
from .lexicon import build_vocabulary
from .model import VARIANTS, FDAModel, ModelDims, check_variant
from .numerics import GradCheckReport, grad_check
from .sceneworld import SceneConfig, generate_dataset, world_word_vectors
from .training import _loss_node

TOY_DIMS = ModelDims(embed_dim=8, state_dim=16, visual_dim=16)
TOY_WORLD = SceneConfig(
    nouns=("ball", "cube", "cone", "frisbee"),
    colors=("red", "blue", "green", "white"),
    sizes=("small", "large"),
    backgrounds=("grass", "sand"),
    synonyms=(("disc", "frisbee"),),
    max_objects=4,
    visual_dim=16,
    palette_size=2,
    with_choices=False,
)
# yes, no, the counts a 4-object scene allows, then colors and sizes: K = 12.
TOY_ANSWERS = (["yes", "no"] + [str(i) for i in range(1, TOY_WORLD.max_objects + 1)]
               + list(TOY_WORLD.colors) + list(TOY_WORLD.sizes))


def toy_problem(seed: int = 0, n: int = 4):
    """A small dataset plus the matcher every toy model shares."""
    data = generate_dataset(seed, TOY_WORLD, n, "toy")
    return data, world_word_vectors(TOY_WORLD)


def toy_model(variant: str, seed: int = 0, scale: float = 0.5, data=None, matcher=None) -> FDAModel:
    """Randomly initialised toy model; a larger init scale keeps gradients away from zero."""
    check_variant(variant)
    if data is None:
        data, matcher = toy_problem(seed)
    vocab = build_vocabulary(q.tokens for q in data.samples)
    rng = np.random.default_rng([seed, 2])
    model = FDAModel.initialize(variant, vocab, AnswerVocabulary(TOY_ANSWERS), TOY_DIMS, rng,
                                matcher, scale=scale)
    # Nonzero biases so the checks also exercise the bias paths.
    for p in model.params():
        if p.value.ndim == 1:
            p.value += rng.uniform(-0.1, 0.1, p.shape)
    return model


def check_variant_gradients(variant: str, seed: int = 0, tolerance: float = 1e-4,
                            step: float = 1e-5) -> GradCheckReport:
    data, matcher = toy_problem(seed)
    model = toy_model(variant, seed, data=data, matcher=matcher)
    pairs = data.pairs()
    traces = [model.select(scene, q.tokens) for q, scene in pairs]

    def loss_fn(tape):
        loss, _ = _loss_node(tape, model, pairs, traces)
        return loss

    return grad_check(loss_fn, model.params(), step=step, tolerance=tolerance, seed=seed)


def run_suite(variants=VARIANTS, seed: int = 0, tolerance: float = 1e-4) -> dict:
    """Variant → report for every requested variant."""
    return {v: check_variant_gradients(v, seed, tolerance) for v in variants}
