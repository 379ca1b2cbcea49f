import numpy as np
import pytest
from hypothesis import settings

from fdavqa.sceneworld import Scene, SceneConfig, SceneObject, generate_splits, world_word_vectors

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

SMALL_WORLD = SceneConfig()


def make_scene(objects, config=SMALL_WORLD, scene_id="hand-0", background="grass", rng=None):
    """Scene from (label, color[, size]) tuples with noise-free features unless ``rng`` is given."""
    from fdavqa.sceneworld import synth_features

    objs = []
    for k, entry in enumerate(objects):
        label, color = entry[0], entry[1]
        size = entry[2] if len(entry) > 2 else "small"
        bbox = (0.1 * k % 0.6, 0.2, 0.2, 0.2)
        obj = SceneObject(label, color, size, bbox, np.zeros(config.visual_dim))
        obj.feature = synth_features(obj, config, 0.0 if rng is None else None, rng)
        objs.append(obj)
    scene = Scene(scene_id, objs, np.zeros(config.visual_dim), background)
    scene.global_feature = synth_features(scene, config, 0.0 if rng is None else None, rng)
    return scene


@pytest.fixture(scope="session")
def words():
    return world_word_vectors(SMALL_WORLD)


@pytest.fixture(scope="session")
def small_splits():
    return generate_splits(3, SMALL_WORLD, {"train": 120, "val": 40, "test": 40})
