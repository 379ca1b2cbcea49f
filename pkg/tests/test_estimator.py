import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fdavqa.estimator import FDAClassifier, check_pairs, pairs_to_dataset

from conftest import make_scene


def _xy(data, n=None):
    pairs = [(scene, " ".join(q.tokens)) for q, scene in data.pairs()][:n]
    return pairs, [q.answer for q, _ in data.pairs()][:n]


def test_params_and_clone(words):
    est = FDAClassifier(matcher=words, epochs=3, state_dim=8)
    params = est.get_params()
    assert params["epochs"] == 3 and params["state_dim"] == 8 and params["matcher"] is words
    c = clone(est)
    assert c.get_params()["epochs"] == 3 and c is not est
    est.set_params(variant="question_only")
    assert est.variant == "question_only"


def test_fit_predict_shapes(small_splits, words):
    X, y = _xy(small_splits["train"])
    Xt, yt = _xy(small_splits["test"], 15)
    est = FDAClassifier(matcher=words, epochs=2, embed_dim=8, state_dim=16, learning_rate=5e-3)
    assert est.fit(X, y, eval_set=(Xt, yt)) is est
    probs = est.predict_proba(Xt)
    assert probs.shape == (15, len(est.classes_))
    assert np.allclose(probs.sum(axis=1), 1.0)
    pred = est.predict(Xt)
    assert list(pred) == [est.classes_[i] for i in probs.argmax(axis=1)]
    assert 0.0 <= est.score(Xt, yt) <= 1.0
    assert est.n_features_in_ == 32 and est.best_epoch_ in (1, 2)
    assert len(est.selection_traces(Xt)) == 15
    assert est.predict_proba([]).shape == (0, len(est.classes_))


def test_fit_on_dataset_and_predict_choice(small_splits, words):
    est = FDAClassifier(matcher=words, epochs=1, embed_dim=8, state_dim=16).fit(small_splits["train"])
    test = small_splits["test"]
    pred = est.predict_choice(test, [q.choices for q in test.samples])
    assert all(p in q.choices for p, q in zip(pred, test.samples))
    assert list(est.predict(test)) == list(est.predict(_xy(test)[0]))


def test_not_fitted_and_bad_input(small_splits, words):
    est = FDAClassifier(matcher=words)
    scene = small_splits["test"].scenes[0]
    with pytest.raises(NotFittedError):
        est.predict([(scene, "what color is the ball")])
    with pytest.raises(ValueError):
        FDAClassifier().fit(small_splits["train"])
    with pytest.raises(ValueError):
        FDAClassifier(variant="bogus", matcher=words).fit(small_splits["train"])
    with pytest.raises(ValueError):
        est.fit([(scene, "is it")], ["yes", "no"])
    with pytest.raises(ValueError):
        est.fit([], [])
    with pytest.raises(TypeError):
        check_pairs(5)
    with pytest.raises(ValueError):
        check_pairs([scene])
    with pytest.raises(TypeError):
        check_pairs([("scene", "q")])
    with pytest.raises(ValueError):
        check_pairs([(scene, "q")], visual_dim=7)
    assert check_pairs([(scene, "Is it RED?")])[0][1] == ["is", "it", "red"]


def test_repeated_scene_ids_are_kept_apart(words):
    a = make_scene([("ball", "red", "small")], scene_id="s")
    b = make_scene([("cube", "blue", "small")], scene_id="s")
    est = FDAClassifier(matcher=words, epochs=1, embed_dim=8, state_dim=8)
    est.fit([(a, "what color is the ball"), (b, "what color is the cube")], ["red", "blue"])
    traces = est.selection_traces([(a, "what color is the ball"), (b, "what color is the cube")])
    assert [m.label for m in traces[0].matches] == ["ball"]
    assert [m.label for m in traces[1].matches] == ["cube"]
    data = pairs_to_dataset([(a, ["q"]), (b, ["q"])], ["red", "blue"])
    assert len(data.scenes) == 2 and data.samples[1].scene_id == "s#1"
