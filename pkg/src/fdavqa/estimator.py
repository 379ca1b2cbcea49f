"""scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from .fusion import AnswerVocabulary
from .lexicon import WordVectors, tokenize
from .model import check_variant, predict_multiple_choice
from .sceneworld import Dataset, QASample, Scene
from .training import TrainConfig, train


def check_pairs(X, visual_dim: int | None = None) -> list[tuple[Scene, list]]:
    """Validate ``X`` as (scene, question) pairs; questions may be strings or token lists."""
    if isinstance(X, Dataset):
        return [(scene, list(q.tokens)) for q, scene in X.pairs()]
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"X must be an iterable of (scene, question) pairs, got {type(X).__name__}") from None
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, (tuple, list)) or len(item) != 2:
            raise ValueError(f"X[{i}] is not a (scene, question) pair")
        scene, question = item
        if not isinstance(scene, Scene):
            raise TypeError(f"X[{i}][0] must be a Scene, got {type(scene).__name__}")
        if visual_dim is not None and scene.visual_dim != visual_dim:
            raise ValueError(f"X[{i}] has visual dim {scene.visual_dim}, expected {visual_dim}")
        tokens = tokenize(question) if isinstance(question, str) else list(question)
        if not all(isinstance(t, str) for t in tokens):
            raise TypeError(f"X[{i}][1] must be a string or a list of strings")
        out.append((scene, tokens))
    return out


def pairs_to_dataset(pairs, y=None, choices=None, prefix="x") -> Dataset:
    scenes, samples = {}, []
    for i, (scene, tokens) in enumerate(pairs):
        if scene.id in scenes and scenes[scene.id] is not scene:
            scene_id = f"{scene.id}#{i}"
            scene = Scene(scene_id, scene.objects, scene.global_feature, scene.background)
        scenes.setdefault(scene.id, scene)
        answer = "" if y is None else str(y[i])
        ch = None if choices is None else list(choices[i])
        samples.append(QASample(f"{prefix}{i}", scene.id, tokens, answer, "other", ch))
    dim = pairs[0][0].visual_dim if pairs else 0
    return Dataset(list(scenes.values()), samples, dim)


class FDAClassifier(ClassifierMixin, BaseEstimator):
    """Question answering over scenes as multi-class classification.

    ``X`` is a sequence of ``(Scene, question)`` pairs and ``y`` the answer
    strings. ``matcher`` holds the frozen word vectors used for attention;
    it is only required by the ``fda`` variant.
    """

    def __init__(self, variant="fda", matcher=None, epochs=10, batch_size=32, learning_rate=1e-3,
                 embed_dim=16, state_dim=32, threshold=0.5, clip_norm=5.0, optimizer="adam",
                 answer_universe=None, seed=0):
        self.variant = variant
        self.matcher = matcher
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.embed_dim = embed_dim
        self.state_dim = state_dim
        self.threshold = threshold
        self.clip_norm = clip_norm
        self.optimizer = optimizer
        self.answer_universe = answer_universe
        self.seed = seed

    def _config(self, visual_dim) -> TrainConfig:
        return TrainConfig(seed=self.seed, epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, optimizer=self.optimizer,
                           clip_norm=self.clip_norm, embed_dim=self.embed_dim,
                           state_dim=self.state_dim, visual_dim=visual_dim,
                           threshold=self.threshold, variant=self.variant)

    def fit(self, X, y=None, eval_set=None):
        """Train on (scene, question) pairs; ``eval_set=(X_val, y_val)`` picks the best epoch."""
        check_variant(self.variant)
        if self.variant == "fda" and not isinstance(self.matcher, WordVectors):
            raise ValueError("the fda variant needs matcher WordVectors")
        if isinstance(X, Dataset) and y is None:
            y = [q.answer for q in X.samples]
        pairs = check_pairs(X)
        if not pairs:
            raise ValueError("cannot fit on an empty X")
        if y is None:
            raise ValueError("y is required")
        y = [str(a) for a in y]
        check_consistent_length(pairs, y)
        visual_dim = pairs[0][0].visual_dim
        pairs = check_pairs(pairs, visual_dim)
        data = pairs_to_dataset(pairs, y)
        val = None
        if eval_set is not None:
            Xv, yv = eval_set
            vpairs = check_pairs(Xv, visual_dim)
            check_consistent_length(vpairs, yv)
            val = pairs_to_dataset(vpairs, [str(a) for a in yv], prefix="v")
        answers = AnswerVocabulary.from_answers(y, universe=self.answer_universe or ())
        result = train(self._config(visual_dim), data, val, self.matcher, answers)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.array(answers.answers, dtype=object)
        self.n_features_in_ = visual_dim
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        pairs = check_pairs(X, self.n_features_in_)
        if not pairs:
            return np.zeros((0, len(self.classes_)))
        return np.vstack([self.model_.predict_proba(scene, tokens) for scene, tokens in pairs])

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        # np.argmax keeps the first maximum, i.e. the lowest answer index.
        return self.classes_[np.argmax(probs, axis=1)] if len(probs) else self.classes_[:0]

    def predict_choice(self, X, choices) -> np.ndarray:
        """Multiple-choice answers: the best of each row of ``choices``."""
        check_is_fitted(self, "model_")
        pairs = check_pairs(X, self.n_features_in_)
        check_consistent_length(pairs, choices)
        out = [predict_multiple_choice(self.model_, scene, tokens, list(ch))[0]
               for (scene, tokens), ch in zip(pairs, choices)]
        return np.array(out, dtype=object)

    def selection_traces(self, X) -> list:
        check_is_fitted(self, "model_")
        return [self.model_.select(scene, tokens) for scene, tokens in check_pairs(X, self.n_features_in_)]
