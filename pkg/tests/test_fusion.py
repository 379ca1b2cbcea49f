
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fdavqa.fusion import (AnswerVocabulary, FusionParams, argmax_lowest, classify, fuse,
                           fusion_logits, restricted_argmax)
from fdavqa.numerics import Node, ShapeError, Tape, grad_check

# 2-answer stack with hand-set weights on fused (0.5, -1), from a scalar evaluation.
TINY_PROBS = (0.73458865963841175764, 0.26541134036158824236)


def test_fuse_examples():
    t = Tape()
    assert not fuse(t, Node(np.array([0.3, -2.0])), Node(np.array([-1.0, -0.1]))).value.any()
    assert not fuse(t, Node(np.zeros(2)), Node(np.array([4.0, 5.0]))).value.any()
    got = fuse(t, Node(np.array([0.5, -0.5])), Node(np.array([2.0, 3.0]))).value
    assert got == pytest.approx([0.924234314520019517, -1.3863514717800292755], abs=1e-15)
    with pytest.raises(ShapeError):
        fuse(t, Node(np.zeros(2)), Node(np.zeros(3)))


@given(arrays(np.float64, 6, elements=st.floats(-50, 50)), arrays(np.float64, 6, elements=st.floats(-50, 50)))
def test_fuse_zero_where_visual_nonpositive(q, v):
    out = fuse(Tape(), Node(q), Node(v)).value
    assert np.all(out[v <= 0] == 0)


def test_classify_examples():
    p = FusionParams(3, 5)
    assert np.allclose(classify(np.zeros(3), p), 0.2, atol=1e-15)
    tiny = FusionParams(2, 2, {"fc.W": [[1.0, 0.0], [0.5, 2.0]], "fc.b": [0.1, -0.1],
                               "cls.W": [[1.0, -1.0], [0.3, 0.2]], "cls.b": [0.0, 0.5]})
    assert classify(np.array([0.5, -1.0]), tiny) == pytest.approx(TINY_PROBS, abs=1e-15)


@given(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)), st.integers(0, 2**31))
def test_classify_is_a_distribution(x, seed):
    p = FusionParams.init(4, 7, np.random.default_rng(seed), scale=2.0)
    probs = classify(x, p)
    assert np.all(probs >= 0) and abs(probs.sum() - 1) <= 1e-12


def test_fusion_gradients():
    rng = np.random.default_rng(0)
    p = FusionParams.init(4, 6, rng, scale=0.7)
    for q in p.params():
        q.value += rng.uniform(-0.2, 0.2, q.shape)
    from fdavqa.numerics import Param
    qs, vs = Param("q", rng.normal(size=4)), Param("v", rng.normal(size=4) + 0.05)

    def loss(tape):
        return tape.softmax_cross_entropy(fusion_logits(tape, fuse(tape, qs, vs), p), 2)

    assert grad_check(loss, p.params() + [qs, vs]).passed


def test_answer_vocabulary():
    v = AnswerVocabulary.from_answers(["no", "yes", "yes", "red", "no", "yes"])
    assert v.answers == ["yes", "no", "red"]
    assert v.get("red") == 2 and v.get("blue") is None and "no" in v
    v = AnswerVocabulary.from_answers(["yes"], universe=["red", "yes", "blue"])
    assert v.answers == ["yes", "blue", "red"]
    assert AnswerVocabulary.from_answers(["a", "b", "b"], top_k=1).answers == ["b"]
    with pytest.raises(ValueError):
        AnswerVocabulary([])
    with pytest.raises(ValueError):
        AnswerVocabulary(["a", "a"])


def test_argmax_ties_go_low():
    assert argmax_lowest(np.array([0.2, 0.4, 0.4])) == 1
    assert argmax_lowest(np.full(5, 0.2)) == 0


def test_restricted_argmax():
    probs = np.array([0.1, 0.5, 0.3, 0.1])
    assert restricted_argmax(probs, [3, 1, 2]) == 1
    assert restricted_argmax(probs, [0, 2, 3]) == 1
    assert restricted_argmax(probs, [None, 3, 0]) == 2  # tie between 3 and 0: lower index wins
    assert restricted_argmax(probs, [None]) == 0
    with pytest.raises(ValueError):
        restricted_argmax(probs, [])


@given(arrays(np.float64, 8, elements=st.floats(0, 1)), st.sets(st.integers(0, 7), min_size=1))
def test_restriction_keeps_global_argmax(p, subset):
    k = argmax_lowest(p)
    idx = sorted(subset | {k})
    assert idx[restricted_argmax(p, idx)] == k
    # the chosen candidate is always a maximum of the subset
    sub = sorted(subset)
    assert p[sub[restricted_argmax(p, sub)]] == max(p[i] for i in sub)
