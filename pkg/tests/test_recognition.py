import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from futuresight.data import FramePair
from futuresight.mixture import MixtureConfig, init_mixture, predict_all
from futuresight.nn import NetworkSpec
from futuresight.recognition import (
    ClassifierConfig, LinearClassifier, adapted_training_set, anticipate_batch, anticipate_category, classify,
    marginalize_predictions, scores, softmax, train_adapted, train_direct, train_linear_classifier,
    train_off_the_shelf,
)


def blobs(seed=0, n=100):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([-3, 0], 0.5, (n, 2)), rng.normal([3, 0], 0.5, (n, 2))])
    return X, ["a"] * n + ["b"] * n


# --- training ---------------------------------------------------------------


def test_separable_blobs_fit_perfectly():
    X, y = blobs()
    for loss in ("hinge", "logistic"):
        clf = train_linear_classifier(X, y, ClassifierConfig(loss=loss))
        pred = [clf.categories[i] for i in np.argmax(scores(clf, X), axis=1)]
        assert pred == y


def test_strong_regularisation_shrinks_weights():
    X, y = blobs()
    clf = train_linear_classifier(X, y, ClassifierConfig(l2=1e6, learning_rate=0.1))
    assert np.all(np.abs(clf.W) < 1e-3)


def test_training_is_deterministic():
    X, y = blobs(3)
    a = train_linear_classifier(X, y, ClassifierConfig(seed=4))
    b = train_linear_classifier(X, y, ClassifierConfig(seed=4))
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)


def test_training_errors():
    X, _ = blobs()
    with pytest.raises(ValueError, match="at least 2"):
        train_linear_classifier(X, ["a"] * len(X))
    with pytest.raises(ValueError):
        train_linear_classifier(X[:3], ["a", "b"])
    with pytest.raises(ValueError):
        ClassifierConfig(loss="squared")


def test_multi_label_training():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 2))
    labels = [frozenset(c for c, on in (("x", x[0] > 0), ("y", x[1] > 0)) if on) for x in X]
    clf = train_linear_classifier(X, labels, ClassifierConfig(multi_label=True, epochs=50))
    assert clf.categories == ["x", "y"]
    s = scores(clf, X)
    assert np.mean((s[:, 0] > 0) == (X[:, 0] > 0)) > 0.95
    assert np.mean((s[:, 1] > 0) == (X[:, 1] > 0)) > 0.95


def test_multi_label_needs_positives():
    with pytest.raises(ValueError):
        train_linear_classifier(np.zeros((2, 2)), [frozenset(), frozenset()], ClassifierConfig(multi_label=True))


# --- classify ---------------------------------------------------------------


def test_zero_classifier_is_uniform():
    clf = LinearClassifier(["a", "b", "c"], np.zeros((3, 4)), np.zeros(3))
    _, dist = classify(clf, np.ones(4))
    assert np.allclose(dist, 1 / 3)


def test_softmax_known_value():
    assert np.allclose(softmax(np.array([math.log(3.0), 0.0])), [0.75, 0.25], atol=1e-15)


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariance(s, c):
    assert np.allclose(softmax(s), softmax(s + c), atol=1e-12)


def test_classify_dimension_mismatch():
    clf = LinearClassifier(["a", "b"], np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        classify(clf, np.ones(4))


# --- marginalization --------------------------------------------------------


def test_marginalize_cases():
    p = np.array([0.2, 0.5, 0.3])
    assert np.allclose(marginalize_predictions([p, p, p]), p)
    assert np.allclose(marginalize_predictions([[1.0, 0.0], [0.0, 1.0]]), [0.5, 0.5])
    D = np.array([[0.6, 0.4], [0.1, 0.9], [0.5, 0.5]])
    hand = [0.5 * 0.6 + 0.25 * 0.1 + 0.25 * 0.5, 0.5 * 0.4 + 0.25 * 0.9 + 0.25 * 0.5]
    assert np.allclose(marginalize_predictions(D, [0.5, 0.25, 0.25]), hand, atol=1e-15)


def test_marginalize_rejects_unnormalised():
    with pytest.raises(ValueError):
        marginalize_predictions([[0.5, 0.6]])
    with pytest.raises(ValueError):
        marginalize_predictions([[0.5, 0.5]], weights=[0.7])


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.floats(-30, 30)),
       st.data())
def test_marginal_stays_on_simplex(raw, data):
    P = softmax(raw)
    w = data.draw(st.one_of(st.none(), arrays(np.float64, raw.shape[0], elements=st.floats(0.01, 1))))
    if w is not None:
        w = w / w.sum()
    out = marginalize_predictions(P, w)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) <= 1e-9


# --- anticipation -----------------------------------------------------------


def small_model(k, private_prob=0.5, seed=0):
    return init_mixture(NetworkSpec((3, 6, 6, 4)),
                        MixtureConfig(k=k, shared_layer_count=1, private_prob=private_prob, init_scale=0.6), seed)


def random_clf(seed=0, c=3, d=4):
    rng = np.random.default_rng(seed)
    return LinearClassifier([f"c{i}" for i in range(c)], rng.normal(size=(c, d)), rng.normal(size=c))


def test_k1_marginal_equals_single_distribution():
    model, clf = small_model(1), random_clf()
    x = np.array([0.5, -1.0, 2.0])
    res = anticipate_category(model, clf, x)
    _, dist = classify(clf, predict_all(model, x)[0])
    assert np.allclose(res.marginal, dist, atol=1e-15)


def test_identical_networks_marginal():
    model, clf = small_model(3, private_prob=0.0), random_clf(1)
    x = np.array([1.0, 0.2, -0.4])
    res = anticipate_category(model, clf, x)
    _, dist = classify(clf, predict_all(model, x)[1])
    assert np.allclose(res.marginal, dist, atol=1e-15)
    assert res.per_network_scores.shape == (3, 3)
    assert res.category == clf.categories[int(np.argmax(dist))]


def test_dimension_chain_checked():
    with pytest.raises(ValueError):
        anticipate_category(small_model(2), random_clf(d=5), np.zeros(3))


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_argmax_invariant_to_classifier_scaling(seed, scale):
    clf = random_clf(seed)
    scaled = LinearClassifier(clf.categories, clf.W * scale, clf.b * scale)
    x = np.random.default_rng(seed).normal(size=4)
    assert np.argmax(classify(clf, x)[1]) == np.argmax(classify(scaled, x)[1])
    model = small_model(1, seed=seed % 5)
    z = np.random.default_rng(seed + 1).normal(size=3)
    assert anticipate_category(model, clf, z).category == anticipate_category(model, scaled, z).category


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_marginal_argmax_invariant_when_networks_agree(seed, scale):
    # scaling acts as a softmax temperature; when every network ranks the same
    # category first, that category stays first in the average
    model, clf = small_model(3, seed=seed % 5), random_clf(seed)
    scaled = LinearClassifier(clf.categories, clf.W * scale, clf.b * scale)
    x = np.random.default_rng(seed).normal(size=3)
    r1, r2 = anticipate_category(model, clf, x), anticipate_category(model, scaled, x)
    if len(set(np.argmax(r1.per_network_scores, axis=1).tolist())) == 1:
        assert r1.category == r2.category


def test_batch_matches_single():
    model, clf = small_model(2), random_clf(2)
    X = np.random.default_rng(0).normal(size=(5, 3))
    cats, marg = anticipate_batch(clf, np.stack([predict_all(model, x) for x in X]))
    for x, c, m in zip(X, cats, marg):
        r = anticipate_category(model, clf, x)
        assert r.category == c and np.allclose(r.marginal, m, atol=1e-15)


def test_adapted_training_set_layout():
    preds = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    feats, labs = adapted_training_set(preds, ["a", "b"])
    assert feats.shape == (6, 2)
    assert labs == ["a"] * 3 + ["b"] * 3
    assert np.array_equal(feats[4], preds[1, 1])


def test_feature_sources():
    rng = np.random.default_rng(0)
    pairs = [FramePair(rng.normal(size=3), rng.normal(size=4) + (3 if i % 2 else -3), "v", i, 1,
                       frozenset({"odd" if i % 2 else "even"})) for i in range(40)]
    shelf = train_off_the_shelf(pairs)
    direct = train_direct(pairs)
    adapted = train_adapted(small_model(2), pairs)
    assert shelf.dim == 4 and direct.dim == 3 and adapted.dim == 4
    assert shelf.categories == ["even", "odd"]
    pred = [shelf.categories[i] for i in np.argmax(scores(shelf, np.stack([p.target for p in pairs])), axis=1)]
    assert pred == [next(iter(p.future_labels)) for p in pairs]
