import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from futuresight.baselines import (
    LinearRegressor, NeighborBank, SingularSystemError, fit_linear, fit_linear_arrays, identity_predict,
    knn_predict, knn_predict_batch, predict_linear, ridge_objective,
)
from futuresight.data import FramePair, SynthConfig, generate_synthetic, make_pairs


def pairs_from(X, Y):
    return [FramePair(x, y, "v", i, 1) for i, (x, y) in enumerate(zip(X, Y))]


def ridge_oracle(X, Y, lam):
    """Minimiser of the ridge objective via an independent augmented least-squares solve.

    Appending sqrt(lam) * I rows for the weights turns ridge into ordinary least
    squares, which lstsq solves by SVD rather than through the normal equations.
    """
    n, d = X.shape
    D = np.hstack([X, np.ones((n, 1))])
    pad = np.hstack([np.sqrt(lam) * np.eye(d), np.zeros((d, 1))])
    theta, *_ = np.linalg.lstsq(np.vstack([D, pad]), np.vstack([Y, np.zeros((d, Y.shape[1]))]), rcond=None)
    return LinearRegressor(theta[:-1].T, theta[-1], lam)


# --- identity ---------------------------------------------------------------


def test_identity():
    x = np.array([1.0, 2.0, 3.0])
    y = identity_predict(x)
    assert y.tolist() == [1.0, 2.0, 3.0]
    assert np.linalg.norm(y - x) == 0
    y[0] = 9
    assert x[0] == 1.0


def test_identity_noise_floor():
    sigma, d = 0.05, 8
    seqs, _ = generate_synthetic(SynthConfig(n_sequences=50, seq_len=40, dim=d, n_modes=1, noise_sigma=sigma,
                                             identity_dynamics=True, seed=3))
    pairs = make_pairs(seqs, 1)
    sq = np.mean([np.sum((identity_predict(p.input) - p.target) ** 2) for p in pairs])
    assert sq == pytest.approx(d * sigma ** 2, rel=0.1)


# --- ridge ------------------------------------------------------------------


def test_identity_recovery():
    X = np.random.default_rng(0).normal(size=(30, 4))
    reg = fit_linear(pairs_from(X, X), lam=0.0)
    assert np.allclose(reg.W, np.eye(4), atol=1e-8)
    assert np.allclose(reg.b, 0, atol=1e-8)


def test_heavy_ridge_limit():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(25, 3)), rng.normal(size=(25, 2)) + 4.0
    reg = fit_linear(pairs_from(X, Y), lam=1e9)
    assert np.linalg.norm(reg.W) < 1e-3
    assert np.allclose(reg.b, Y.mean(axis=0), atol=1e-3)


def test_ridge_random_5x3_against_oracle():
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    reg = fit_linear(pairs_from(X, Y), lam=1e-3)
    oracle = ridge_oracle(X, Y, 1e-3)
    assert ridge_objective(reg, X, Y) == pytest.approx(ridge_objective(oracle, X, Y), rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 30), st.integers(1, 6), st.integers(1, 4),
       st.floats(1e-4, 10.0))
def test_ridge_property(seed, n, d, d_out, lam):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(n, d)), rng.normal(size=(n, d_out))
    reg = fit_linear_arrays(X, Y, lam)
    ours, ref = ridge_objective(reg, X, Y), ridge_objective(ridge_oracle(X, Y, lam), X, Y)
    assert abs(ours - ref) <= 1e-8 * max(ref, 1e-12)


def test_singular_without_ridge():
    X = np.ones((6, 2))  # rank-deficient design once the bias column is appended
    with pytest.raises(SingularSystemError, match="lam > 0"):
        fit_linear(pairs_from(X, X), lam=0.0)
    fit_linear(pairs_from(X, X), lam=1e-3)


def test_predict_linear_cases():
    assert predict_linear(LinearRegressor(np.zeros((2, 3)), np.array([1.0, 2.0])), np.ones(3)).tolist() == [1, 2]
    assert predict_linear(LinearRegressor(2 * np.eye(2), np.zeros(2)), np.array([1.0, -1.0])).tolist() == [2, -2]
    with pytest.raises(ValueError):
        predict_linear(LinearRegressor(np.eye(2), np.zeros(2)), np.ones(3))


def test_scalar_slope_and_intercept():
    x = np.linspace(-2, 3, 11)[:, None]
    reg = fit_linear(pairs_from(x, 3 * x + 1), lam=0.0)
    assert reg.W[0, 0] == pytest.approx(3.0, abs=1e-8)
    assert reg.b[0] == pytest.approx(1.0, abs=1e-8)


# --- nearest neighbours -----------------------------------------------------


def brute_knn(keys, values, q, k):
    dist = [(float(np.sum((key - q) ** 2)), i) for i, key in enumerate(keys)]
    dist.sort()  # ties resolved by index, i.e. insertion order
    return np.mean([values[i] for _, i in dist[:k]], axis=0)


def test_knn_exact_match():
    bank = NeighborBank(np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]]), np.array([[1.0], [2.0], [3.0]]))
    assert knn_predict(bank, np.array([1.0, 1.0])).tolist() == [2.0]


def test_knn_two_entries():
    bank = NeighborBank(np.array([[0.0], [10.0]]), np.array([[-1.0, -1.0], [1.0, 1.0]]))
    assert knn_predict(bank, np.array([3.0])).tolist() == [-1.0, -1.0]
    assert knn_predict(bank, np.array([7.0])).tolist() == [1.0, 1.0]


def test_knn_full_bank_is_mean():
    rng = np.random.default_rng(0)
    bank = NeighborBank(rng.normal(size=(9, 3)), rng.normal(size=(9, 2)))
    assert np.allclose(knn_predict(bank, np.zeros(3), k=9), bank.values.mean(axis=0), atol=1e-15)


def test_knn_ties_use_insertion_order():
    bank = NeighborBank(np.array([[1.0], [-1.0], [1.0]]), np.array([[10.0], [20.0], [30.0]]))
    assert knn_predict(bank, np.array([0.0])).tolist() == [10.0]
    assert knn_predict(bank, np.array([0.0]), k=2).tolist() == [15.0]


def test_knn_errors():
    with pytest.raises(ValueError):
        knn_predict(NeighborBank(np.zeros((0, 2)), np.zeros((0, 2))), np.zeros(2))
    with pytest.raises(ValueError):
        knn_predict(NeighborBank(np.zeros((2, 2)), np.zeros((2, 2))), np.zeros(2), k=3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 25), st.data())
def test_knn_equals_brute_force(seed, n, data):
    rng = np.random.default_rng(seed)
    # integer grid keys make exact ties common
    keys = rng.integers(-2, 3, size=(n, 2)).astype(float)
    values = rng.normal(size=(n, 3))
    k = data.draw(st.integers(1, n))
    bank = NeighborBank(keys, values)
    Q = rng.integers(-2, 3, size=(6, 2)).astype(float)
    got = knn_predict_batch(bank, Q, k)
    for q, g in zip(Q, got):
        assert np.array_equal(g, brute_knn(keys, values, q, k))
