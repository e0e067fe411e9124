"""Comparison predictors: identity, closed-form ridge regression, nearest neighbours."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .data import FramePair, stack_pairs


class SingularSystemError(np.linalg.LinAlgError):
    pass


def identity_predict(x):
    """Predict that the future looks exactly like the present."""
    return np.array(x, dtype=np.float64, copy=True)


@dataclass
class LinearRegressor:
    W: np.ndarray  # (d_out, d_in)
    b: np.ndarray  # (d_out,)
    lam: float = 1e-3


def fit_linear(pairs: list[FramePair], lam: float = 1e-3) -> LinearRegressor:
    """Ridge regression, min sum ||W x + b - y||^2 + lam ||W||_F^2, bias unpenalized.

    Solved through the normal equations of the bias-augmented design.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    X, Y = stack_pairs(pairs)
    return fit_linear_arrays(X, Y, lam)


def fit_linear_arrays(X: np.ndarray, Y: np.ndarray, lam: float = 1e-3) -> LinearRegressor:
    n, d = X.shape
    D = np.hstack([X, np.ones((n, 1))])
    G = D.T @ D
    reg = np.full(d + 1, float(lam))
    reg[-1] = 0.0
    G[np.diag_indices(d + 1)] += reg
    if lam == 0 and np.linalg.matrix_rank(G) < d + 1:
        raise SingularSystemError(
            "normal equations are singular (rank-deficient inputs); use lam > 0")
    try:
        theta = np.linalg.solve(G, D.T @ Y)  # (d+1, d_out)
    except np.linalg.LinAlgError:
        raise SingularSystemError("normal equations are singular; use lam > 0") from None
    return LinearRegressor(theta[:-1].T.copy(), theta[-1].copy(), float(lam))


def ridge_objective(reg: LinearRegressor, X: np.ndarray, Y: np.ndarray) -> float:
    r = X @ reg.W.T + reg.b - Y
    return float(np.sum(r * r) + reg.lam * np.sum(reg.W * reg.W))


def predict_linear(reg: LinearRegressor, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != reg.W.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} does not match regressor dim {reg.W.shape[1]}")
    return x @ reg.W.T + reg.b


@dataclass
class NeighborBank:
    keys: np.ndarray  # (n, d_in)
    values: np.ndarray  # (n, d_out)

    @classmethod
    def from_pairs(cls, pairs: list[FramePair]) -> "NeighborBank":
        X, Y = stack_pairs(pairs)
        return cls(X, Y)

    def __len__(self):
        return len(self.keys)


def knn_predict(bank: NeighborBank, query, k: int = 1) -> np.ndarray:
    """Mean future of the k nearest stored frames; ties go to earlier entries."""
    if len(bank) == 0:
        raise ValueError("neighbor bank is empty")
    if not 1 <= k <= len(bank):
        raise ValueError(f"k must lie in 1..{len(bank)}, got {k}")
    q = np.asarray(query, dtype=np.float64)
    diff = bank.keys - q
    dist = np.einsum("ij,ij->i", diff, diff)
    nearest = np.argsort(dist, kind="stable")[:k]
    return bank.values[nearest].mean(axis=0)


def knn_predict_batch(bank: NeighborBank, Q: np.ndarray, k: int = 1) -> np.ndarray:
    return np.stack([knn_predict(bank, q, k) for q in Q])


# --- serialization ----------------------------------------------------------

LINEAR_TYPE = "linear-regressor-v1"
KNN_TYPE = "neighbor-bank-v1"


def save_linear(reg: LinearRegressor, path, config: dict | None = None) -> None:
    container.write_document(path, LINEAR_TYPE, {
        "W": reg.W.tolist(), "b": reg.b.tolist(), "lam": reg.lam, "config": config or {}})


def load_linear(path) -> LinearRegressor:
    doc = container.read_document(path, LINEAR_TYPE)
    try:
        W = container.as_array(doc["W"], None, f"{path}: W")
        if W.ndim != 2:
            raise container.ModelFormatError(f"{path}: W must be a matrix")
        b = container.as_array(doc["b"], (W.shape[0],), f"{path}: b")
        return LinearRegressor(W, b, float(doc["lam"]))
    except KeyError as exc:
        raise container.ModelFormatError(f"{path}: missing field {exc.args[0]!r}") from None


def save_knn(bank: NeighborBank, k: int, path, config: dict | None = None) -> None:
    container.write_document(path, KNN_TYPE, {
        "k": k, "keys": bank.keys.tolist(), "values": bank.values.tolist(), "config": config or {}})


def load_knn(path) -> tuple[NeighborBank, int]:
    doc = container.read_document(path, KNN_TYPE)
    try:
        keys = container.as_array(doc["keys"], None, f"{path}: keys")
        values = container.as_array(doc["values"], None, f"{path}: values")
        k = int(doc["k"])
    except (KeyError, TypeError, ValueError) as exc:
        raise container.ModelFormatError(f"{path}: malformed neighbor bank ({exc})") from None
    if keys.ndim != 2 or values.ndim != 2 or len(keys) != len(values):
        raise container.ModelFormatError(f"{path}: keys and values must be matrices of equal length")
    return NeighborBank(keys, values), k
