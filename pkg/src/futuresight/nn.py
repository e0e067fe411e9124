"""Dense feed-forward regression networks in plain numpy.

ReLU on hidden layers, identity on the output, inverted dropout on hidden
activations, squared Euclidean loss and classical momentum SGD. Everything
runs in float64.

Batched routines (`forward_batch`, `backward_batch`) accept optional
per-sample unit masks so that the mixture module can evaluate several
logical networks that live inside one parameter store.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    dropout_ratio: float = 0.5

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if not 0.0 <= self.dropout_ratio < 1.0:
            raise ValueError(f"dropout_ratio must lie in [0, 1), got {self.dropout_ratio}")

    @property
    def n_layers(self) -> int:
        """Number of weight layers."""
        return len(self.layer_sizes) - 1

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class NetworkParams:
    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]  # each (out,)

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list, weights and biases interleaved by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check(self, spec: NetworkSpec) -> None:
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ValueError("parameter layer count does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (spec.layer_sizes[i + 1], spec.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(
                    f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expected} / ({expected[0]},)"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class OptimizerState:
    velocity: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in params.arrays()])


def seed_streams(seed: int) -> list[np.random.SeedSequence]:
    """Independent child seeds for (init, masks, assignments, minibatches+dropout)."""
    return np.random.SeedSequence(seed).spawn(4)


def init_params(spec: NetworkSpec, init_scale: float = 0.01, bias_const: float = 0.0,
                seed: int | np.random.Generator = 0) -> NetworkParams:
    """Gaussian(0, init_scale**2) weights, constant biases."""
    if init_scale < 0:
        raise ValueError("init_scale must be nonnegative")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) * init_scale)
        biases.append(np.full(n_out, float(bias_const)))
    return NetworkParams(weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each weight layer, (B, in)
    preacts: list[np.ndarray]  # pre-activation of each layer, (B, out)
    gates: list[np.ndarray | None]  # d(activation)/d(preact) per hidden layer


def _draw_dropout(spec: NetworkSpec, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    keep = 1.0 - spec.dropout_ratio
    return [(rng.random((batch, h)) < keep) / keep for h in spec.hidden_sizes]


def forward_batch(params: NetworkParams, spec: NetworkSpec, X: np.ndarray, train: bool = False,
                  rng: np.random.Generator | None = None, unit_masks=None, dropout_masks=None,
                  ) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a (B, in) batch.

    unit_masks, when given, holds one (B, h) 0/1 array per hidden layer; a
    zero switches the unit off for that sample. In train mode dropout masks
    are drawn from `rng` unless passed explicitly.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"input has shape {X.shape}, expected (B, {spec.input_dim})")
    if train and spec.dropout_ratio > 0 and dropout_masks is None:
        if rng is None:
            raise ValueError("train mode with dropout needs an rng or explicit masks")
        dropout_masks = _draw_dropout(spec, X.shape[0], rng)
    if not train or spec.dropout_ratio == 0:
        dropout_masks = None

    inputs, preacts, gates = [], [], []
    h = X
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        a = h @ w.T + b
        preacts.append(a)
        if i == spec.n_layers - 1:
            h = a
            gates.append(None)
            break
        gate = (a > 0).astype(np.float64)
        if dropout_masks is not None:
            gate = gate * dropout_masks[i]
        if unit_masks is not None:
            gate = gate * unit_masks[i]
        gates.append(gate)
        h = a * gate
    return h, ForwardCache(inputs, preacts, gates)


def backward_batch(params: NetworkParams, spec: NetworkSpec, cache: ForwardCache,
                   grad_out: np.ndarray) -> NetworkParams:
    """Backpropagate d(loss)/d(output) of shape (B, out) to parameter gradients."""
    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    delta = grad_out
    for i in range(spec.n_layers - 1, -1, -1):
        if cache.gates[i] is not None:
            delta = delta * cache.gates[i]
        gw[i] = delta.T @ cache.inputs[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i]
    return NetworkParams(gw, gb)


def batch_loss_and_grads(params: NetworkParams, spec: NetworkSpec, X: np.ndarray, Y: np.ndarray,
                         train: bool = False, rng: np.random.Generator | None = None,
                         unit_masks=None) -> tuple[float, NetworkParams]:
    """Minibatch mean of the per-sample squared error and its gradient."""
    pred, cache = forward_batch(params, spec, X, train=train, rng=rng, unit_masks=unit_masks)
    resid = pred - Y
    n = X.shape[0]
    loss = float(np.sum(resid * resid)) / n
    return loss, backward_batch(params, spec, cache, 2.0 * resid / n)


def _single(params, spec, x, mode, dropout_seed):
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.input_dim},)")
    train = mode == "train"
    rng = np.random.default_rng(dropout_seed) if train else None
    return forward_batch(params, spec, x[None, :], train=train, rng=rng)


def forward(params: NetworkParams, spec: NetworkSpec, x, mode: str = "infer",
            dropout_seed: int = 0) -> np.ndarray:
    out, _ = _single(params, spec, x, mode, dropout_seed)
    return out[0]


def euclidean_loss(pred, target) -> float:
    """Squared Euclidean norm of pred - target (no 1/2 factor)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    return float(np.dot(r.ravel(), r.ravel()))


def backward(params: NetworkParams, spec: NetworkSpec, x, target, mode: str = "infer",
             dropout_seed: int = 0) -> tuple[NetworkParams, float]:
    """Gradient of euclidean_loss(forward(x), target) under the realized dropout mask."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (spec.output_dim,):
        raise ValueError(f"target has shape {target.shape}, expected ({spec.output_dim},)")
    out, cache = _single(params, spec, x, mode, dropout_seed)
    resid = out[0] - target
    grads = backward_batch(params, spec, cache, 2.0 * resid[None, :])
    return grads, float(np.dot(resid, resid))


def sgd_step(params: NetworkParams, grads: NetworkParams, state: OptimizerState,
             config: OptimizerConfig) -> tuple[NetworkParams, OptimizerState]:
    """Classical momentum, in place: v <- m*v - lr*g; w <- w + v."""
    arrays, garrays = params.arrays(), grads.arrays()
    if not state.velocity:
        state.velocity = [np.zeros_like(a) for a in arrays]
    if len(garrays) != len(arrays) or len(state.velocity) != len(arrays):
        raise ValueError("parameter, gradient and velocity lists differ in length")
    for w, g, v in zip(arrays, garrays, state.velocity):
        if w.shape != g.shape or w.shape != v.shape:
            raise ValueError(f"shape mismatch: param {w.shape}, grad {g.shape}, velocity {v.shape}")
        v *= config.momentum
        v -= config.learning_rate * g
        w += v
    return params, state


def fit_regression(params: NetworkParams, spec: NetworkSpec, X: np.ndarray, Y: np.ndarray,
                   config: OptimizerConfig, iters: int, rng: np.random.Generator,
                   state: OptimizerState | None = None) -> tuple[NetworkParams, OptimizerState]:
    """Plain single-network minibatch regression, warm-started from `params`.

    Minibatches are drawn without replacement from `rng`, then dropout masks.
    The mixture trainer consumes `rng` in the same order, which is what makes
    K=1 mixture training reproduce this routine bit for bit.
    """
    if state is None:
        state = OptimizerState.zeros_like(params)
    n = X.shape[0]
    bs = min(config.batch_size, n)
    for _ in range(iters):
        idx = rng.choice(n, size=bs, replace=False)
        _, grads = batch_loss_and_grads(params, spec, X[idx], Y[idx], train=True, rng=rng)
        sgd_step(params, grads, state, config)
    return params, state


@dataclass
class GradCheckResult:
    max_relative_error: float
    n_checked: int
    n_skipped: int


def gradient_check(params: NetworkParams, spec: NetworkSpec, x, target,
                   epsilon: float = 1e-5) -> GradCheckResult:
    """Compare backward() with central differences, coordinate by coordinate.

    Runs in infer mode. A coordinate is skipped when the base pre-activation
    of the unit it feeds is within epsilon of zero, or when either
    perturbation flips the ReLU pattern of some hidden unit.
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    grads, _ = backward(params, spec, x, target, mode="infer")

    def pattern_and_loss():
        out, cache = forward_batch(params, spec, x[None, :])
        pattern = [a[0] > 0 for a in cache.preacts[:-1]]
        return pattern, euclidean_loss(out[0], target)

    base_pattern, _ = pattern_and_loss()
    _, base_cache = forward_batch(params, spec, x[None, :])
    near_kink = [np.abs(a[0]) < epsilon for a in base_cache.preacts[:-1]]

    worst, checked, skipped = 0.0, 0, 0
    for layer, (p, g) in enumerate(zip(params.arrays(), grads.arrays())):
        weight_layer = layer // 2
        for idx in np.ndindex(p.shape):
            fed_unit = idx[0]
            if weight_layer < spec.n_layers - 1 and near_kink[weight_layer][fed_unit]:
                skipped += 1
                continue
            orig = p[idx]
            p[idx] = orig + epsilon
            pat_plus, f_plus = pattern_and_loss()
            p[idx] = orig - epsilon
            pat_minus, f_minus = pattern_and_loss()
            p[idx] = orig
            if any((a != b).any() or (a != c).any()
                   for a, b, c in zip(base_pattern, pat_plus, pat_minus)):
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2 * epsilon)
            analytic = g[idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
            checked += 1
    return GradCheckResult(float(worst), checked, skipped)
