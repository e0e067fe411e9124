"""Mixtures of K regression networks trained by hard latent assignment.

The K networks live in one parameter store. Each hidden unit of an
interleaved layer carries a tag: -1 (shared by every network) or j (private
to network j). Network j evaluates with every unit tagged -1 or j switched on
and all others forced to zero, so a private unit only ever receives gradient
from samples assigned to its owner. The output layer is always shared.

Training alternates two steps starting from uniformly random assignments:
an M-step of minibatch momentum SGD on each sample's assigned network, then
an E-step that reassigns every sample to its closest network.

Networks are indexed from 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import container
from .data import FramePair, stack_pairs
from .nn import (NetworkParams, NetworkSpec, OptimizerConfig, OptimizerState, batch_loss_and_grads,
                 fit_regression, forward_batch, init_params, seed_streams, sgd_step)

log = logging.getLogger(__name__)

SHARED = -1


@dataclass(frozen=True)
class MixtureConfig:
    k: int = 1
    shared_layer_count: int = 2  # weight layers, counted from the input, fully tied
    private_prob: float = 0.5
    alternations: int = 10
    iters_per_alternation: int = 200
    init_scale: float = 0.01
    bias_const: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.shared_layer_count < 1:
            raise ValueError("shared_layer_count must be >= 1")
        if not 0.0 <= self.private_prob <= 1.0:
            raise ValueError("private_prob must lie in [0, 1]")
        if self.alternations < 1 or self.iters_per_alternation < 0:
            raise ValueError("alternations must be >= 1 and iters_per_alternation >= 0")

    def validate_for(self, spec: NetworkSpec) -> None:
        if self.shared_layer_count > spec.n_layers:
            raise ValueError(
                f"shared_layer_count={self.shared_layer_count} exceeds the {spec.n_layers} weight layers")


@dataclass
class MixtureModel:
    spec: NetworkSpec
    config: MixtureConfig
    params: NetworkParams
    tags: list[np.ndarray]  # one int array per hidden layer

    def __post_init__(self):
        self._tables = None

    @property
    def k(self) -> int:
        return self.config.k

    def unit_tables(self) -> list[np.ndarray]:
        """Per hidden layer, a (K, h) 0/1 array of which units network j uses."""
        if self._tables is None:
            nets = np.arange(self.k)[:, None]
            self._tables = [((t[None, :] == SHARED) | (t[None, :] == nets)).astype(np.float64)
                            for t in self.tags]
        return self._tables

    def copy(self) -> "MixtureModel":
        return MixtureModel(self.spec, self.config, self.params.copy(), [t.copy() for t in self.tags])


@dataclass
class AssignmentTable:
    keys: list[tuple[str, int]]
    z: np.ndarray  # network index per sample, in pair order

    def __getitem__(self, key: tuple[str, int]) -> int:
        return int(self.z[self.keys.index(key)])

    def __len__(self):
        return len(self.keys)

    def to_dict(self) -> dict[tuple[str, int], int]:
        return {k: int(v) for k, v in zip(self.keys, self.z)}

    def counts(self, k: int) -> np.ndarray:
        return np.bincount(self.z, minlength=k)


def build_sharing_masks(spec: NetworkSpec, config: MixtureConfig, seed=0) -> list[np.ndarray]:
    """Tag every hidden unit as shared or private to one network.

    Hidden layers produced by the first `shared_layer_count` weight layers are
    entirely shared. In later hidden layers each unit, independently, becomes
    private to a uniformly chosen network with probability `private_prob`.
    """
    config.validate_for(spec)
    rng = np.random.default_rng(seed)
    tags = []
    for layer, h in enumerate(spec.hidden_sizes, start=1):
        if layer <= config.shared_layer_count:
            tags.append(np.full(h, SHARED, dtype=np.int64))
            continue
        private = rng.random(h) < config.private_prob
        owner = rng.integers(config.k, size=h)
        tags.append(np.where(private, owner, SHARED).astype(np.int64))
    if config.k > 1 and all(np.all(t == SHARED) for t in tags):
        log.warning("no private hidden units: all %d networks compute the same function", config.k)
    return tags


def init_mixture(spec: NetworkSpec, config: MixtureConfig, seed: int = 0) -> MixtureModel:
    init_seed, mask_seed, _, _ = seed_streams(seed)
    params = init_params(spec, config.init_scale, config.bias_const, seed=init_seed)
    return MixtureModel(spec, config, params, build_sharing_masks(spec, config, mask_seed))


def predict_all_batch(model: MixtureModel, X: np.ndarray) -> np.ndarray:
    """Inference-mode outputs of every network, shape (N, K, d_out)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    tables = model.unit_tables()
    n = X.shape[0]
    outs = []
    for j in range(model.k):
        masks = [np.broadcast_to(tab[j], (n, tab.shape[1])) for tab in tables]
        out, _ = forward_batch(model.params, model.spec, X, unit_masks=masks)
        outs.append(out)
    return np.stack(outs, axis=1)


def predict_all(model: MixtureModel, x) -> np.ndarray:
    """The K predicted futures for one input, shape (K, d_out)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.spec.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({model.spec.input_dim},)")
    return predict_all_batch(model, x[None, :])[0]


def loss_matrix(model: MixtureModel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Squared distance of every network's prediction to the target, (N, K)."""
    resid = predict_all_batch(model, X) - Y[:, None, :]
    return np.sum(resid * resid, axis=2)


def _assign(losses: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest network index on ties
    return np.argmin(losses, axis=1)


def e_step(model: MixtureModel, pairs: list[FramePair]) -> AssignmentTable:
    X, Y = stack_pairs(pairs)
    return AssignmentTable([p.key for p in pairs], _assign(loss_matrix(model, X, Y)))


def _m_step_arrays(model, X, Y, z, opt, iters, rng, state):
    tables = model.unit_tables()
    n = X.shape[0]
    bs = min(opt.batch_size, n)
    for _ in range(iters):
        idx = rng.choice(n, size=bs, replace=False)
        nets = z[idx]
        masks = [tab[nets] for tab in tables]
        _, grads = batch_loss_and_grads(model.params, model.spec, X[idx], Y[idx], train=True,
                                        rng=rng, unit_masks=masks)
        sgd_step(model.params, grads, state, opt)
    return model


def m_step(model: MixtureModel, pairs: list[FramePair], assignments: AssignmentTable,
           opt: OptimizerConfig, iters: int, rng: np.random.Generator | None = None,
           state: OptimizerState | None = None) -> MixtureModel:
    """Run `iters` SGD iterations on sum ||g_z(x) - target||^2 with z held fixed.

    Updates `model` in place (warm start). Without an explicit `state` the
    momentum buffers start at zero; without `rng` one is seeded from opt.seed.
    """
    if iters == 0:
        return model
    keyed = assignments.to_dict()
    try:
        z = np.array([keyed[p.key] for p in pairs], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"sample {exc.args[0]} has no assignment") from None
    if np.any((z < 0) | (z >= model.k)):
        raise ValueError("assignment outside 0..K-1")
    X, Y = stack_pairs(pairs)
    if rng is None:
        rng = np.random.default_rng(seed_streams(opt.seed)[3])
    if state is None:
        state = OptimizerState.zeros_like(model.params)
    return _m_step_arrays(model, X, Y, z, opt, iters, rng, state)


def rescue_empty(z: np.ndarray, losses: np.ndarray, k: int) -> np.ndarray:
    """Hand the ceil(1%) worst-fit samples to any network left without samples."""
    z = z.copy()
    n = len(z)
    take = max(1, math.ceil(0.01 * n))
    moved = np.zeros(n, dtype=bool)
    current = losses[np.arange(n), z]
    order = np.argsort(-current, kind="stable")
    for j in range(k):
        if np.any(z == j):
            continue
        picked = [i for i in order if not moved[i]][:take]
        z[picked] = j
        moved[picked] = True
        log.info("network %d was empty; reassigned %d worst-fit samples to it", j, len(picked))
    return z


class TrainingDiverged(RuntimeError):
    pass


def train_alternating(pairs: list[FramePair], spec: NetworkSpec, config: MixtureConfig,
                      opt: OptimizerConfig) -> tuple[MixtureModel, AssignmentTable, list[dict]]:
    """Hard-EM training from uniformly random initial assignments.

    Each alternation runs an M-step then an E-step and logs the full-data
    objective sum_i ||g_{z_i}(x_i) - y_i||^2 (inference mode) after each.
    Empty networks are refilled by `rescue_empty` just before an M-step, so
    logged E-step values are the pure argmin and never exceed the value
    logged before them.
    """
    if not pairs:
        raise ValueError("cannot train on an empty dataset")
    X, Y = stack_pairs(pairs)
    if X.shape[1] != spec.input_dim or Y.shape[1] != spec.output_dim:
        raise ValueError(f"data dims ({X.shape[1]} -> {Y.shape[1]}) do not match network "
                         f"({spec.input_dim} -> {spec.output_dim})")
    model = init_mixture(spec, config, opt.seed)
    _, _, z_seed, train_seed = seed_streams(opt.seed)
    z = np.random.default_rng(z_seed).integers(config.k, size=len(pairs))
    rng = np.random.default_rng(train_seed)
    state = OptimizerState.zeros_like(model.params)
    n = len(pairs)
    history = []

    def record(round_, phase, value):
        if not math.isfinite(value):
            raise TrainingDiverged(f"objective became {value} in round {round_} ({phase}-step); "
                                   "lower the learning rate")
        history.append({"round": round_, "phase": phase, "objective": value})

    for r in range(config.alternations):
        if np.bincount(z, minlength=config.k).min() == 0:
            z = rescue_empty(z, loss_matrix(model, X, Y), config.k)
        _m_step_arrays(model, X, Y, z, opt, config.iters_per_alternation, rng, state)
        losses = loss_matrix(model, X, Y)
        record(r, "m", float(np.sum(losses[np.arange(n), z])))
        z = _assign(losses)
        record(r, "e", float(np.sum(losses[np.arange(n), z])))
        log.debug("round %d: objective %.6g, counts %s", r, history[-1]["objective"],
                  np.bincount(z, minlength=config.k).tolist())
    return model, AssignmentTable([p.key for p in pairs], z), history


def train_plain_regression(pairs: list[FramePair], spec: NetworkSpec, iters: int, opt: OptimizerConfig,
                           init_scale: float = 0.01, bias_const: float = 0.0) -> NetworkParams:
    """A single network fit by minibatch SGD, seeded like `train_alternating`."""
    X, Y = stack_pairs(pairs)
    init_seed, _, _, train_seed = seed_streams(opt.seed)
    params = init_params(spec, init_scale, bias_const, seed=init_seed)
    fit_regression(params, spec, X, Y, opt, iters, np.random.default_rng(train_seed))
    return params


# --- serialization ----------------------------------------------------------

MODEL_TYPE = "mixture-v1"


def save_model(model: MixtureModel, path, provenance: dict | None = None) -> None:
    body = {
        "spec": {"layer_sizes": list(model.spec.layer_sizes), "dropout_ratio": model.spec.dropout_ratio},
        "mixture": asdict(model.config),
        "masks": [t.tolist() for t in model.tags],
        "weights": [w.tolist() for w in model.params.weights],
        "biases": [b.tolist() for b in model.params.biases],
        "provenance": provenance or {},
    }
    container.write_document(path, MODEL_TYPE, body)


def model_from_document(doc: dict, where: str = "model") -> MixtureModel:
    err = container.ModelFormatError
    try:
        spec = NetworkSpec(tuple(doc["spec"]["layer_sizes"]), float(doc["spec"]["dropout_ratio"]))
        config = MixtureConfig(**doc["mixture"])
        masks, weights, biases = doc["masks"], doc["weights"], doc["biases"]
    except (KeyError, TypeError, ValueError) as exc:
        raise err(f"{where}: invalid spec or mixture config ({exc})") from None
    if not isinstance(masks, list) or len(masks) != len(spec.hidden_sizes):
        raise err(f"{where}: expected {len(spec.hidden_sizes)} mask layers")
    if not isinstance(weights, list) or not isinstance(biases, list) or \
            len(weights) != spec.n_layers or len(biases) != spec.n_layers:
        raise err(f"{where}: expected {spec.n_layers} weight and bias arrays")
    tags = []
    for layer, (m, h) in enumerate(zip(masks, spec.hidden_sizes), start=1):
        if not isinstance(m, list) or len(m) != h or not all(isinstance(v, int) for v in m):
            raise err(f"{where}: mask of hidden layer {layer} must list {h} integer tags")
        t = np.array(m, dtype=np.int64)
        bad = t[(t < SHARED) | (t >= config.k)]
        if bad.size:
            raise err(f"{where}: mask of hidden layer {layer} references network {int(bad[0])}, "
                      f"but the model has only networks 0..{config.k - 1}")
        if layer <= config.shared_layer_count and np.any(t != SHARED):
            raise err(f"{where}: hidden layer {layer} must be fully shared "
                      f"(shared_layer_count={config.shared_layer_count})")
        tags.append(t)
    ws, bs = [], []
    for i in range(spec.n_layers):
        shape = (spec.layer_sizes[i + 1], spec.layer_sizes[i])
        ws.append(container.as_array(weights[i], shape, f"{where}: weights of layer {i}"))
        bs.append(container.as_array(biases[i], shape[:1], f"{where}: biases of layer {i}"))
    return MixtureModel(spec, config, NetworkParams(ws, bs), tags)


def load_model(path) -> MixtureModel:
    return model_from_document(container.read_document(path, MODEL_TYPE), str(path))
