"""Bimodal synthetic benchmark shared by the experiment scripts and acceptance tests.

Two affine modes on 8-dim features, 40 training videos of 51 frames (2000
pairs at delta 1) and 13 held-out videos. The network settings below are the
desk-scale calibration: no dropout, a near-linear start (small weights, unit
biases) and batches of 128.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, metrics, recognition
from .data import FramePair, GroundTruth, SynthConfig, generate_synthetic, make_pairs, split_dataset, stack_pairs
from .mixture import AssignmentTable, MixtureConfig, MixtureModel, predict_all_batch, train_alternating
from .nn import NetworkSpec, OptimizerConfig


@dataclass(frozen=True)
class BenchmarkConfig:
    seed: int = 0
    n_sequences: int = 53
    seq_len: int = 51
    dim: int = 8
    noise_sigma: float = 0.05
    persistence: float = 0.0
    train_fraction: float = 0.75
    delta: int = 1
    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.0
    shared_layer_count: int = 1
    private_prob: float = 0.5
    alternations: int = 20
    iters_per_alternation: int = 400
    init_scale: float = 0.01
    bias_const: float = 1.0
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 128
    classifier: recognition.ClassifierConfig = field(default_factory=recognition.ClassifierConfig)

    def synth(self) -> SynthConfig:
        return SynthConfig(n_sequences=self.n_sequences, seq_len=self.seq_len, dim=self.dim, n_modes=2,
                           noise_sigma=self.noise_sigma, seed=self.seed, persistence=self.persistence)

    def spec(self) -> NetworkSpec:
        return NetworkSpec((self.dim, *self.hidden, self.dim), self.dropout)

    def mixture(self, k: int) -> MixtureConfig:
        return MixtureConfig(k=k, shared_layer_count=self.shared_layer_count, private_prob=self.private_prob,
                             alternations=self.alternations, iters_per_alternation=self.iters_per_alternation,
                             init_scale=self.init_scale, bias_const=self.bias_const)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(self.learning_rate, self.momentum, self.batch_size, self.seed)


def make_bimodal(cfg: BenchmarkConfig) -> tuple[list[FramePair], list[FramePair], GroundTruth]:
    seqs, truth = generate_synthetic(cfg.synth())
    train, test = split_dataset(seqs, cfg.train_fraction, cfg.seed)
    return make_pairs(train, cfg.delta, truth), make_pairs(test, cfg.delta, truth), truth


def train_mixture(cfg: BenchmarkConfig, k: int, pairs: list[FramePair]):
    return train_alternating(pairs, cfg.spec(), cfg.mixture(k), cfg.optimizer())


def assignment_agreement(assignments: AssignmentTable, true_modes, k: int) -> float:
    """Best fraction of matching labels over all relabellings of the K networks."""
    z = np.asarray(assignments.z)
    m = np.asarray(true_modes)
    best = 0.0
    for perm in itertools.permutations(range(k)):
        best = max(best, float(np.mean(np.asarray(perm)[z] == m)))
    return best


def midpoint_offset(point_preds: np.ndarray, X: np.ndarray, truth: GroundTruth) -> float:
    """Distance between the mean prediction and the mean mode midpoint, relative to the mode half-gap.

    Both means run over the rows of X. The scale is the average distance from
    the midpoint to either mode output, so 0 means the predictor sits exactly
    on the midpoint and 1 means it has collapsed onto one of the modes.
    """
    outs = truth.mode_outputs(X)
    mid = truth.conditional_mean(X)
    half_gap = 0.5 * np.linalg.norm(outs[:, 0] - outs[:, 1], axis=1)
    return float(np.linalg.norm(point_preds.mean(axis=0) - mid.mean(axis=0)) / half_gap.mean())


def midpoint_offset_per_sample(point_preds: np.ndarray, X: np.ndarray, truth: GroundTruth) -> float:
    """Per-sample variant: mean ||g(x) - mid(x)|| over mean half-gap (stricter, informational)."""
    outs = truth.mode_outputs(X)
    half_gap = 0.5 * np.linalg.norm(outs[:, 0] - outs[:, 1], axis=1)
    return float(np.linalg.norm(point_preds - truth.conditional_mean(X), axis=1).mean() / half_gap.mean())


def run_regression_benchmark(cfg: BenchmarkConfig) -> dict:
    """K=1 and K=2 mixtures plus the identity and linear baselines on held-out pairs."""
    start = time.perf_counter()
    train, test, truth = make_bimodal(cfg)
    X, Y = stack_pairs(test)
    out = {"seed": cfg.seed, "n_train": len(train), "n_test": len(test)}

    m1, _, hist1 = train_mixture(cfg, 1, train)
    p1 = predict_all_batch(m1, X)
    out["k1_distance"] = metrics.mean_euclidean_distance(p1[:, 0], Y)
    out["k1_midpoint_offset"] = midpoint_offset(p1[:, 0], X, truth)
    out["k1_midpoint_offset_per_sample"] = midpoint_offset_per_sample(p1[:, 0], X, truth)

    m2, z2, hist2 = train_mixture(cfg, 2, train)
    p2 = predict_all_batch(m2, X)
    out["k2_min_over_k"] = metrics.min_over_k_distance(p2, Y)
    out["k2_agreement"] = assignment_agreement(z2, [p.true_mode for p in train], 2)
    out["histories"] = {"k1": hist1, "k2": hist2}

    out["identity_distance"] = metrics.mean_euclidean_distance(baselines.identity_predict(X), Y)
    reg = baselines.fit_linear(train)
    out["linear_distance"] = metrics.mean_euclidean_distance(baselines.predict_linear(reg, X), Y)
    out["ratio_k2_k1"] = out["k2_min_over_k"] / out["k1_distance"]
    out["seconds"] = time.perf_counter() - start
    return out


def class_mean_offset(pairs: list[FramePair], scale: float = 0.5) -> np.ndarray:
    """scale * (mean future of the last category - mean future of the first), from labelled pairs.

    A systematic bias of this size pushes every prediction halfway toward
    another category's region, which defeats a classifier trained on true
    features but not one trained on the biased predictions.
    """
    labels = recognition.single_labels(pairs)
    cats = sorted(set(labels))
    Y = np.stack([p.target for p in pairs])
    lab = np.array(labels)
    return scale * (Y[lab == cats[-1]].mean(axis=0) - Y[lab == cats[0]].mean(axis=0))


def run_anticipation_benchmark(cfg: BenchmarkConfig, bias_scale: float = 0.5,
                               model: MixtureModel | None = None) -> dict:
    """Adapted K=2 anticipation accuracy, then adapted vs off-the-shelf under an injected bias."""
    start = time.perf_counter()
    train, test, _ = make_bimodal(cfg)
    if model is None:
        model, _, _ = train_mixture(cfg, 2, train)
    X, _ = stack_pairs(test)
    truth_labels = recognition.single_labels(test)
    preds = predict_all_batch(model, X)

    def acc(clf, p):
        return metrics.top1_accuracy(recognition.anticipate_batch(clf, p)[0], truth_labels)

    adapted = recognition.train_adapted(model, train, cfg.classifier)
    offset = class_mean_offset(train, bias_scale)
    adapted_biased = recognition.train_adapted(model, train, cfg.classifier, offset=offset)
    shelf = recognition.train_off_the_shelf(train, cfg.classifier)
    return {
        "seed": cfg.seed,
        "adapted_accuracy": acc(adapted, preds),
        "off_the_shelf_accuracy": acc(shelf, preds),
        "biased_adapted_accuracy": acc(adapted_biased, preds + offset),
        "biased_off_the_shelf_accuracy": acc(shelf, preds + offset),
        "offset_norm": float(np.linalg.norm(offset)),
        "seconds": time.perf_counter() - start,
    }


def with_seed(cfg: BenchmarkConfig, seed: int) -> BenchmarkConfig:
    return replace(cfg, seed=seed)
