"""Feature sequences, (current, future) pair construction and synthetic data.

Feature files are UTF-8 JSON-lines, one frame per line::

    {"video": "v0003", "t": 12, "feat": [0.1, -2.3, ...], "labels": ["mode-1"]}

Lines may come in any order; the loader groups them by video and sorts by
frame index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Raised for malformed or inconsistent feature files."""


@dataclass
class FeatureSequence:
    video_id: str
    t: np.ndarray  # (T,) strictly increasing ints
    feats: np.ndarray  # (T, d)
    labels: list[frozenset[str]] = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.feats = np.asarray(self.feats, dtype=np.float64).reshape(len(self.t), -1)
        if not self.labels:
            self.labels = [frozenset() for _ in range(len(self.t))]
        if len(self.labels) != len(self.t):
            raise ValueError(f"{self.video_id}: {len(self.labels)} label sets for {len(self.t)} frames")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError(f"{self.video_id}: frame indices must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.feats.shape[1]


@dataclass
class FramePair:
    input: np.ndarray
    target: np.ndarray
    video_id: str
    t: int
    delta: int
    future_labels: frozenset[str] = frozenset()
    true_mode: int | None = None

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.t)


def stack_pairs(pairs: list[FramePair]) -> tuple[np.ndarray, np.ndarray]:
    """(N, d_in) inputs and (N, d_out) targets."""
    if not pairs:
        raise ValueError("no pairs")
    return np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs])


def make_pairs(seqs: list[FeatureSequence], delta: int, truth: "GroundTruth | None" = None) -> list[FramePair]:
    """Every (frame t, frame t+delta) pair inside a single video.

    With `truth`, each pair carries the mode of the transition that produced
    its target frame.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    pairs = []
    for seq in seqs:
        index = {int(t): i for i, t in enumerate(seq.t)}
        for i, t in enumerate(seq.t):
            j = index.get(int(t) + delta)
            if j is None:
                continue
            mode = None
            if truth is not None:
                mode = truth.modes.get((seq.video_id, int(t) + delta))
            pairs.append(FramePair(seq.feats[i], seq.feats[j], seq.video_id, int(t), delta,
                                   seq.labels[j], mode))
    return pairs


def split_dataset(seqs: list[FeatureSequence], train_fraction: float = 0.75,
                  seed: int = 0) -> tuple[list[FeatureSequence], list[FeatureSequence]]:
    """Split whole videos into train and test; the rounding remainder goes to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(seqs)
    if n < 2:
        raise ValueError(f"need at least 2 videos to split, got {n}")
    n_test = math.floor(n * (1.0 - train_fraction) + 1e-9)
    n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [s for i, s in enumerate(seqs) if i not in test_idx]
    test = [s for i, s in enumerate(seqs) if i in test_idx]
    return train, test


# --- file I/O -------------------------------------------------------------


def write_sequences(seqs: list[FeatureSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            for t, feat, labels in zip(seq.t, seq.feats, seq.labels):
                rec = {"video": seq.video_id, "t": int(t), "feat": feat.tolist()}
                if labels:
                    rec["labels"] = sorted(labels)
                fh.write(json.dumps(rec) + "\n")


def load_sequences(path) -> list[FeatureSequence]:
    grouped: dict[str, dict[int, tuple[list, frozenset]]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataFormatError(f"{path}:{lineno}: expected a JSON object")
            try:
                video, t, feat = rec["video"], rec["t"], rec["feat"]
            except KeyError as exc:
                raise DataFormatError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
            if not isinstance(video, str) or not isinstance(t, int) or isinstance(t, bool):
                raise DataFormatError(f"{path}:{lineno}: 'video' must be a string and 't' an integer")
            if not isinstance(feat, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in feat):
                raise DataFormatError(f"{path}:{lineno}: 'feat' must be a list of numbers")
            if not all(math.isfinite(v) for v in feat):
                raise DataFormatError(f"{path}:{lineno}: non-finite feature value")
            if dim is None:
                dim = len(feat)
            elif len(feat) != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: feature length {len(feat)} differs from dataset dim {dim}")
            labels = rec.get("labels", [])
            if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
                raise DataFormatError(f"{path}:{lineno}: 'labels' must be a list of strings")
            frames = grouped.setdefault(video, {})
            if t in frames:
                raise DataFormatError(f"{path}:{lineno}: duplicate frame ({video!r}, {t})")
            frames[t] = (feat, frozenset(labels))

    seqs = []
    for video, frames in grouped.items():
        ts = sorted(frames)
        seqs.append(FeatureSequence(video, np.array(ts, dtype=np.int64),
                                    np.array([frames[t][0] for t in ts], dtype=np.float64).reshape(len(ts), dim),
                                    [frames[t][1] for t in ts]))
    return seqs


# --- synthetic multi-modal sequences --------------------------------------


@dataclass
class SynthConfig:
    """Sequences driven by M affine maps, one picked per transition.

    persistence > 0 makes modes sticky: with that probability a transition
    reuses the previous mode, otherwise it draws from mode_probs (which stays
    the stationary distribution). identity_dynamics replaces the maps with
    A=I, b=0 and is only meaningful for a single mode.
    """

    n_sequences: int = 200
    seq_len: int = 50
    dim: int = 8
    n_modes: int = 2
    noise_sigma: float = 0.05
    mode_probs: list[float] | None = None
    seed: int = 0
    persistence: float = 0.0
    contraction: float = 0.5
    offset_scale: float = 2.0
    identity_dynamics: bool = False

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.n_sequences < 0 or self.seq_len < 1 or self.dim < 1:
            raise ValueError("n_sequences >= 0, seq_len >= 1 and dim >= 1 are required")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.mode_probs is None:
            self.mode_probs = [1.0 / self.n_modes] * self.n_modes
        probs = np.asarray(self.mode_probs, dtype=np.float64)
        if probs.shape != (self.n_modes,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"mode_probs must be a simplex over {self.n_modes} modes")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError("persistence must lie in [0, 1)")
        if self.identity_dynamics and self.n_modes > 1:
            raise ValueError("identity_dynamics makes all modes identical; use n_modes=1")


@dataclass
class GroundTruth:
    """Generator internals: the affine maps and every transition's mode.

    modes[(video, t)] is the mode of the transition that produced frame t,
    so frame 0 of each video has no entry.
    """

    A: np.ndarray  # (M, d, d)
    b: np.ndarray  # (M, d)
    mode_probs: np.ndarray
    modes: dict[tuple[str, int], int]

    def mode_outputs(self, X: np.ndarray) -> np.ndarray:
        """Noise-free next state under every mode, shape (N, M, d)."""
        X = np.atleast_2d(X)
        return np.einsum("mij,nj->nmi", self.A, X) + self.b[None, :, :]

    def conditional_mean(self, X: np.ndarray) -> np.ndarray:
        """E[x_next | x] for i.i.d. modes: the probability-weighted mode outputs."""
        return np.einsum("m,nmi->ni", self.mode_probs, self.mode_outputs(X))

    def midpoint_gap(self, X: np.ndarray) -> float:
        """Average of 1/4 ||(A_1 - A_2) x + (b_1 - b_2)||^2 over the rows of X.

        Lower bound on the expected squared error of any single-output
        predictor when two modes are equiprobable.
        """
        if len(self.b) != 2:
            raise ValueError("midpoint gap is defined for two modes")
        out = self.mode_outputs(X)
        diff = out[:, 0] - out[:, 1]
        return float(0.25 * np.mean(np.sum(diff * diff, axis=1)))


def _random_maps(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    d, M = cfg.dim, cfg.n_modes
    if cfg.identity_dynamics:
        return np.eye(d)[None].repeat(M, axis=0), np.zeros((M, d))
    min_sep = 10.0 * cfg.noise_sigma
    for _ in range(1000):
        A = np.empty((M, d, d))
        for m in range(M):
            q, r = np.linalg.qr(rng.standard_normal((d, d)))
            A[m] = cfg.contraction * q * np.sign(np.diag(r))
        b = rng.standard_normal((M, d))
        b *= cfg.offset_scale / np.linalg.norm(b, axis=1, keepdims=True)
        # min over unit x of ||(A_i - A_j) x + b_i - b_j|| >= ||b_i - b_j|| - ||A_i - A_j||_2
        ok = all(np.linalg.norm(b[i] - b[j]) - np.linalg.norm(A[i] - A[j], 2) >= min_sep
                 for i in range(M) for j in range(i + 1, M))
        if ok:
            return A, b
    raise ValueError("could not draw well-separated modes; raise offset_scale or lower noise_sigma")


def generate_synthetic(cfg: SynthConfig) -> tuple[list[FeatureSequence], GroundTruth]:
    """x_{t+1} = A_m x_t + b_m + noise, with the mode m drawn per transition."""
    rng = np.random.default_rng(cfg.seed)
    A, b = _random_maps(cfg, rng)
    probs = np.asarray(cfg.mode_probs, dtype=np.float64)
    width = len(str(max(cfg.n_sequences - 1, 0)))
    seqs, modes = [], {}
    for s in range(cfg.n_sequences):
        vid = f"v{s:0{width}d}"
        feats = np.empty((cfg.seq_len, cfg.dim))
        labels = [frozenset()]
        feats[0] = rng.standard_normal(cfg.dim)
        m = None
        for t in range(1, cfg.seq_len):
            if m is None or rng.random() >= cfg.persistence:
                m = int(rng.choice(cfg.n_modes, p=probs))
            noise = rng.standard_normal(cfg.dim) * cfg.noise_sigma
            feats[t] = A[m] @ feats[t - 1] + b[m] + noise
            labels.append(frozenset({f"mode-{m}"}))
            modes[(vid, t)] = m
        seqs.append(FeatureSequence(vid, np.arange(cfg.seq_len), feats, labels))
    return seqs, GroundTruth(A, b, probs, modes)


def write_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (vid, t), m in truth.modes.items():
            fh.write(json.dumps({"video": vid, "t": t, "mode": m}) + "\n")


def load_truth_modes(path) -> dict[tuple[str, int], int]:
    modes = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            modes[(rec["video"], int(rec["t"]))] = int(rec["mode"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DataFormatError(f"{path}:{lineno}: malformed ground-truth record") from None
    return modes
