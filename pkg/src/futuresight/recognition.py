"""Linear classifiers on (predicted) representations and marginalization over K futures.

The same trainer covers three uses, distinguished only by the features the
caller feeds it:

* off-the-shelf: true future representations, later applied to predictions;
* adapted: the regression's own predictions (all K of them per sample);
* direct: the current frame, i.e. a classifier that never sees the future.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import container
from .data import FramePair
from .mixture import MixtureModel, predict_all_batch


@dataclass(frozen=True)
class ClassifierConfig:
    loss: str = "hinge"  # or "logistic"
    l2: float = 1e-3
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    multi_label: bool = False

    def __post_init__(self):
        if self.loss not in ("hinge", "logistic"):
            raise ValueError(f"loss must be 'hinge' or 'logistic', got {self.loss!r}")
        if self.l2 < 0 or self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("invalid classifier optimisation settings")


@dataclass
class LinearClassifier:
    categories: list[str]
    W: np.ndarray  # (C, d)
    b: np.ndarray  # (C,)
    loss: str = "hinge"
    l2: float = 1e-3
    multi_label: bool = False

    @property
    def dim(self) -> int:
        return self.W.shape[1]


def _label_matrix(labels, multi_label: bool) -> tuple[list[str], np.ndarray]:
    sets = []
    for lab in labels:
        s = frozenset([lab]) if isinstance(lab, str) else frozenset(lab)
        if not multi_label and len(s) != 1:
            raise ValueError(f"single-label mode needs exactly one label per sample, got {sorted(s)}")
        sets.append(s)
    categories = sorted(set().union(*sets)) if sets else []
    index = {c: i for i, c in enumerate(categories)}
    Y = -np.ones((len(sets), len(categories)))
    for i, s in enumerate(sets):
        for c in s:
            Y[i, index[c]] = 1.0
    return categories, Y


def train_linear_classifier(features, labels, config: ClassifierConfig = ClassifierConfig()) -> LinearClassifier:
    """One-vs-rest linear classifier by minibatch subgradient descent.

    The step size decays as lr / (1 + lr * l2 * t), which keeps the weight
    shrinkage factor (1 - step * l2) inside [0, 1) for any l2.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(labels):
        raise ValueError("features must be an (N, d) array with one label entry per row")
    categories, Y = _label_matrix(labels, config.multi_label)
    if not categories:
        raise ValueError("no category labels in the training set")
    if not config.multi_label and len(categories) < 2:
        raise ValueError(f"single-label training needs at least 2 categories, got {categories}")
    if config.multi_label and not np.all((Y > 0).any(axis=0)):
        raise ValueError("every category needs at least one positive example")

    n, d = X.shape
    W = np.zeros((len(categories), d))
    b = np.zeros(len(categories))
    rng = np.random.default_rng(config.seed)
    lr0, lam = config.learning_rate, config.l2
    t = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, Yb = X[idx], Y[idx]
            margin = Yb * (Xb @ W.T + b)
            if config.loss == "hinge":
                gs = -Yb * (margin < 1.0)
            else:
                gs = -Yb / (1.0 + np.exp(np.clip(margin, -50, 50)))
            step = lr0 / (1.0 + lr0 * lam * t)
            W = (1.0 - step * lam) * W - step * (gs.T @ Xb) / len(idx)
            b = b - step * gs.mean(axis=0)
            t += 1
    return LinearClassifier(categories, W, b, config.loss, lam, config.multi_label)


def softmax(s: np.ndarray) -> np.ndarray:
    z = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def scores(clf: LinearClassifier, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != clf.dim:
        raise ValueError(f"feature dim {X.shape[-1]} does not match classifier dim {clf.dim}")
    return X @ clf.W.T + clf.b


def classify(clf: LinearClassifier, feature) -> tuple[np.ndarray, np.ndarray]:
    """Raw scores w_c . x + b_c and their softmax."""
    s = scores(clf, feature)
    return s, softmax(s)


def marginalize_predictions(distributions, weights=None) -> np.ndarray:
    """Weighted average of K category distributions (uniform weights by default)."""
    P = np.atleast_2d(np.asarray(distributions, dtype=np.float64))
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("every input distribution must be nonnegative and sum to 1")
    k = P.shape[-2]
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (k,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError(f"weights must be a simplex over {k} entries")
    out = np.einsum("k,...kc->...c", w, P)
    return out / out.sum(axis=-1, keepdims=True)


@dataclass
class AnticipationResult:
    per_network_scores: np.ndarray  # (K, C)
    marginal: np.ndarray  # (C,)
    category: str


def anticipate_category(model: MixtureModel, clf: LinearClassifier, x, offset=None) -> AnticipationResult:
    """Predict K futures, classify each, marginalize; the argmax is the anticipated category.

    `offset` is added to every predicted representation before classification.
    """
    if model.spec.output_dim != clf.dim:
        raise ValueError(f"model predicts {model.spec.output_dim}-dim features, classifier expects {clf.dim}")
    preds = predict_all_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]
    if offset is not None:
        preds = preds + offset
    s = scores(clf, preds)
    marginal = marginalize_predictions(softmax(s))
    return AnticipationResult(s, marginal, clf.categories[int(np.argmax(marginal))])


def anticipate_batch(clf: LinearClassifier, k_preds: np.ndarray) -> tuple[list[str], np.ndarray]:
    """Anticipated category and marginal for an (N, K, d) stack of predictions."""
    marg = marginalize_predictions(softmax(scores(clf, k_preds)))
    return [clf.categories[i] for i in np.argmax(marg, axis=1)], marg


def single_labels(pairs: list[FramePair]) -> list[str]:
    out = []
    for p in pairs:
        if len(p.future_labels) != 1:
            raise ValueError(f"pair {p.key} has {len(p.future_labels)} future labels, expected 1")
        out.append(next(iter(p.future_labels)))
    return out


def adapted_training_set(k_preds: np.ndarray, labels: list) -> tuple[np.ndarray, list]:
    """Flatten (N, K, d) predictions into N*K rows, each carrying its sample's label."""
    n, k, d = k_preds.shape
    return k_preds.reshape(n * k, d), [lab for lab in labels for _ in range(k)]


def train_adapted(model: MixtureModel, pairs: list[FramePair], config: ClassifierConfig = ClassifierConfig(),
                  offset=None) -> LinearClassifier:
    X = np.stack([p.input for p in pairs])
    preds = predict_all_batch(model, X)
    if offset is not None:
        preds = preds + offset
    labels = [p.future_labels for p in pairs] if config.multi_label else single_labels(pairs)
    feats, labs = adapted_training_set(preds, labels)
    return train_linear_classifier(feats, labs, config)


def train_off_the_shelf(pairs: list[FramePair], config: ClassifierConfig = ClassifierConfig()) -> LinearClassifier:
    labels = [p.future_labels for p in pairs] if config.multi_label else single_labels(pairs)
    return train_linear_classifier(np.stack([p.target for p in pairs]), labels, config)


def train_direct(pairs: list[FramePair], config: ClassifierConfig = ClassifierConfig()) -> LinearClassifier:
    """Current-frame features with future labels: classification without forecasting."""
    labels = [p.future_labels for p in pairs] if config.multi_label else single_labels(pairs)
    return train_linear_classifier(np.stack([p.input for p in pairs]), labels, config)


# --- serialization ----------------------------------------------------------

CLASSIFIER_TYPE = "linear-classifier-v1"


def save_classifier(clf: LinearClassifier, path, config: dict | None = None) -> None:
    body = asdict(clf)
    body["W"], body["b"] = clf.W.tolist(), clf.b.tolist()
    body["config"] = config or {}
    container.write_document(path, CLASSIFIER_TYPE, body)


def load_classifier(path) -> LinearClassifier:
    doc = container.read_document(path, CLASSIFIER_TYPE)
    try:
        cats = [str(c) for c in doc["categories"]]
        W = container.as_array(doc["W"], None, f"{path}: W")
        if W.ndim != 2 or W.shape[0] != len(cats):
            raise container.ModelFormatError(f"{path}: W must have one row per category")
        b = container.as_array(doc["b"], (len(cats),), f"{path}: b")
        return LinearClassifier(cats, W, b, doc["loss"], float(doc["l2"]), bool(doc["multi_label"]))
    except KeyError as exc:
        raise container.ModelFormatError(f"{path}: missing field {exc.args[0]!r}") from None
