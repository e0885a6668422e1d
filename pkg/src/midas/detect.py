"""Damage detection from reconstruction errors.

Each sensor gets its own error threshold, the ``1 - fpr`` quantile of its
training errors. A window is declared damaged when more than ``q * N`` sensors
exceed their thresholds.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CannotBalance, InsufficientReference, InvalidArgument
from .miae import forward, sensor_errors

FPR = 0.05
Q = 0.1
MIN_REFERENCE = 20


@dataclass(frozen=True)
class DetectionPolicy:
    fpr: float = FPR
    q: float = Q

    def __post_init__(self):
        if not 0 < self.fpr < 1 or not 0 < self.q < 1:
            raise InvalidArgument("fpr and q must lie in (0, 1)")


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float  # nan when the truth has a single class
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self):
        d = asdict(self)
        d["auroc"] = None if np.isnan(self.auroc) else self.auroc
        return d


def reconstruction_errors(model, dataset):
    """(B, N) per-sensor squared reconstruction errors for a normalized dataset."""
    if not dataset.normalized:
        raise InvalidArgument("dataset must be normalized with the model's statistics")
    st, ms = dataset.norm_stats, model.norm_stats
    if ms is not None and (st is None or not (np.array_equal(st.mean, ms.mean) and np.array_equal(st.std, ms.std))):
        raise InvalidArgument("dataset normalization does not match the model")
    x = dataset.tensor
    return sensor_errors(x, forward(model, x))


def calibrate_thresholds(reference, fpr=FPR):
    """Per-sensor ``1 - fpr`` empirical quantile of the reference errors."""
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 2 or ref.shape[0] < MIN_REFERENCE:
        raise InsufficientReference(f"need at least {MIN_REFERENCE} reference windows")
    if not 0 < fpr < 1:
        raise InvalidArgument("fpr must lie in (0, 1)")
    return np.quantile(ref, 1.0 - fpr, axis=0)


def anomalous_sensors(errors, thresholds):
    return np.asarray(errors) > np.asarray(thresholds)


def classify_windows(errors, thresholds, policy=DetectionPolicy()):
    """Boolean damage flag per window: more than ``q * N`` sensors over threshold."""
    errors = np.asarray(errors, dtype=float)
    if errors.shape[-1] != np.shape(thresholds)[-1]:
        raise InvalidArgument("errors and thresholds disagree on the sensor count")
    count = anomalous_sensors(errors, thresholds).sum(axis=-1)
    return count > policy.q * errors.shape[-1]


def window_scores(errors):
    """Scalar anomaly score per window: the mean per-sensor error."""
    return np.asarray(errors, dtype=float).mean(axis=-1)


# -- class balancing -----------------------------------------------------------

def _pairwise(a, b):
    d = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def smote(X, y, k=5, seed=0):
    """Oversample the minority class to parity by interpolating toward its neighbours."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2 or counts.min() < 2:
        raise CannotBalance("need two classes with at least two samples each")
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    minority = classes[np.argmin(counts)]
    need = counts.max() - counts.min()
    if need == 0:
        return X.copy(), y.copy()
    pts = X[y == minority]
    kk = min(k, len(pts) - 1)
    d = _pairwise(pts, pts)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1, kind="stable")[:, :kk]
    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(pts), need)
    pick = nn[base, rng.integers(0, kk, need)]
    gap = rng.random(need)[:, None]
    synth = pts[base] + gap * (pts[pick] - pts[base])
    return np.vstack([X, synth]), np.concatenate([y, np.full(need, minority)])


def edited_nearest_neighbours(X, y, k=3):
    """Drop samples whose label disagrees with the majority of their ``k`` neighbours."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if len(X) <= k:
        return X.copy(), y.copy()
    d = _pairwise(X, X)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    disagree = (y[nn] != y[:, None]).sum(axis=1)
    keep = ~(2 * disagree > k)
    return X[keep], y[keep]


def smote_enn_balance(X, y, k=5, seed=0):
    """SMOTE to class parity followed by edited-nearest-neighbour cleaning."""
    Xs, ys = smote(X, y, k, seed)
    return edited_nearest_neighbours(Xs, ys, k)


# -- metrics -------------------------------------------------------------------

def auroc(scores, truth):
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth).astype(bool)
    n_pos, n_neg = int(truth.sum()), int((~truth).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(flags, truth, scores=None):
    flags = np.asarray(flags).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if flags.shape != truth.shape:
        raise InvalidArgument("predictions and labels differ in length")
    tp = int(np.sum(flags & truth))
    fp = int(np.sum(flags & ~truth))
    fn = int(np.sum(~flags & truth))
    tn = int(np.sum(~flags & ~truth))
    n = len(flags)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    area = auroc(scores, truth) if scores is not None else float("nan")
    return MetricReport((tp + tn) / n if n else 0.0, precision, recall, f1, area, tp, fp, fn, tn)


def evaluate_case(normal_errors, damaged_errors, thresholds, policy=DetectionPolicy(),
                  balance=True, k=5, seed=0):
    """Metrics for undamaged vs damaged error vectors, optionally SMOTE-ENN balanced."""
    X = np.vstack([normal_errors, damaged_errors])
    y = np.concatenate([np.zeros(len(normal_errors), int), np.ones(len(damaged_errors), int)])
    if balance:
        X, y = smote_enn_balance(X, y, k, seed)
    flags = classify_windows(X, thresholds, policy)
    return evaluate(flags, y, window_scores(X))
