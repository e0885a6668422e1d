"""Per-sensor damage scores, interpolated score maps and centroid estimates.

The relative change ``T`` compares the mean norm difference of test windows
with the training mean, scaled by the mean squared input norm. ``T`` of the
mu and sigma channels is normalized by its largest reference value and mixed
into a single score ``p`` per sensor, where values below one are baseline.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReference, InvalidArgument, NoSignal
from .io import atomic_open, fmt

LAMBDA = 0.5
RESOLUTION = 100
IDW_POWER = 2.0
DENSE_MIN_SENSORS = 10


@dataclass(frozen=True)
class DamageScores:
    T_mu: np.ndarray
    T_sigma: np.ndarray
    T_mu_ref_max: float
    T_sigma_ref_max: float
    p: np.ndarray
    lam: float = LAMBDA

    @property
    def mu_ratio(self):
        """Per-sensor ``T_mu / max(T_mu_ref)``, the mu-only damage map."""
        return self.T_mu / self.T_mu_ref_max

    @property
    def sigma_ratio(self):
        return self.T_sigma / self.T_sigma_ref_max


def relative_change(test_deltas, train_deltas, train_sq_norm):
    """Per-channel ``|mean(test) - mean(train)| / mean squared norm``.

    Parameters
    ----------
    test_deltas : array_like, shape (m, C)
    train_deltas : array_like, shape (n, C)
    train_sq_norm : array_like, shape (C,)
        Mean over training windows of the squared temporal norm of each channel.
    """
    test = np.atleast_2d(np.asarray(test_deltas, dtype=float))
    train = np.atleast_2d(np.asarray(train_deltas, dtype=float))
    den = np.asarray(train_sq_norm, dtype=float)
    if test.shape[0] < 1 or train.shape[0] < 1:
        raise InvalidArgument("need at least one test and one training window")
    if test.shape[1] != train.shape[1] or den.shape != (test.shape[1],):
        raise InvalidArgument("channel counts disagree")
    if np.any(den <= 0):
        raise DegenerateReference("reference squared norm must be positive")
    return np.abs(test.mean(axis=0) - train.mean(axis=0)) / den


def reference_changes(train_deltas, train_sq_norm, chunk):
    """``T`` of each contiguous ``chunk``-window block of the training deltas.

    This is the spread ``T`` shows on undamaged data when ``chunk`` test
    windows are averaged; its maximum normalizes the damage score.
    Returns shape (n_chunks, C).
    """
    train = np.asarray(train_deltas, dtype=float)
    chunk = int(chunk)
    if chunk < 1:
        raise InvalidArgument("chunk must be >= 1")
    n_chunks = train.shape[0] // chunk
    if n_chunks < 1:
        raise DegenerateReference(f"{train.shape[0]} training windows is fewer than one chunk of {chunk}")
    blocks = train[: n_chunks * chunk].reshape(n_chunks, chunk, -1)
    return np.stack([relative_change(b, train, train_sq_norm) for b in blocks])


def reference_maxima(ref_changes):
    """``(max T_mu, max T_sigma)`` over every reference block and sensor."""
    ref = np.atleast_2d(np.asarray(ref_changes, dtype=float))
    n = ref.shape[1] // 2
    return float(ref[:, :n].max()), float(ref[:, n:].max())


def damage_score(T_mu, T_sigma, ref_max_mu, ref_max_sigma, lam=LAMBDA):
    """Mix the mu and sigma relative changes into one score per sensor."""
    if not 0 <= lam <= 1:
        raise InvalidArgument("lambda must lie in [0, 1]")
    if not (ref_max_mu > 0 and ref_max_sigma > 0):
        raise DegenerateReference("reference maxima must be positive")
    T_mu = np.asarray(T_mu, dtype=float)
    T_sigma = np.asarray(T_sigma, dtype=float)
    return (lam * T_mu / ref_max_mu + (1.0 - lam) * T_sigma / ref_max_sigma) / 2.0


def score_sensors(T, ref_changes, lam=LAMBDA):
    """Full scoring from a per-channel ``T`` (shape 2N) and reference blocks."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0] // 2
    mx_mu, mx_sigma = reference_maxima(ref_changes)
    p = damage_score(T[:n], T[n:], mx_mu, mx_sigma, lam)
    return DamageScores(T[:n], T[n:], mx_mu, mx_sigma, p, lam)


# -- maps and estimates ---------------------------------------------------------

@dataclass
class ScoreMap:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (len(ys), len(xs))
    peak: tuple
    peak_defined: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self):
        return len(self.xs)

    def to_csv(self, path):
        with atomic_open(path) as fh:
            fh.write("x,y,score\n")
            for j, y in enumerate(self.ys):
                for i, x in enumerate(self.xs):
                    fh.write(f"{fmt(x)},{fmt(y)},{fmt(self.values[j, i])}\n")

    def to_pgm(self, path):
        """Binary 8-bit grayscale image, bright = high score, first row = max y."""
        v = self.values
        lo, hi = float(v.min()), float(v.max())
        scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
        img = np.round(scaled[::-1] * 255).astype(np.uint8)
        h, w = img.shape
        with atomic_open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(img.tobytes())


def idw(points, values, query, power=IDW_POWER):
    """Inverse-distance-weighted interpolation, exact at the data points."""
    pts = np.asarray(points, dtype=float)
    val = np.asarray(values, dtype=float)
    q = np.atleast_2d(np.asarray(query, dtype=float))
    d2 = np.sum((q[:, None, :] - pts[None]) ** 2, axis=-1)
    hit = d2 == 0
    w = 1.0 / np.where(hit, 1.0, d2) ** (power / 2.0)
    out = (w @ val) / w.sum(axis=1)
    rows = hit.any(axis=1)
    out[rows] = val[np.argmax(hit[rows], axis=1)]
    return out


def weighted_centroid(p, layout):
    """Score-weighted mean of the sensor positions."""
    p = np.asarray(p, dtype=float)
    pos = np.asarray(layout, dtype=float)
    if np.any(p < 0):
        raise InvalidArgument("scores must be nonnegative")
    total = p.sum()
    if not total > 0:
        raise NoSignal("all damage scores are zero")
    return tuple(float(v) for v in p @ pos / total)


def _collinear(pos):
    if len(pos) < 3:
        return True
    centered = pos - pos.mean(axis=0)
    return np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(centered).max())) < 2


def build_score_map(p, layout, resolution=RESOLUTION, power=IDW_POWER):
    """IDW map of ``p`` over the sensors' bounding box.

    Returns ``None`` for fewer than three or collinear sensors, where only the
    weighted centroid is meaningful. A flat map has ``peak_defined=False``.
    """
    pos = np.asarray(layout, dtype=float)
    p = np.asarray(getattr(p, "p", p), dtype=float)
    if resolution < 2:
        raise InvalidArgument("resolution must be >= 2")
    if _collinear(pos):
        return None
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    values = idw(pos, p, np.column_stack([gx.ravel(), gy.ravel()]), power).reshape(gx.shape)
    flat = bool(np.all(p == p[0]))
    # power-2 IDW peaks at a data point, so the peak is the top sensor
    k = int(np.argmax(p))
    peak = (float(pos[k, 0]), float(pos[k, 1]))
    meta = {"min": float(values.min()), "max": float(values.max()), "power": power}
    return ScoreMap(xs, ys, values, peak, not flat, meta)


def estimate_location(p, layout, dense_min=DENSE_MIN_SENSORS):
    """Map peak for dense layouts, weighted centroid for sparse ones."""
    pos = np.asarray(layout, dtype=float)
    if len(pos) >= dense_min:
        k = int(np.argmax(np.asarray(p)))
        return (float(pos[k, 0]), float(pos[k, 1]))
    return weighted_centroid(p, pos)


def default_radius(layout):
    """Half the smallest sensor-to-sensor distance."""
    pos = np.asarray(layout, dtype=float)
    if len(pos) < 2:
        raise InvalidArgument("need two sensors to define a pitch")
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    return 0.5 * float(d[np.triu_indices(len(pos), 1)].min())


def localization_success(estimate, truth, radius):
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    return bool(np.hypot(estimate[0] - truth[0], estimate[1] - truth[1]) <= radius)
