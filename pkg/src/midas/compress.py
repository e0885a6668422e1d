"""Strain-segment compression into Gaussian survival-curve parameters.

Each fixed-length segment of a strain signal is reduced to the time it spends
above a ladder of thresholds, and that dwell curve is fitted with
``F(e) = A/2 * (1 - erf((e - mu) / (sigma * sqrt(2))))``. The fit uses
Levenberg-Marquardt with the exact ``erf`` from the C math library (compiled
kernels) or ``math.erf`` (fallback).
"""
from dataclasses import dataclass
from math import erf, sqrt

import numpy as np

from . import _backend
from .errors import (
    DegenerateThresholds,
    FitDiverged,
    InsufficientData,
    InvalidArgument,
    MisalignedStreams,
    NoEvents,
)
from .io import atomic_open, fmt

SEGMENT_LEN = 200
N_LEVELS = 7

FLAG_NO_EVENTS = 1
FLAG_DIVERGED = 2


@dataclass(frozen=True)
class ThresholdSet:
    levels: tuple

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or len(lv) < 3:
            raise InvalidArgument("need at least three threshold levels")
        if np.any(np.diff(lv) <= 0):
            raise InvalidArgument("threshold levels must be strictly increasing")
        object.__setattr__(self, "levels", tuple(float(v) for v in lv))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.levels, dtype=dtype)

    def __len__(self):
        return len(self.levels)

    def scaled(self, c):
        return ThresholdSet(tuple(c * v for v in self.levels))


# Laboratory preset: 30 micro-strain upward in steps of 24.
LAB_THRESHOLDS = ThresholdSet(tuple(30.0 + 24.0 * k for k in range(N_LEVELS)))


def select_thresholds(streams, n_levels=N_LEVELS, low=0.5, high=3.0):
    """Evenly spaced levels between ``low`` and ``high`` times the mean strain.

    ``streams`` is a :class:`~midas.simkit.StrainStream`, a list of them, or a
    raw array; the mean runs over every sample of every sensor.
    """
    if isinstance(streams, (list, tuple)):
        if not streams:
            raise InvalidArgument("no streams given")
        arrays = [np.asarray(getattr(s, "strains", s), dtype=float).ravel() for s in streams]
        data = np.concatenate(arrays)
    else:
        data = np.asarray(getattr(streams, "strains", streams), dtype=float).ravel()
    if data.size == 0:
        raise InvalidArgument("no strain samples given")
    mean = float(data.mean())
    if not mean > 0:
        raise DegenerateThresholds(f"mean strain {mean:g} must be positive")
    return ThresholdSet(tuple(np.linspace(low * mean, high * mean, n_levels)))


@dataclass(frozen=True)
class CumulativeCurve:
    thresholds: ThresholdSet
    dwell_times: np.ndarray


def cumulative_counts(segment, thresholds, timestep):
    """Time (s) the segment spends strictly above each threshold."""
    seg = np.asarray(segment, dtype=float)
    if seg.size == 0:
        raise InvalidArgument("empty segment")
    if not timestep > 0:
        raise InvalidArgument("timestep must be positive")
    dwell = _backend.cumulative_counts(seg.reshape(1, -1), np.asarray(thresholds), float(timestep))
    return CumulativeCurve(thresholds, dwell[0])


@dataclass(frozen=True)
class CompressedSegment:
    A: float
    mu: float
    sigma: float
    sensor_id: int = 0
    segment_index: int = 0
    residual: float = 0.0
    flags: int = 0


def gaussian_survival(levels, A, mu, sigma):
    """Forward model: expected dwell time above each level."""
    return np.array([0.5 * A * (1.0 - erf((e - mu) / (sigma * sqrt(2.0)))) for e in levels])


def fit_gaussian_cdf(curve, max_iter=200, xtol=1e-8, fixed_amplitude=None):
    """Fit ``(A, mu, sigma)`` to one dwell curve.

    ``fixed_amplitude`` pins ``A`` and fits only the location and scale.

    Raises
    ------
    NoEvents
        Fewer than three thresholds have positive dwell time.
    FitDiverged
        The iteration cap was hit; ``exc.best`` carries the last accepted iterate.
    """
    dwell = np.asarray(curve.dwell_times, dtype=float).reshape(1, -1)
    fixed = np.nan if fixed_amplitude is None else float(fixed_amplitude)
    params, resid, status, _ = _backend.fit_cdf_batch(np.asarray(curve.thresholds), dwell, max_iter, xtol, fixed)
    if status[0] == _backend.FIT_NO_EVENTS:
        raise NoEvents("fewer than three thresholds exceeded")
    seg = CompressedSegment(*(float(v) for v in params[0]), residual=float(resid[0]))
    if status[0] == _backend.FIT_DIVERGED:
        raise FitDiverged(f"no convergence in {max_iter} iterations", best=seg)
    return seg


@dataclass
class CompressedStream:
    """Per-sensor compressed segments as (N, S) arrays."""

    A: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    residual: np.ndarray
    flags: np.ndarray

    @property
    def n_sensors(self):
        return self.mu.shape[0]

    @property
    def n_segments(self):
        return self.mu.shape[1]

    def segments(self, sensor):
        for s in range(self.n_segments):
            yield CompressedSegment(
                float(self.A[sensor, s]), float(self.mu[sensor, s]), float(self.sigma[sensor, s]),
                sensor, s, float(self.residual[sensor, s]), int(self.flags[sensor, s]),
            )

    def to_csv(self, path):
        with atomic_open(path) as fh:
            fh.write("sensor_id,segment_index,A,mu,sigma,residual,flags\n")
            for i in range(self.n_sensors):
                for s in range(self.n_segments):
                    fh.write(
                        f"s{i + 1},{s},{fmt(self.A[i, s])},{fmt(self.mu[i, s])},"
                        f"{fmt(self.sigma[i, s])},{fmt(self.residual[i, s])},{int(self.flags[i, s])}\n"
                    )

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "sensor_id,segment_index,A,mu,sigma,residual,flags":
                raise InvalidArgument(f"{path}: bad compressed-data header")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        if not rows:
            raise InsufficientData(f"{path}: no segments")
        sensors = sorted({int(r[0].lstrip("s")) for r in rows})
        counts = {s: 0 for s in sensors}
        for r in rows:
            counts[int(r[0].lstrip("s"))] += 1
        if len(set(counts.values())) != 1:
            raise MisalignedStreams(f"{path}: sensors have different segment counts")
        n, S = len(sensors), next(iter(counts.values()))
        arrays = {k: np.empty((n, S)) for k in ("A", "mu", "sigma", "residual")}
        flags = np.zeros((n, S), dtype=np.int64)
        index = {s: i for i, s in enumerate(sensors)}
        for r in rows:
            i, s = index[int(r[0].lstrip("s"))], int(r[1])
            arrays["A"][i, s], arrays["mu"][i, s], arrays["sigma"][i, s], arrays["residual"][i, s] = map(float, r[2:6])
            flags[i, s] = int(r[6])
        return cls(flags=flags, **arrays)


def _fill_missing(mu, sigma, missing, levels):
    # carry the previous segment forward; leading gaps take the first valid value
    for i in range(mu.shape[0]):
        valid = np.flatnonzero(~missing[i])
        if valid.size == 0:
            mu[i] = levels[0]
            sigma[i] = 0.25 * (levels[-1] - levels[0])
            continue
        last = valid[0]
        for s in range(mu.shape[1]):
            if missing[i, s]:
                mu[i, s], sigma[i, s] = mu[i, last], sigma[i, last]
            else:
                last = s


def compress_stream(stream, thresholds, segment_len=SEGMENT_LEN, timestep=None, fit_amplitude=False,
                    max_iter=200, xtol=1e-8):
    """Compress every full ``segment_len`` block of every sensor.

    By default ``A`` is pinned to the segment duration (the dwell time below
    every threshold) and only ``(mu, sigma)`` are fitted; ``fit_amplitude=True``
    fits all three. Trailing samples that do not fill a segment are dropped.
    Segments with fewer than three exceeded thresholds get ``A = 0`` and the
    previous segment's ``(mu, sigma)``, flagged ``FLAG_NO_EVENTS``; fits that
    hit the iteration cap keep their last iterate, flagged ``FLAG_DIVERGED``.
    """
    strains = np.asarray(getattr(stream, "strains", stream), dtype=float)
    if strains.ndim == 1:
        strains = strains[None, :]
    dt = timestep if timestep is not None else getattr(stream, "timestep", None)
    if dt is None:
        raise InvalidArgument("timestep required for raw arrays")
    if segment_len < 1:
        raise InvalidArgument("segment_len must be >= 1")
    n, T = strains.shape
    S = T // segment_len
    if S < 1:
        raise InsufficientData(f"{T} samples is shorter than one segment of {segment_len}")
    blocks = strains[:, : S * segment_len].reshape(n * S, segment_len)
    levels = np.asarray(thresholds, dtype=float)
    dwell = _backend.cumulative_counts(blocks, levels, float(dt))
    fixed = np.nan if fit_amplitude else segment_len * float(dt)
    params, resid, status, _ = _backend.fit_cdf_batch(levels, dwell, max_iter, xtol, fixed)
    params = params.reshape(n, S, 3)
    status = status.reshape(n, S)
    A, mu, sigma = (np.ascontiguousarray(params[..., k]) for k in range(3))
    flags = np.zeros((n, S), dtype=np.int64)
    missing = status == _backend.FIT_NO_EVENTS
    flags[missing] |= FLAG_NO_EVENTS
    flags[status == _backend.FIT_DIVERGED] |= FLAG_DIVERGED
    A[missing] = 0.0
    resid = resid.reshape(n, S)
    resid[missing] = 0.0
    _fill_missing(mu, sigma, missing, levels)
    return CompressedStream(A, mu, sigma, resid, flags)
