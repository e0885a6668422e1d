"""Streaming PCA baseline.

The SPIRIT/PAST recursion tracks a ``k``-dimensional principal subspace with
exponential forgetting. A channel's loading row ``(W_i1, W_i2)`` summarizes its
role in the two leading hidden variables; moving it after damage gives a
per-channel distance that stands in for the autoencoder's norm difference.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .errors import InsufficientReference, InvalidArgument

K = 2
FORGETTING = 0.995


@dataclass(frozen=True)
class SpiritState:
    basis: np.ndarray  # (d, k), orthonormal columns
    energy: np.ndarray  # (k,)
    forgetting: float = FORGETTING
    steps: int = 0

    def __post_init__(self):
        if not 0 < self.forgetting <= 1:
            raise InvalidArgument("forgetting factor must lie in (0, 1]")

    @property
    def dim(self):
        return self.basis.shape[0]

    @classmethod
    def init(cls, dim, k=K, forgetting=FORGETTING, energy=1e-3):
        """Start from the first ``k`` coordinate axes with a small energy."""
        if not 1 <= k <= dim:
            raise InvalidArgument("need 1 <= k <= dim")
        return cls(np.eye(dim, k), np.full(k, float(energy)), forgetting)

    def update(self, sample):
        return self.track(np.asarray(sample, dtype=float)[None, :])[0]

    def track(self, samples):
        """Feed a (T, d) stream; returns ``(new_state, hidden)`` with hidden (T, k)."""
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        if x.shape[1] != self.dim:
            raise InvalidArgument(f"sample dimension {x.shape[1]} != {self.dim}")
        w, e, hidden = _backend.spirit_track(x, self.basis, self.energy, self.forgetting)
        return replace(self, basis=w, energy=e, steps=self.steps + x.shape[0]), hidden


def align_signs(basis, reference):
    """Flip columns of ``basis`` to point the same way as ``reference``."""
    b = np.array(basis, dtype=float)
    s = np.sign(np.sum(b * reference, axis=0))
    s[s == 0] = 1.0
    return b * s


def spirit_delta(train_proj, test_proj):
    """Row-wise Euclidean distance between two sets of ``(W_1, W_2)`` rows.

    Unequal lengths are truncated to the shorter one. Returns
    ``(delta, truncated)``.
    """
    a = np.atleast_2d(np.asarray(train_proj, dtype=float))
    b = np.atleast_2d(np.asarray(test_proj, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InvalidArgument("empty projections")
    if a.shape[1] != b.shape[1]:
        raise InvalidArgument("projection widths differ")
    n = min(len(a), len(b))
    truncated = len(a) != len(b)
    return np.sqrt(np.sum((a[:n] - b[:n]) ** 2, axis=1)), truncated


def principal_angles(a, b):
    """Principal angles (degrees) between the column spans of ``a`` and ``b``."""
    qa, _ = np.linalg.qr(np.asarray(a, dtype=float))
    qb, _ = np.linalg.qr(np.asarray(b, dtype=float))
    s = np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), -1.0, 1.0)
    return np.degrees(np.arccos(s))


def batch_pca(samples, k=K):
    """Top-``k`` right singular vectors of the uncentered sample matrix."""
    _, _, vt = np.linalg.svd(np.asarray(samples, dtype=float), full_matrices=False)
    return vt[:k].T


@dataclass
class SpiritReference:
    """Training basis plus the distances undamaged chunks produce."""

    state: SpiritState
    deltas: np.ndarray  # (n_chunks, d)
    sq_norm: np.ndarray  # (d,)
    chunk: int


def fit_reference(train_rows, chunk, fit_fraction=0.8, k=K, forgetting=FORGETTING):
    """Track the first ``fit_fraction`` of the rows, then measure held-out chunks.

    Each block of ``chunk`` later rows (blocks start every ``chunk // 4`` rows)
    is tracked from the fitted state and its loading rows compared with the
    fitted basis, giving the undamaged spread of the distance.
    """
    rows = np.asarray(train_rows, dtype=float)
    chunk = int(chunk)
    n_fit = int(len(rows) * fit_fraction)
    rest = rows[n_fit:]
    starts = range(0, len(rest) - chunk + 1, max(1, chunk // 4))
    if n_fit < 1 or chunk < 1 or len(starts) < 2:
        raise InsufficientReference("need at least two held-out reference chunks")
    state, _ = SpiritState.init(rows.shape[1], k, forgetting).track(rows[:n_fit])
    deltas = np.stack([channel_delta(state, rest[s:s + chunk])[0] for s in starts])
    sq_norm = chunk * np.mean(rows[:n_fit] ** 2, axis=0)
    return SpiritReference(state, deltas, sq_norm, chunk)


def channel_delta(state, rows):
    """Per-channel loading-row distance after tracking ``rows`` from ``state``."""
    after, _ = state.track(rows)
    moved = align_signs(after.basis, state.basis)
    return spirit_delta(state.basis, moved)
