"""Sliding-window datasets over compressed segments.

Channels are ordered ``mu_1..mu_N, sigma_1..sigma_N``. Window ``b`` covers
segments ``[b * stride, b * stride + length)``.
"""
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientData, InvalidArgument, MisalignedStreams
from .io import atomic_open, fmt, read_layout_csv, write_layout_csv

WINDOW_LEN = 12
STRIDE = 2


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    clamped: np.ndarray

    @classmethod
    def from_tensor(cls, tensor):
        flat = tensor.reshape(-1, tensor.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        clamped = ~(std > 0)
        std = np.where(clamped, 1.0, std)
        return cls(mean, std, clamped)

    def to_csv(self, path):
        with atomic_open(path) as fh:
            fh.write("channel,mean,std,clamped\n")
            for c, (m, s, k) in enumerate(zip(self.mean, self.std, self.clamped)):
                fh.write(f"{c},{fmt(m)},{fmt(s)},{int(k)}\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1].copy(), data[:, 2].copy(), data[:, 3].astype(bool))


@dataclass
class WindowDataset:
    tensor: np.ndarray
    layout: np.ndarray = None
    norm_stats: NormStats = None
    normalized: bool = False
    length: int = WINDOW_LEN
    stride: int = STRIDE
    flags: dict = field(default_factory=dict)

    @property
    def n_windows(self):
        return self.tensor.shape[0]

    @property
    def n_channels(self):
        return self.tensor.shape[2]

    @property
    def n_sensors(self):
        return self.tensor.shape[2] // 2

    def save(self, directory):
        save_dataset(self, directory)


def _series(segments):
    """(S, 2N) channel series from a CompressedStream or per-sensor sequences."""
    if hasattr(segments, "mu") and hasattr(segments, "sigma"):
        mu, sigma = np.asarray(segments.mu, float), np.asarray(segments.sigma, float)
        return np.concatenate([mu, sigma], axis=0).T
    seqs = [list(s) for s in segments]
    if not seqs:
        raise InvalidArgument("no sensors given")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise MisalignedStreams(f"sensors have different segment counts: {sorted(lengths)}")
    mu = np.array([[seg.mu for seg in s] for s in seqs], dtype=float)
    sigma = np.array([[seg.sigma for seg in s] for s in seqs], dtype=float)
    return np.concatenate([mu, sigma], axis=0).T


def window_count(n_segments, length=WINDOW_LEN, stride=STRIDE):
    if n_segments < length:
        return 0
    return (n_segments - length) // stride + 1


def build_windows(segments, length=WINDOW_LEN, stride=STRIDE, layout=None):
    """Stack overlapping windows of the channel series into a (B, l, 2N) tensor."""
    if length < 1 or stride < 1:
        raise InvalidArgument("length and stride must be >= 1")
    series = _series(segments)
    S = series.shape[0]
    if S < length:
        raise InsufficientData(f"{S} segments is fewer than the window length {length}")
    B = window_count(S, length, stride)
    idx = np.arange(B)[:, None] * stride + np.arange(length)[None, :]
    tensor = np.ascontiguousarray(series[idx])
    pos = None if layout is None else np.asarray(layout, dtype=float)
    return WindowDataset(tensor, pos, length=length, stride=stride)


def unwindow(dataset):
    """Recover the segment series covered by the windows (inverse of build_windows)."""
    B, l, C = dataset.tensor.shape
    S = (B - 1) * dataset.stride + l
    out = np.full((S, C), np.nan)
    for b in range(B):
        out[b * dataset.stride: b * dataset.stride + l] = dataset.tensor[b]
    return out


def normalize(dataset, stats=None):
    """Z-score each channel.

    With ``stats=None`` the statistics are computed from ``dataset`` itself
    (training data); pass the training statistics for any other split.
    Zero-variance channels get unit scale and are recorded in
    ``flags["clamped_channels"]``.
    """
    if dataset.normalized:
        raise InvalidArgument("dataset is already normalized")
    if stats is None:
        stats = NormStats.from_tensor(dataset.tensor)
    if len(stats.mean) != dataset.n_channels:
        raise InvalidArgument(f"stats have {len(stats.mean)} channels, dataset has {dataset.n_channels}")
    tensor = (dataset.tensor - stats.mean) / stats.std
    flags = dict(dataset.flags)
    clamped = np.flatnonzero(stats.clamped)
    if clamped.size:
        flags["clamped_channels"] = clamped.tolist()
    return replace(dataset, tensor=tensor, norm_stats=stats, normalized=True, flags=flags)


def denormalize(dataset):
    if not dataset.normalized:
        raise InvalidArgument("dataset is not normalized")
    st = dataset.norm_stats
    return replace(dataset, tensor=dataset.tensor * st.std + st.mean, normalized=False)


def save_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    B, l, C = dataset.tensor.shape
    n = C // 2
    names = [f"mu_s{i + 1}" for i in range(n)] + [f"sigma_s{i + 1}" for i in range(n)]
    with atomic_open(os.path.join(directory, "tensor.csv")) as fh:
        fh.write(f"# shape={B}x{l}x{C} stride={dataset.stride} normalized={int(dataset.normalized)}\n")
        fh.write("window,step," + ",".join(names) + "\n")
        for b in range(B):
            for t in range(l):
                fh.write(f"{b},{t}," + ",".join(fmt(v) for v in dataset.tensor[b, t]) + "\n")
    if dataset.norm_stats is not None:
        dataset.norm_stats.to_csv(os.path.join(directory, "stats.csv"))
    if dataset.layout is not None:
        write_layout_csv(os.path.join(directory, "layout.csv"), dataset.layout)


def load_dataset(directory):
    path = os.path.join(directory, "tensor.csv")
    with open(path) as fh:
        meta = dict(tok.split("=") for tok in fh.readline().lstrip("#").split())
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    B, l, C = (int(v) for v in meta["shape"].split("x"))
    tensor = np.ascontiguousarray(data[:, 2:].reshape(B, l, C))
    stats_path = os.path.join(directory, "stats.csv")
    layout_path = os.path.join(directory, "layout.csv")
    return WindowDataset(
        tensor,
        layout=read_layout_csv(layout_path) if os.path.exists(layout_path) else None,
        norm_stats=NormStats.from_csv(stats_path) if os.path.exists(stats_path) else None,
        normalized=bool(int(meta["normalized"])),
        length=l,
        stride=int(meta["stride"]),
    )
