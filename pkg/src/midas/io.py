"""Atomic file output and the small CSV formats shared by the CLI."""
import contextlib
import os
import tempfile

import numpy as np

_UMASK = os.umask(0)
os.umask(_UMASK)

from .errors import InvalidArgument


@contextlib.contextmanager
def atomic_open(path, mode="w"):
    """Write to a temp file beside ``path`` and rename it into place on success."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path, text):
    with atomic_open(path) as fh:
        fh.write(text)


def fmt(x):
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(x))


def write_strain_csv(path, time, strains):
    """Write a ``time,s1,...,sN`` strain table; ``strains`` is (N, T)."""
    strains = np.asarray(strains, dtype=float)
    header = ",".join(["time"] + [f"s{i + 1}" for i in range(strains.shape[0])])
    with atomic_open(path) as fh:
        fh.write(header + "\n")
        for t, row in zip(time, strains.T):
            fh.write(fmt(t) + "," + ",".join(fmt(v) for v in row) + "\n")


def read_strain_csv(path):
    """Return ``(time, strains)`` with ``strains`` shaped (N, T)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "time":
            raise InvalidArgument(f"{path}: expected header starting with 'time'")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise InvalidArgument(f"{path}: column count does not match header")
    return data[:, 0].copy(), np.ascontiguousarray(data[:, 1:].T)


def write_layout_csv(path, positions):
    with atomic_open(path) as fh:
        fh.write("id,x_cm,y_cm\n")
        for i, (x, y) in enumerate(np.asarray(positions, dtype=float)):
            fh.write(f"s{i + 1},{fmt(x)},{fmt(y)}\n")


def read_layout_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "id,x_cm,y_cm":
            raise InvalidArgument(f"{path}: bad layout header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return np.array([[float(r[1]), float(r[2])] for r in rows])
