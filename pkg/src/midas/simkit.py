"""Synthetic strain data for a sensor-instrumented plate.

A desk-scale stand-in for finite-element or laboratory data. One scalar traffic
load (a static dead load plus a sum of random sinusoids) drives every sensor
through a smooth positive gain field. Damage enters as a Gaussian bump of local
amplification (crack) or a global attenuation (boundary loosening), temperature
as a uniform thermal strain, and measurement noise as a relative perturbation.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument
from .io import read_layout_csv, read_strain_csv, write_layout_csv, write_strain_csv

THERMAL_COEFF = 11e-6
BASE_TEMPERATURE = 25.0
NOISE_PCT = 0.005
TIMESTEP = 0.025


@dataclass(frozen=True)
class LoadComponent:
    amplitude: float
    frequency: float
    phase: float
    kind: str = "sine"

    def __call__(self, t):
        arg = 2.0 * np.pi * self.frequency * t + self.phase
        wave = np.sin(arg) if self.kind == "sine" else np.cos(arg)
        return self.amplitude * wave


@dataclass(frozen=True)
class LoadingProfile:
    """Sum of sinusoidal components on a static ``offset`` (dead load)."""

    components: tuple
    timestep: float
    duration: float
    offset: float = 0.0
    start: float = 0.0

    def __post_init__(self):
        if not self.timestep > 0 or not self.duration > 0:
            raise InvalidArgument("timestep and duration must be positive")
        if self.duration / self.timestep < 1 - 1e-9:
            raise InvalidArgument("duration shorter than one timestep")
        for c in self.components:
            if not c.frequency > 0:
                raise InvalidArgument("component frequencies must be positive")
            if c.kind not in ("sine", "cosine"):
                raise InvalidArgument(f"unknown component kind {c.kind!r}")

    @property
    def n_samples(self):
        return int(np.floor(self.duration / self.timestep + 1e-9))

    def times(self):
        return self.start + np.arange(self.n_samples) * self.timestep

    def window(self, start, duration):
        """The same load observed over ``[start, start + duration)``."""
        return replace(self, start=float(start), duration=float(duration))

    def dynamic(self):
        """The zero-offset fluctuating part of the load."""
        t = self.times()
        out = np.zeros_like(t)
        for c in self.components:
            out += c(t)
        return out

    def series(self):
        return self.offset + self.dynamic()


def generate_loading(seed, n_components=100, duration=600.0, timestep=TIMESTEP,
                     amplitude=(1.0, 0.3), frequency=(1.0, 0.3), offset_ratio=2.0):
    """Draw a random traffic-like loading profile.

    Amplitudes and frequencies are normal draws (mean, std) clipped to stay
    positive, phases uniform on [0, 2*pi), and the kind of each component is a
    fair coin between sine and cosine. The static offset equals
    ``offset_ratio`` times the RMS of the fluctuating part, so a profile with
    all-zero amplitudes is identically zero.
    """
    if n_components < 1:
        raise InvalidArgument("n_components must be >= 1")
    if not duration > 0 or not timestep > 0:
        raise InvalidArgument("duration and timestep must be positive")
    rng = np.random.default_rng(seed)
    amps = np.clip(rng.normal(amplitude[0], amplitude[1], n_components), 1e-3 * amplitude[0], None)
    freqs = np.clip(rng.normal(frequency[0], frequency[1], n_components), 1e-3 * frequency[0], None)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    kinds = rng.integers(0, 2, n_components)
    comps = tuple(
        LoadComponent(float(a), float(f), float(p), "sine" if k == 0 else "cosine")
        for a, f, p, k in zip(amps, freqs, phases, kinds)
    )
    rms = float(np.sqrt(0.5 * np.sum(amps**2)))
    return LoadingProfile(comps, float(timestep), float(duration), offset_ratio * rms)


@dataclass(frozen=True)
class PlateSurrogate:
    sensor_positions: np.ndarray
    gains: np.ndarray
    coupling: np.ndarray
    thermal_coeff: float = THERMAL_COEFF
    base_temperature: float = BASE_TEMPERATURE

    def __post_init__(self):
        pos = np.asarray(self.sensor_positions, dtype=float)
        gains = np.asarray(self.gains, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise InvalidArgument("sensor_positions must be (N, 2)")
        if gains.shape != (pos.shape[0],):
            raise InvalidArgument("one gain per sensor required")
        if np.any(gains <= 0):
            raise InvalidArgument("gains must be positive")
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        if np.any(d[np.triu_indices(len(pos), 1)] == 0):
            raise InvalidArgument("sensor positions must be pairwise distinct")
        object.__setattr__(self, "sensor_positions", pos)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "coupling", np.asarray(self.coupling, dtype=float))

    @property
    def n_sensors(self):
        return len(self.gains)

    @property
    def pitch(self):
        """Smallest sensor-to-sensor distance."""
        pos = self.sensor_positions
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        return float(d[np.triu_indices(len(pos), 1)].min())


def grid_layout(n_cols=9, n_rows=5, pitch=26.0):
    xs, ys = np.meshgrid(np.arange(n_cols) * pitch, np.arange(n_rows) * pitch)
    return np.column_stack([xs.ravel(), ys.ravel()])


def default_plate(positions=None, seed=0, gain=5.0, spread=0.25, corr_length=None):
    """Plate surrogate with a smooth random gain field over ``positions``.

    The coupling matrix is a row-normalized Gaussian kernel over sensor
    distances; it smooths white noise into the gain field, so neighbouring
    sensors respond alike. Gains lie in ``gain * [1 - spread, 1 + spread]``.
    """
    pos = grid_layout() if positions is None else np.asarray(positions, dtype=float)
    n = len(pos)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    if corr_length is None:
        corr_length = 2.0 * (d[np.triu_indices(n, 1)].min() if n > 1 else 1.0)
    coupling = np.exp(-(d**2) / (2.0 * corr_length**2))
    coupling /= coupling.sum(axis=1, keepdims=True)
    field_ = coupling @ np.random.default_rng(seed).normal(size=n)
    field_ -= field_.mean()
    peak = np.abs(field_).max()
    if peak > 0:
        field_ /= peak
    return PlateSurrogate(pos, gain * (1.0 + spread * field_), coupling)


@dataclass(frozen=True)
class DamageSpec:
    center: tuple
    radius: float
    amplification: float = 1.0
    attenuation: float = 1.0
    kind: str = "crack"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("damage radius must be positive")
        if self.kind == "crack":
            if not self.amplification > 1 or self.attenuation != 1:
                raise InvalidArgument("crack needs amplification > 1 and attenuation == 1")
        elif self.kind == "boundary":
            if not 0 < self.attenuation < 1 or self.amplification < 1:
                raise InvalidArgument("boundary damage needs 0 < attenuation < 1")
        else:
            raise InvalidArgument(f"unknown damage kind {self.kind!r}")

    def local_factor(self, positions):
        d2 = np.sum((np.asarray(positions, dtype=float) - np.asarray(self.center)) ** 2, axis=1)
        return 1.0 + (self.amplification - 1.0) * np.exp(-d2 / self.radius**2)


@dataclass(frozen=True)
class StrainStream:
    """Per-sensor strain series in micro-strain, shape (N, T)."""

    time: np.ndarray
    strains: np.ndarray
    timestep: float
    positions: np.ndarray = field(default=None, repr=False)

    @property
    def n_sensors(self):
        return self.strains.shape[0]

    @property
    def n_samples(self):
        return self.strains.shape[1]

    def to_csv(self, path):
        write_strain_csv(path, self.time, self.strains)

    @classmethod
    def from_csv(cls, path, layout=None):
        time, strains = read_strain_csv(path)
        if len(time) < 2:
            raise InvalidArgument(f"{path}: need at least two rows to infer the timestep")
        dt = float(time[1] - time[0])
        pos = read_layout_csv(layout) if layout is not None else None
        return cls(time, strains, dt, pos)


def simulate_strains(surrogate, loading, damage=None, delta_T=0.0, noise_pct=NOISE_PCT, seed=0):
    """Strain response of every sensor to ``loading``.

    Without damage each channel is ``gain_i * load(t)``. A crack scales the
    fluctuating (live-load) part near its center by
    ``1 + (amplification - 1) * exp(-d_i**2 / radius**2)``; boundary damage
    scales the whole mechanical strain of every sensor by ``attenuation``.
    A temperature change adds ``thermal_coeff * delta_T`` (in micro-strain) to
    every channel, and noise multiplies each sample by ``1 + noise_pct * z``.
    """
    if noise_pct < 0:
        raise InvalidArgument("noise_pct must be >= 0")
    gains = surrogate.gains[:, None]
    dynamic = loading.dynamic()[None, :]
    static = loading.offset
    if damage is None:
        mech = gains * (static + dynamic)
    else:
        local = damage.local_factor(surrogate.sensor_positions)[:, None]
        mech = gains * (static + local * dynamic) * damage.attenuation
    strains = mech + surrogate.thermal_coeff * delta_T * 1e6
    if noise_pct > 0:
        z = np.random.default_rng(seed).standard_normal(strains.shape)
        strains = strains * (1.0 + noise_pct * z)
    return StrainStream(loading.times(), strains, loading.timestep, surrogate.sensor_positions)


def save_layout(path, positions):
    write_layout_csv(path, positions)
