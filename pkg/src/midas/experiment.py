"""Synthetic damage ensembles for comparing the detectors.

One long loading history drives the plate surrogate. The first stretch trains
the models, the next provides held-out undamaged windows, and every damage case
gets its own later stretch of the same history, simulated with the damage in
place. All randomness derives from the config seeds.
"""
from dataclasses import dataclass, field

import numpy as np

from . import compress, detect, localize, miae, simkit, spirit, windowing

SEGMENT_LEN = compress.SEGMENT_LEN


@dataclass(frozen=True)
class EnsembleConfig:
    n_cols: int = 9
    n_rows: int = 5
    pitch: float = 26.0
    plate_seed: int = 0
    load_seed: int = 1
    noise_seed: int = 2
    n_train_segments: int = 1500
    n_holdout_windows: int = 500
    n_damaged_windows: int = 20
    radius_factor: float = 1.5
    max_offset: float = 0.35
    epochs: int = 500
    seed: int = 0
    fpr: float = detect.FPR
    q: float = detect.Q
    lam: float = localize.LAMBDA
    smote_k: int = 5

    @property
    def window_span(self):
        """Segments covered by ``n_damaged_windows`` windows."""
        return windowing.WINDOW_LEN + windowing.STRIDE * (self.n_damaged_windows - 1)

    @property
    def holdout_span(self):
        return windowing.WINDOW_LEN + windowing.STRIDE * (self.n_holdout_windows - 1)


@dataclass
class Baseline:
    config: EnsembleConfig
    plate: simkit.PlateSurrogate
    loading: simkit.LoadingProfile
    thresholds: compress.ThresholdSet
    weights: miae.MechWeightMatrix
    train: windowing.WindowDataset
    holdout: windowing.WindowDataset
    train_rows: np.ndarray  # normalized per-segment channel vectors (S, 2N)
    models: dict = field(default_factory=dict)

    @property
    def segment_seconds(self):
        return SEGMENT_LEN * self.loading.timestep


def _simulate(plate, loading, first, count, damage=None, seed=0):
    dt = loading.timestep
    span = loading.window(first * SEGMENT_LEN * dt, count * SEGMENT_LEN * dt + 0.5 * dt)
    return simkit.simulate_strains(plate, span, damage=damage, seed=seed)


def build_baseline(cfg=EnsembleConfig()):
    """Simulate, compress and window the undamaged training and holdout data."""
    pos = simkit.grid_layout(cfg.n_cols, cfg.n_rows, cfg.pitch)
    plate = simkit.default_plate(pos, seed=cfg.plate_seed)
    total = cfg.n_train_segments + cfg.holdout_span
    loading = simkit.generate_loading(cfg.load_seed, duration=total * SEGMENT_LEN * simkit.TIMESTEP)
    raw = _simulate(plate, loading, 0, cfg.n_train_segments, seed=cfg.noise_seed)
    thresholds = compress.select_thresholds(raw)
    weights = miae.build_weight_matrix(raw)
    comp = compress.compress_stream(raw, thresholds)
    train = windowing.normalize(windowing.build_windows(comp, layout=pos))
    stats = train.norm_stats
    rows = (np.concatenate([comp.mu, comp.sigma]).T - stats.mean) / stats.std
    held = _simulate(plate, loading, cfg.n_train_segments, cfg.holdout_span, seed=cfg.noise_seed + 1)
    holdout = windows_from_stream(held, thresholds, stats, pos)
    return Baseline(cfg, plate, loading, thresholds, weights, train, holdout, rows)


def windows_from_stream(stream, thresholds, stats, layout=None):
    comp = compress.compress_stream(stream, thresholds)
    return windowing.normalize(windowing.build_windows(comp, layout=layout), stats)


def train_model(baseline, gamma, **overrides):
    cfg = baseline.config
    opts = dict(gamma=gamma, epochs=cfg.epochs, seed=cfg.seed)
    opts.update(overrides)
    model = miae.train(baseline.train, baseline.weights, **opts)
    baseline.models[gamma] = model
    return model


@dataclass(frozen=True)
class DamageCase:
    index: int
    damage: simkit.DamageSpec
    first_segment: int


def interior_sensors(layout):
    pos = np.asarray(layout, dtype=float)
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    return np.flatnonzero(np.all((pos > lo + 1e-9) & (pos < hi - 1e-9), axis=1))


def sample_cases(baseline, n, amplification=(1.1, 1.3), kind="crack", attenuation=(0.85, 0.95),
                 seed=0, offset=0):
    """Draw ``n`` damage cases centred near random interior sensors.

    Cases get consecutive, non-overlapping stretches of the loading history
    after the holdout data; ``offset`` shifts the stretch index so that
    separate ensembles do not share load.
    """
    cfg = baseline.config
    rng = np.random.default_rng(seed)
    pos = baseline.plate.sensor_positions
    pitch = baseline.plate.pitch
    inner = interior_sensors(pos)
    start = cfg.n_train_segments + cfg.holdout_span
    cases = []
    for i in range(n):
        k = inner[rng.integers(len(inner))]
        center = pos[k] + rng.uniform(-cfg.max_offset, cfg.max_offset, 2) * pitch
        radius = cfg.radius_factor * pitch
        if kind == "crack":
            dmg = simkit.DamageSpec(tuple(center), radius, amplification=float(rng.uniform(*amplification)))
        else:
            dmg = simkit.DamageSpec(tuple(center), radius, attenuation=float(rng.uniform(*attenuation)),
                                    kind="boundary")
        cases.append(DamageCase(i, dmg, start + (offset + i) * cfg.window_span))
    return cases


def damaged_stream(baseline, case):
    cfg = baseline.config
    return _simulate(baseline.plate, baseline.loading, case.first_segment, cfg.window_span,
                     damage=case.damage, seed=cfg.noise_seed + 10 + case.first_segment)


@dataclass
class CaseResult:
    case: DamageCase
    metrics: dict  # method -> MetricReport
    scores: dict  # method -> DamageScores
    success: dict  # method -> bool
    adjacent: dict  # method -> bool


def _autoencoder_scores(model, data, lam):
    y = miae.forward(model, data.tensor)
    deltas = miae.norm_deltas(data.tensor, y)
    ref = model.reference
    T = localize.relative_change(deltas, ref["deltas"], ref["sq_norm"])
    ref_changes = localize.reference_changes(ref["deltas"], ref["sq_norm"], len(deltas))
    return localize.score_sensors(T, ref_changes, lam)


def spirit_reference(baseline, chunk=None):
    chunk = chunk or baseline.config.window_span
    return spirit.fit_reference(baseline.train_rows, chunk)


def spirit_scores(reference, rows, lam=localize.LAMBDA):
    delta, _ = spirit.channel_delta(reference.state, rows)
    T = localize.relative_change(delta[None], reference.deltas, reference.sq_norm)
    ref_changes = localize.reference_changes(reference.deltas, reference.sq_norm, 1)
    return localize.score_sensors(T, ref_changes, lam)


def run_case(baseline, case, methods, spirit_ref=None):
    """Detection metrics and localization for one damage case.

    ``methods`` maps a name to a trained model; SPIRIT is scored for
    localization only when ``spirit_ref`` is given.
    """
    cfg = baseline.config
    policy = detect.DetectionPolicy(cfg.fpr, cfg.q)
    stream = damaged_stream(baseline, case)
    stats = baseline.train.norm_stats
    data = windows_from_stream(stream, baseline.thresholds, stats)
    pos = baseline.plate.sensor_positions
    radius = localize.default_radius(pos)
    center = case.damage.center
    metrics, scores, success, adjacent = {}, {}, {}, {}
    for name, model in methods.items():
        thr = detect.calibrate_thresholds(model.reference["errors"], cfg.fpr)
        normal = detect.reconstruction_errors(model, baseline.holdout)
        damaged = detect.reconstruction_errors(model, data)
        metrics[name] = detect.evaluate_case(normal, damaged, thr, policy, k=cfg.smote_k, seed=cfg.seed + case.index)
        scores[name] = _autoencoder_scores(model, data, cfg.lam)
    if spirit_ref is not None:
        comp = compress.compress_stream(stream, baseline.thresholds)
        rows = (np.concatenate([comp.mu, comp.sigma]).T - stats.mean) / stats.std
        scores["spirit"] = spirit_scores(spirit_ref, rows, cfg.lam)
    for name, sc in scores.items():
        est = localize.estimate_location(sc.p, pos)
        success[name] = localize.localization_success(est, center, radius)
        adjacent[name] = bool(np.hypot(est[0] - center[0], est[1] - center[1]) <= baseline.plate.pitch)
    return CaseResult(case, metrics, scores, success, adjacent)


def nearest_sensor(layout, point):
    pos = np.asarray(layout, dtype=float)
    return int(np.argmin(np.sum((pos - np.asarray(point)) ** 2, axis=1)))


def holdout_scores(baseline, model, n_windows=None):
    """Damage scores of the undamaged holdout windows, in blocks of the case size."""
    cfg = baseline.config
    m = n_windows or cfg.n_damaged_windows
    x = baseline.holdout.tensor
    out = []
    for b in range(len(x) // m):
        sub = windowing.WindowDataset(x[b * m:(b + 1) * m], norm_stats=baseline.holdout.norm_stats,
                                      normalized=True)
        out.append(_autoencoder_scores(model, sub, cfg.lam))
    return out
