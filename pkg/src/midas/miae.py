"""Mechanics-informed autoencoder.

A six-layer fully connected autoencoder applied independently to each time
step (a 2N vector of mu and sigma channels) of a window. Training minimizes

    total = mse + gamma * mechanics

where ``mse`` is the mean squared reconstruction error and ``mechanics``
penalizes disagreement between sensors' norm differences
``delta_c = ||y_c||^2 - ||x_c||^2`` (norms over the window's time axis),
weighted by the strain-ratio matrix ``W``:

    mechanics = sum_ij W_ij [(delta_mu_i - delta_mu_j)^2 + (delta_sigma_i - delta_sigma_j)^2]

``gamma = 0`` gives the plain autoencoder used as the ablation baseline.
"""
import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptModel, InvalidArgument, TrainingDiverged, ZeroResponseSensor
from .io import write_text
from .windowing import NormStats

log = logging.getLogger(__name__)

GAMMA = 0.05
FORMAT = "midas-model"
FORMAT_VERSION = 1

ACTIVATIONS = ("tanh", "linear")
PAIR_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class MechWeightMatrix:
    W: np.ndarray
    source_max_strains: np.ndarray


def center_sensors(positions, fraction=0.5):
    """Mask of sensors inside the central ``fraction`` of the layout's bounding box."""
    pos = np.asarray(positions, dtype=float)
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    mid, half = (lo + hi) / 2, (hi - lo) * fraction / 2
    return np.all(np.abs(pos - mid) <= half + 1e-12, axis=1)


def build_weight_matrix(raw_streams, center_scale=None, center_mask=None):
    """Strain-ratio weights ``W_ij = min(m_i, m_j) / max(m_i, m_j)``.

    ``m_i`` is the largest absolute strain of sensor ``i`` over the undamaged
    raw streams. With ``center_scale`` set, sensors in ``center_mask`` have
    their ``m_i`` multiplied by it first (temperature mode uses 1/3).
    """
    if not isinstance(raw_streams, (list, tuple)):
        raw_streams = [raw_streams]
    arrays = [np.abs(np.asarray(getattr(s, "strains", s), dtype=float)) for s in raw_streams]
    peak = np.max(np.concatenate(arrays, axis=1), axis=1)
    if np.any(peak == 0):
        raise ZeroResponseSensor(f"sensors {np.flatnonzero(peak == 0).tolist()} never respond")
    m = peak.copy()
    if center_scale is not None:
        if center_mask is None:
            raise InvalidArgument("center_scale needs center_mask")
        m[np.asarray(center_mask, dtype=bool)] *= center_scale
    W = np.minimum(m[:, None], m[None, :]) / np.maximum(m[:, None], m[None, :])
    return MechWeightMatrix(W, peak)


def default_architecture(n_sensors, bottleneck=32):
    """Layer widths for ``n_sensors``; fewer than ten sensors widens the hidden layers 8x."""
    if n_sensors < 1:
        raise InvalidArgument("need at least one sensor")
    c = 2 * n_sensors
    k = 1 if n_sensors >= 10 else 8
    return [c, 2 * bottleneck * k, bottleneck * k, bottleneck * k, 2 * bottleneck * k, c]


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    mechanics: float
    total: float


@dataclass
class MiaeModel:
    layer_dims: list
    weights: list
    biases: list
    W: np.ndarray
    gamma: float = GAMMA
    activation: str = "tanh"
    norm_stats: NormStats = None
    reference: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    pair_reduction: str = "mean"

    def __post_init__(self):
        dims = list(self.layer_dims)
        if dims[0] != dims[-1]:
            raise InvalidArgument("input and output widths must match")
        if self.gamma < 0:
            raise InvalidArgument("gamma must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.pair_reduction not in PAIR_REDUCTIONS:
            raise InvalidArgument(f"unknown pair reduction {self.pair_reduction!r}")
        if np.shape(self.W) != (dims[0] // 2, dims[0] // 2):
            raise InvalidArgument("W must be N x N with 2N input channels")

    @property
    def n_sensors(self):
        return self.layer_dims[0] // 2

    @property
    def n_channels(self):
        return self.layer_dims[0]

    @property
    def params(self):
        return self.weights + self.biases

    def copy(self):
        return copy.deepcopy(self)


def init_model(layer_dims, W, gamma=GAMMA, seed=0, activation="tanh", pair_reduction="mean"):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MiaeModel(list(layer_dims), weights, biases, np.asarray(W, dtype=float), gamma, activation, seed=seed,
                     pair_reduction=pair_reduction)


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else z


def _forward_rows(model, rows):
    hs = [rows]
    h = rows
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if k == last else _act(z, model.activation)
        hs.append(h)
    return hs


def forward(model, window):
    """Reconstruct a window (l, 2N) or a batch (B, l, 2N); rows are independent."""
    x = np.asarray(window, dtype=float)
    if x.shape[-1] != model.n_channels:
        raise InvalidArgument(f"expected {model.n_channels} channels, got {x.shape[-1]}")
    y = _forward_rows(model, x.reshape(-1, x.shape[-1]))[-1]
    return y.reshape(x.shape)


def norm_deltas(x, y):
    """``||y_c||^2 - ||x_c||^2`` over the time axis; (B, l, C) -> (B, C)."""
    return np.sum(y * y, axis=-2) - np.sum(x * x, axis=-2)


def _pair_scale(n, reduction):
    return 1.0 / (n * n) if reduction == "mean" else 1.0


def mechanics_term(deltas, W, reduction="mean"):
    """Per-window mechanics penalty for deltas of shape (B, 2N).

    ``sum_ij W_ij (d_i - d_j)**2`` over the mu block plus the same over the
    sigma block; ``reduction="mean"`` divides by the N**2 sensor pairs.
    """
    n = W.shape[0]
    total = 0.0
    for block in (deltas[..., :n], deltas[..., n:]):
        diff = block[..., :, None] - block[..., None, :]
        total = total + np.sum(W * diff * diff, axis=(-2, -1))
    return total * _pair_scale(n, reduction)


def _loss_terms(x, y, W, gamma, reduction="mean"):
    mse = float(np.mean((y - x) ** 2))
    mech = float(np.mean(mechanics_term(norm_deltas(x, y), W, reduction)))
    return LossBreakdown(mse, mech, mse + gamma * mech)


def loss(model, window_in, window_out, gamma=None):
    """Loss of a reconstruction; accepts one window (l, 2N) or a batch (B, l, 2N)."""
    x = np.asarray(window_in, dtype=float)
    y = np.asarray(window_out, dtype=float)
    if x.shape != y.shape:
        raise InvalidArgument(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    g = model.gamma if gamma is None else gamma
    return _loss_terms(x, y, model.W, g, model.pair_reduction)


def loss_and_grads(model, batch):
    """Total loss over a (B, l, 2N) batch and its gradients for every parameter.

    Returns ``(LossBreakdown, weight_grads, bias_grads)``.
    """
    x = np.asarray(batch, dtype=float)
    B, l, C = x.shape
    n = C // 2
    hs = _forward_rows(model, x.reshape(-1, C))
    y = hs[-1].reshape(x.shape)
    terms = _loss_terms(x, y, model.W, model.gamma, model.pair_reduction)

    dy = 2.0 * (y - x) / x.size
    if model.gamma != 0:
        d = norm_deltas(x, y)
        Ws = model.W + model.W.T
        d_delta = np.empty_like(d)
        for sl in (slice(0, n), slice(n, C)):
            block = d[:, sl]
            # d/d delta_k of sum_ij W_ij (delta_i - delta_j)^2
            d_delta[:, sl] = 2.0 * (block * Ws.sum(axis=1) - block @ Ws)
        d_delta *= _pair_scale(n, model.pair_reduction)
        dy += model.gamma * (d_delta / B)[:, None, :] * 2.0 * y

    grad = dy.reshape(-1, C)
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    last = len(model.weights) - 1
    for k in range(last, -1, -1):
        if k != last and model.activation == "tanh":
            grad = grad * (1.0 - hs[k + 1] ** 2)
        gw[k] = hs[k].T @ grad
        gb[k] = grad.sum(axis=0)
        if k > 0:
            grad = grad @ model.weights[k].T
    return terms, gw, gb


def gradient_check(model, window, h=1e-5, floor=1e-6):
    """Largest elementwise relative error between analytic and central-difference gradients.

    ``rel = |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor)``.
    """
    x = np.asarray(window, dtype=float)
    if x.ndim == 2:
        x = x[None]
    _, gw, gb = loss_and_grads(model, x)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = _loss_terms(x, forward(model, x), model.W, model.gamma, model.pair_reduction).total
                flat[i] = orig - h
                down = _loss_terms(x, forward(model, x), model.W, model.gamma, model.pair_reduction).total
                flat[i] = orig
                num = (up - down) / (2.0 * h)
                err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), floor)
                worst = max(worst, err)
    return worst


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = GAMMA
    lr: float = 1e-3
    epochs: int = 500
    batch: int = 32
    seed: int = 0
    activation: str = "tanh"
    layer_dims: tuple = None
    pair_reduction: str = "mean"


def train(dataset, W, config=None, callback=None, **overrides):
    """Fit an autoencoder to a normalized window dataset with Adam.

    ``W`` is a :class:`MechWeightMatrix` or an N x N array. The returned model
    carries the training-set reference arrays used by detection and
    localization, and ``history`` holds the full-data loss after every epoch.
    """
    cfg = config or TrainConfig()
    if overrides:
        cfg = TrainConfig(**{**cfg.__dict__, **overrides})
    if not dataset.normalized:
        raise InvalidArgument("train on a normalized dataset")
    x_all = dataset.tensor
    if x_all.shape[0] < 1:
        raise InvalidArgument("empty dataset")
    Wm = W.W if isinstance(W, MechWeightMatrix) else np.asarray(W, dtype=float)
    dims = list(cfg.layer_dims) if cfg.layer_dims else default_architecture(dataset.n_sensors)
    if dims[0] != dataset.n_channels:
        raise InvalidArgument(f"architecture input {dims[0]} != {dataset.n_channels} channels")
    model = init_model(dims, Wm, cfg.gamma, cfg.seed, cfg.activation, cfg.pair_reduction)
    model.norm_stats = dataset.norm_stats
    model.config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.__dict__.items()}
    model.config["layer_dims"] = dims

    rng = np.random.default_rng(cfg.seed + 1)
    params = model.params
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    B = x_all.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(B)
        for start in range(0, B, cfg.batch):
            batch = x_all[order[start:start + cfg.batch]]
            terms, gw, gb = loss_and_grads(model, batch)
            if not np.isfinite(terms.total):
                raise TrainingDiverged(epoch)
            step += 1
            lr_t = cfg.lr * np.sqrt(1 - b2**step) / (1 - b1**step)
            for p, g, a, v in zip(params, gw + gb, m1, m2):
                a *= b1
                a += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= lr_t * a / (np.sqrt(v) + eps)
        epoch_loss = loss(model, x_all, forward(model, x_all))
        if not np.isfinite(epoch_loss.total):
            raise TrainingDiverged(epoch)
        model.history.append(epoch_loss.total)
        if callback is not None:
            callback(epoch, model)
    model.reference = compute_reference(model, x_all)
    return model


def compute_reference(model, x):
    """Training-set reference arrays: per-sensor errors, channel deltas, mean squared norms."""
    y = forward(model, x)
    return {
        "errors": sensor_errors(x, y),
        "deltas": norm_deltas(x, y),
        "sq_norm": np.mean(np.sum(x * x, axis=-2), axis=0),
    }


def sensor_errors(x, y):
    """(B, N) squared error per sensor, averaged over its two channels and the window."""
    n = x.shape[-1] // 2
    sq = (y - x) ** 2
    per_channel = sq.mean(axis=-2)
    return 0.5 * (per_channel[..., :n] + per_channel[..., n:])


# -- persistence -------------------------------------------------------------

def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(d):
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def _payload(model):
    st = model.norm_stats
    return {
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "gamma": float(model.gamma),
        "seed": int(model.seed),
        "config": model.config,
        "weights": [_arr(w) for w in model.weights],
        "biases": [_arr(b) for b in model.biases],
        "W": _arr(model.W),
        "norm_stats": None if st is None else {
            "mean": _arr(st.mean), "std": _arr(st.std), "clamped": [bool(v) for v in st.clamped],
        },
        "reference": {k: _arr(v) for k, v in model.reference.items()},
        "history": [float(v) for v in model.history],
        "pair_reduction": model.pair_reduction,
    }


def _checksum(payload):
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def dumps_model(model):
    payload = _payload(model)
    doc = {"format": FORMAT, "version": FORMAT_VERSION, "sha256": _checksum(payload), "model": payload}
    return json.dumps(doc, indent=1) + "\n"


def save_model(model, path):
    write_text(path, dumps_model(model))


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"unreadable model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CorruptModel("not a model file")
    if doc.get("version") != FORMAT_VERSION:
        raise CorruptModel(f"unsupported model version {doc.get('version')!r}")
    payload = doc.get("model")
    if _checksum(payload) != doc.get("sha256"):
        raise CorruptModel("checksum mismatch")
    try:
        st = payload["norm_stats"]
        stats = None if st is None else NormStats(_unarr(st["mean"]), _unarr(st["std"]), np.array(st["clamped"], bool))
        return MiaeModel(
            layer_dims=payload["layer_dims"],
            weights=[_unarr(w) for w in payload["weights"]],
            biases=[_unarr(b) for b in payload["biases"]],
            W=_unarr(payload["W"]),
            gamma=payload["gamma"],
            activation=payload["activation"],
            norm_stats=stats,
            reference={k: _unarr(v) for k, v in payload["reference"].items()},
            seed=payload["seed"],
            config=payload["config"],
            history=payload["history"],
            pair_reduction=payload["pair_reduction"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed model payload: {exc}") from None


def load_model(path):
    with open(path) as fh:
        return loads_model(fh.read())
