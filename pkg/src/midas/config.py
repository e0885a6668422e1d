"""Run configuration: a sectioned key-value file with typed, validated defaults."""
import configparser
import os
from dataclasses import dataclass

from .errors import ConfigError

# section -> key -> (type, default); None default means "unset"
SCHEMA = {
    "paths": {
        "out": (str, "midas-run"),
    },
    "simulate": {
        "seed": (int, 0),
        "n_cols": (int, 9),
        "n_rows": (int, 5),
        "pitch": (float, 26.0),
        "train_segments": (int, 600),
        "normal_segments": (int, 110),
        "damaged_segments": (int, 50),
        "n_components": (int, 100),
        "noise_pct": (float, 0.005),
        "delta_t": (float, 0.0),
    },
    "damage": {
        "kind": (str, "crack"),
        "center_x": (float, 104.0),
        "center_y": (float, 52.0),
        "radius": (float, 39.0),
        "amplification": (float, 2.0),
        "attenuation": (float, 1.0),
    },
    "compress": {
        "segment_len": (int, 200),
        "thresholds": (str, "auto"),
        "n_levels": (int, 7),
        "fit_amplitude": (bool, False),
    },
    "window": {
        "length": (int, 12),
        "stride": (int, 2),
    },
    "model": {
        "method": (str, "miae"),
        "gamma": (float, 0.05),
        "epochs": (int, 500),
        "lr": (float, 1e-3),
        "batch": (int, 32),
        "seed": (int, 0),
        "layer_dims": (list, None),
        "center_scale": (float, None),
        "pair_reduction": (str, "mean"),
    },
    "policy": {
        "fpr": (float, 0.05),
        "q": (float, 0.1),
        "lambda": (float, 0.5),
        "radius": (float, None),
        "smote_k": (int, 5),
        "resolution": (int, 100),
        "pgm": (bool, True),
    },
    "spirit": {
        "k": (int, 2),
        "forgetting": (float, 0.995),
    },
}

METHODS = ("miae", "ae", "spirit")


def _parse(section, key, kind, raw):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is list:
            return [int(v) for v in raw.replace(" ", "").split(",") if v]
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


@dataclass
class RunConfig:
    values: dict
    source: str = None

    def __getitem__(self, section):
        return self.values[section]

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown setting [{section}] {key}")
        self.values[section][key] = value

    def as_dict(self):
        return {s: dict(kv) for s, kv in self.values.items()}


def defaults():
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def validate_config(cfg):
    """Reject values outside their domains; returns ``cfg``."""
    v = cfg.values
    m, p = v["model"], v["policy"]
    if m["method"] not in METHODS:
        raise ConfigError(f"[model] method must be one of {METHODS}")
    if m["pair_reduction"] not in ("mean", "sum"):
        raise ConfigError("[model] pair_reduction must be mean or sum")
    if m["gamma"] < 0:
        raise ConfigError("[model] gamma must be >= 0")
    if m["epochs"] < 1 or m["batch"] < 1 or not m["lr"] > 0:
        raise ConfigError("[model] epochs, batch and lr must be positive")
    if not 0 < p["fpr"] < 1 or not 0 < p["q"] < 1:
        raise ConfigError("[policy] fpr and q must lie in (0, 1)")
    if not 0 <= p["lambda"] <= 1:
        raise ConfigError("[policy] lambda must lie in [0, 1]")
    if p["radius"] is not None and not p["radius"] > 0:
        raise ConfigError("[policy] radius must be positive")
    if v["compress"]["thresholds"] not in ("auto", "lab"):
        raise ConfigError("[compress] thresholds must be auto or lab")
    if v["damage"]["kind"] not in ("crack", "boundary", "none"):
        raise ConfigError("[damage] kind must be crack, boundary or none")
    sim = v["simulate"]
    for key in ("train_segments", "normal_segments", "damaged_segments", "n_cols", "n_rows"):
        if sim[key] < 1:
            raise ConfigError(f"[simulate] {key} must be >= 1")
    if v["window"]["length"] < 1 or v["window"]["stride"] < 1:
        raise ConfigError("[window] length and stride must be >= 1")
    return cfg


def load_config(path=None):
    """Defaults overlaid with ``path``; unknown sections or keys are errors."""
    cfg = defaults()
    if path is None:
        return cfg
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
            kind = SCHEMA[section][key][0]
            cfg.values[section][key] = _parse(section, key, kind, raw)
    cfg.source = path
    return validate_config(cfg)
