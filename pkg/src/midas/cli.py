"""Command-line driver: simulate, compress, window, train, detect, localize.

Every stage reads and writes files under one run directory (``--out`` or
``[paths] out``), so stages can be rerun independently. Exit status is 0 on
success, 1 for invalid input or configuration and 2 for runtime failures.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import compress, detect, localize, miae, simkit, spirit, windowing
from .config import METHODS, load_config, validate_config
from .errors import ConfigError, InsufficientData, MidasError, ValidationError
from .io import atomic_open, fmt, read_layout_csv, write_layout_csv, write_text

log = logging.getLogger("midas")

STREAMS = ("train", "normal", "damaged")
SUBCOMMANDS = ("simulate", "compress", "window", "train", "detect", "localize", "baseline-spirit",
               "evaluate", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--seed", type=int, metavar="N", help="overrides the simulation and model seeds")
    common.add_argument("--out", metavar="DIR", help="run directory (default: [paths] out)")
    common.add_argument("--method", choices=METHODS, help="detector (default: [model] method)")
    common.add_argument("--gamma", type=float, metavar="F", help="mechanics penalty")
    common.add_argument("--fpr", type=float, metavar="F", help="target false-positive rate")
    common.add_argument("--q", type=float, metavar="F", help="sensor fraction for the window rule")
    common.add_argument("--lambda", dest="lam", type=float, metavar="F", help="mu/sigma mixing weight")
    parser = _Parser(prog="midas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "simulate": "generate train, normal and damaged strain streams",
        "compress": "fit Gaussian survival curves to every segment",
        "window": "build normalized window datasets",
        "train": "train the autoencoder on the compressed training stream",
        "detect": "flag damaged windows",
        "localize": "score sensors and map the damage",
        "baseline-spirit": "localize with the streaming-PCA baseline",
        "evaluate": "detection metrics on normal vs damaged windows",
        "pipeline": "run every stage in order",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


# -- helpers -------------------------------------------------------------------

class Run:
    """Resolved configuration plus the run-directory layout."""

    def __init__(self, args):
        self.cfg = load_config(args.config)
        c = self.cfg
        if args.seed is not None:
            c.set("simulate", "seed", args.seed)
            c.set("model", "seed", args.seed)
        for key, section, name in (("method", "model", "method"), ("gamma", "model", "gamma"),
                                   ("fpr", "policy", "fpr"), ("q", "policy", "q"), ("lam", "policy", "lambda")):
            value = getattr(args, key)
            if value is not None:
                c.set(section, name, value)
        validate_config(c)
        self.out = args.out or c.get("paths", "out")

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    @property
    def method(self):
        return self.cfg.get("model", "method")

    def require(self, *parts):
        p = self.path(*parts)
        if not os.path.exists(p):
            raise ConfigError(f"missing input {p}; run the earlier stages first")
        return p


def _dump(path, doc):
    write_text(path, json.dumps(doc, indent=2) + "\n")


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _layout(run):
    return read_layout_csv(run.require("layout.csv"))


def _damage_truth(run):
    p = run.path("damage.json")
    if not os.path.exists(p):
        return None
    with open(p) as fh:
        doc = json.load(fh)
    return None if doc.get("kind") == "none" else doc


# -- stages --------------------------------------------------------------------

def cmd_simulate(run):
    s, d = run.cfg["simulate"], run.cfg["damage"]
    seg = run.cfg.get("compress", "segment_len")
    pos = simkit.grid_layout(s["n_cols"], s["n_rows"], s["pitch"])
    plate = simkit.default_plate(pos, seed=s["seed"])
    counts = [s["train_segments"], s["normal_segments"], s["damaged_segments"]]
    dt = simkit.TIMESTEP
    loading = simkit.generate_loading(s["seed"] + 1, s["n_components"], duration=sum(counts) * seg * dt)
    damage = None
    if d["kind"] == "crack":
        damage = simkit.DamageSpec((d["center_x"], d["center_y"]), d["radius"], amplification=d["amplification"])
    elif d["kind"] == "boundary":
        damage = simkit.DamageSpec((d["center_x"], d["center_y"]), d["radius"], attenuation=d["attenuation"],
                                   kind="boundary")
    write_layout_csv(run.path("layout.csv"), pos)
    first = 0
    for i, (name, count) in enumerate(zip(STREAMS, counts)):
        span = loading.window(first * seg * dt, count * seg * dt + 0.5 * dt)
        stream = simkit.simulate_strains(
            plate, span, damage=damage if name == "damaged" else None,
            delta_T=0.0 if name == "train" else s["delta_t"], noise_pct=s["noise_pct"], seed=s["seed"] + 2 + i,
        )
        stream.to_csv(run.path("strains", f"{name}.csv"))
        first += count
    truth = {"kind": d["kind"]}
    if damage is not None:
        truth.update(center=[d["center_x"], d["center_y"]], radius=d["radius"],
                     amplification=damage.amplification, attenuation=damage.attenuation)
    _dump(run.path("damage.json"), truth)
    log.info("simulated %d sensors into %s", len(pos), run.out)


def _thresholds(run, train_stream):
    c = run.cfg["compress"]
    if c["thresholds"] == "lab":
        return compress.LAB_THRESHOLDS
    return compress.select_thresholds(train_stream, c["n_levels"])


def cmd_compress(run):
    c = run.cfg["compress"]
    train = simkit.StrainStream.from_csv(run.require("strains", "train.csv"))
    th = _thresholds(run, train)
    with atomic_open(run.path("thresholds.csv")) as fh:
        fh.write("level\n" + "".join(f"{fmt(v)}\n" for v in th.levels))
    for name in STREAMS:
        src = run.path("strains", f"{name}.csv")
        if not os.path.exists(src):
            continue
        stream = train if name == "train" else simkit.StrainStream.from_csv(src)
        comp = compress.compress_stream(stream, th, c["segment_len"], fit_amplitude=c["fit_amplitude"])
        comp.to_csv(run.path("compressed", f"{name}.csv"))
        log.info("%s: %d segments, %d flagged", name, comp.n_segments, int(np.count_nonzero(comp.flags)))


def _windows(run, comp, layout=None):
    w = run.cfg["window"]
    return windowing.build_windows(comp, w["length"], w["stride"], layout)


def cmd_window(run):
    layout = _layout(run)
    train = windowing.normalize(_windows(run, compress.CompressedStream.from_csv(run.require("compressed", "train.csv")),
                                         layout))
    train.save(run.path("windows", "train"))
    for name in STREAMS[1:]:
        src = run.path("compressed", f"{name}.csv")
        if os.path.exists(src):
            ds = windowing.normalize(_windows(run, compress.CompressedStream.from_csv(src), layout), train.norm_stats)
            ds.save(run.path("windows", name))


def _model_path(run, method=None):
    return run.path(f"model-{method or run.method}.json")


def cmd_train(run):
    m = run.cfg["model"]
    if run.method == "spirit":
        raise ConfigError("spirit has no trained model; use baseline-spirit")
    comp = compress.CompressedStream.from_csv(run.require("compressed", "train.csv"))
    length = run.cfg.get("window", "length")
    if comp.n_segments < length:
        raise InsufficientData(f"{comp.n_segments} segments is fewer than the window length {length}")
    layout = _layout(run)
    data = windowing.normalize(_windows(run, comp, layout))
    raw = simkit.StrainStream.from_csv(run.require("strains", "train.csv"))
    mask = miae.center_sensors(layout) if m["center_scale"] is not None else None
    W = miae.build_weight_matrix(raw, m["center_scale"], mask)
    gamma = 0.0 if run.method == "ae" else m["gamma"]
    cfg = miae.TrainConfig(gamma=gamma, lr=m["lr"], epochs=m["epochs"], batch=m["batch"], seed=m["seed"],
                           layer_dims=tuple(m["layer_dims"]) if m["layer_dims"] else None,
                           pair_reduction=m["pair_reduction"])
    model = miae.train(data, W, cfg)
    miae.save_model(model, _model_path(run))
    log.info("trained %s: final loss %.6g", run.method, model.history[-1])


def _load_model(run):
    if run.method == "spirit":
        raise ConfigError("this stage needs an autoencoder method (miae or ae)")
    return miae.load_model(run.require(f"model-{run.method}.json"))


def _policy(run):
    p = run.cfg["policy"]
    return detect.DetectionPolicy(p["fpr"], p["q"])


def cmd_detect(run):
    model = _load_model(run)
    policy = _policy(run)
    thr = detect.calibrate_thresholds(model.reference["errors"], policy.fpr)
    streams = {}
    for name in STREAMS[1:]:
        src = run.path("windows", name)
        if not os.path.isdir(src):
            continue
        err = detect.reconstruction_errors(model, windowing.load_dataset(src))
        flags = detect.classify_windows(err, thr, policy)
        streams[name] = {
            "n_windows": int(len(err)),
            "flagged": int(flags.sum()),
            "flags": [int(v) for v in flags],
            "anomalous_sensors": [int(v) for v in detect.anomalous_sensors(err, thr).sum(axis=1)],
            "scores": _floats(detect.window_scores(err)),
        }
    if not streams:
        raise ConfigError("no test windows found; run simulate, compress and window first")
    _dump(run.path(f"detection-{run.method}.json"), {
        "method": run.method,
        "policy": {"fpr": policy.fpr, "q": policy.q, "n_sensors": model.n_sensors},
        "thresholds": _floats(thr),
        "streams": streams,
    })


def cmd_evaluate(run):
    model = _load_model(run)
    policy = _policy(run)
    k = run.cfg.get("policy", "smote_k")
    thr = detect.calibrate_thresholds(model.reference["errors"], policy.fpr)
    normal = detect.reconstruction_errors(model, windowing.load_dataset(run.require("windows", "normal")))
    damaged = detect.reconstruction_errors(model, windowing.load_dataset(run.require("windows", "damaged")))
    seed = run.cfg.get("model", "seed")
    raw = detect.evaluate_case(normal, damaged, thr, policy, balance=False)
    balanced = detect.evaluate_case(normal, damaged, thr, policy, balance=True, k=k, seed=seed)
    _dump(run.path(f"evaluation-{run.method}.json"), {
        "method": run.method,
        "policy": {"fpr": policy.fpr, "q": policy.q},
        "counts": {"normal": int(len(normal)), "damaged": int(len(damaged))},
        "unbalanced": raw.as_dict(),
        "balanced": {"method": "smote-enn", "k": k, "seed": seed, **balanced.as_dict()},
    })


def _localization_outputs(run, method, scores, layout):
    p = run.cfg["policy"]
    radius = p["radius"] or localize.default_radius(layout)
    smap = localize.build_score_map(scores.p, layout, p["resolution"])
    estimate = localize.estimate_location(scores.p, layout)
    try:
        centroid = list(localize.weighted_centroid(scores.p, layout))
    except MidasError:
        centroid = None
    truth = _damage_truth(run)
    doc = {
        "method": method,
        "lambda": scores.lam,
        "radius": radius,
        "reference_max": {"T_mu": scores.T_mu_ref_max, "T_sigma": scores.T_sigma_ref_max},
        "sensors": [
            {"id": f"s{i + 1}", "x": float(layout[i, 0]), "y": float(layout[i, 1]),
             "T_mu": float(scores.T_mu[i]), "T_sigma": float(scores.T_sigma[i]), "p": float(scores.p[i])}
            for i in range(len(layout))
        ],
        "peak": None if smap is None else list(smap.peak),
        "peak_defined": bool(smap is not None and smap.peak_defined),
        "centroid": centroid,
        "estimate": list(estimate),
    }
    if truth is not None:
        center = truth["center"]
        doc["truth"] = center
        doc["distance"] = float(np.hypot(estimate[0] - center[0], estimate[1] - center[1]))
        doc["success"] = localize.localization_success(estimate, center, radius)
    _dump(run.path(f"localization-{method}.json"), doc)
    if smap is not None:
        smap.to_csv(run.path(f"scoremap-{method}.csv"))
        if p["pgm"]:
            smap.to_pgm(run.path(f"scoremap-{method}.pgm"))


def cmd_localize(run):
    if run.method == "spirit":
        return cmd_baseline_spirit(run)
    model = _load_model(run)
    data = windowing.load_dataset(run.require("windows", "damaged"))
    y = miae.forward(model, data.tensor)
    deltas = miae.norm_deltas(data.tensor, y)
    ref = model.reference
    T = localize.relative_change(deltas, ref["deltas"], ref["sq_norm"])
    changes = localize.reference_changes(ref["deltas"], ref["sq_norm"], len(deltas))
    scores = localize.score_sensors(T, changes, run.cfg.get("policy", "lambda"))
    _localization_outputs(run, run.method, scores, _layout(run))


def _rows(comp, stats):
    return (np.concatenate([comp.mu, comp.sigma]).T - stats.mean) / stats.std


def cmd_baseline_spirit(run):
    sp = run.cfg["spirit"]
    stats = windowing.NormStats.from_csv(run.require("windows", "train", "stats.csv"))
    train = _rows(compress.CompressedStream.from_csv(run.require("compressed", "train.csv")), stats)
    damaged = _rows(compress.CompressedStream.from_csv(run.require("compressed", "damaged.csv")), stats)
    ref = spirit.fit_reference(train, len(damaged), k=sp["k"], forgetting=sp["forgetting"])
    delta, _ = spirit.channel_delta(ref.state, damaged)
    T = localize.relative_change(delta[None], ref.deltas, ref.sq_norm)
    changes = localize.reference_changes(ref.deltas, ref.sq_norm, 1)
    scores = localize.score_sensors(T, changes, run.cfg.get("policy", "lambda"))
    _localization_outputs(run, "spirit", scores, _layout(run))


def cmd_pipeline(run):
    for stage in (cmd_simulate, cmd_compress, cmd_window):
        stage(run)
    if run.method != "spirit":
        for stage in (cmd_train, cmd_detect, cmd_evaluate, cmd_localize):
            stage(run)
    cmd_baseline_spirit(run)


COMMANDS = {
    "simulate": cmd_simulate,
    "compress": cmd_compress,
    "window": cmd_window,
    "train": cmd_train,
    "detect": cmd_detect,
    "localize": cmd_localize,
    "baseline-spirit": cmd_baseline_spirit,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def run_subcommand(argv):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        COMMANDS[args.command](Run(args))
    except ValidationError as exc:
        print(f"midas {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (MidasError, OSError, ValueError) as exc:
        print(f"midas {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    level = os.environ.get("MIDAS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return run_subcommand(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
