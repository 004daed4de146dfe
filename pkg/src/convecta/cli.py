"""Command-line front door.

Every command prints one JSON document on stdout and can write its main
artifact (``--out``) and a run manifest (``--manifest``). A manifest passed back
through ``--config`` replays the run; explicit flags override its values.

Exit codes: 0 success, 1 verification found violations, 2 invalid input,
3 covariance fails the existence condition, 4 quadrature did not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import __version__
from .covariance import (MODEL_PARAMETERS, classify_base, classify_dalang, classify_holder, max_holder_band,
                         model_from_json)
from .estimators import KINDS, holder_fit, moments, structure_function, structure_points
from .geometry import FlowConfig, green
from .lemma_verifier import (check_lemma_2_2, check_lemma_3_1, check_remark2_limit,
                             check_theorem1_sandwich)
from .quadrature import ExistenceError, QuadratureError, second_moment
from .records import RunManifest, Stopwatch, load_config, samples_csv, snapshot_csv, structure_csv
from .simulator import Discretization, simulate_ensemble, simulate_field_snapshot

__all__ = ["main", "build_parser", "DEFAULTS", "EXIT_OK", "EXIT_VIOLATIONS", "EXIT_INVALID",
           "EXIT_EXISTENCE", "EXIT_QUADRATURE"]

EXIT_OK, EXIT_VIOLATIONS, EXIT_INVALID, EXIT_EXISTENCE, EXIT_QUADRATURE = 0, 1, 2, 3, 4

DEFAULT_H = [2.0**-k for k in range(7, 2, -1)]
SUITES = ("lemma_2_2", "lemma_3_1", "sandwich", "remark2")

DEFAULTS = {
    "green": {"t": None, "x": None, "mach": 0.0},
    "check": {"model": None, "alpha": 0.5},
    "moment": {"method": "quadrature", "t": None, "mach": 0.0, "model": None, "tol": 1e-8,
               "n": 128, "dt": None, "replicates": 2000, "seed": 0, "sampler": "projected",
               "samples": 2_000_000},
    "holder": {"kind": "TimeShift", "model": None, "mach": 0.0, "t": 0.5, "h": DEFAULT_H,
               "n": 64, "dt": None, "replicates": 4000, "seed": 0, "sampler": "spectral"},
    "verify": {"suite": None, "draws": 10_000, "seed": 0, "model": None, "mach": 0.0, "t": 0.25,
               "models": None},
    "snapshot": {"t": None, "mach": 0.0, "model": None, "n": 64, "dt": None, "seed": 0,
                 "replicate": 0, "t0": None},
}


class UsageError(ValueError):
    pass


# -- parsing --------------------------------------------------------------------

def _model_arg(text):
    """A model as JSON text, ``@file.json``, ``kind:value`` or a bare kind name."""
    if isinstance(text, dict):
        return text
    text = text.strip()
    if text.startswith("@"):
        try:
            with open(text[1:], encoding="utf-8") as fh:
                return json.load(fh)
        except OSError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    if text.startswith("{"):
        return json.loads(text)
    kind, sep, value = text.partition(":")
    if sep:
        if kind not in MODEL_PARAMETERS:
            raise argparse.ArgumentTypeError(f"unknown covariance kind {kind!r}")
        return {"kind": kind, MODEL_PARAMETERS[kind]: float(value)}
    return {"kind": text}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convecta", description="Stochastic convected wave equation toolkit.")
    p.add_argument("--version", action="version", version=f"convecta {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file or run manifest to replay")
        sp.add_argument("--out", help="write the main result here")
        sp.add_argument("--manifest", help="write the run manifest here (default: <out>.manifest.json)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap; results do not depend on it (env CONVECTA_THREADS)")

    sp = sub.add_parser("green", help="evaluate the convected Green's function")
    sp.add_argument("--t", type=float)
    sp.add_argument("--x", type=float, nargs=2, metavar=("X1", "X2"))
    sp.add_argument("--mach", type=float)
    common(sp)

    sp = sub.add_parser("check", help="classify a covariance model")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--alpha", type=float, help="exponent for the Hölder integral (default 0.5)")
    common(sp)

    sp = sub.add_parser("moment", help="second moment by quadrature or Monte Carlo")
    sp.add_argument("--method", choices=("quadrature", "mc", "direct"))
    sp.add_argument("--t", type=float)
    sp.add_argument("--mach", type=float)
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--n", type=int, help="grid cells per side")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sampler", choices=("projected", "field", "spectral"))
    sp.add_argument("--samples", type=int, help="draws for --method direct")
    sp.add_argument("--samples-out", help="write Monte Carlo samples as CSV")
    common(sp)

    sp = sub.add_parser("holder", help="structure function and log-log slope")
    sp.add_argument("--kind", choices=KINDS)
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--mach", type=float)
    sp.add_argument("--t", type=float, help="base time")
    sp.add_argument("--h", type=float, nargs="+")
    sp.add_argument("--n", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sampler", choices=("projected", "field", "spectral"))
    sp.add_argument("--samples-out", help="write Monte Carlo samples as CSV")
    common(sp)

    sp = sub.add_parser("verify", help="randomised inequality suites")
    sp.add_argument("--suite", choices=SUITES)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--model", type=_model_arg, help="model for the remark2 suite")
    sp.add_argument("--models", type=_model_arg, nargs="+", help="model family for the sandwich suite")
    sp.add_argument("--mach", type=float)
    sp.add_argument("--t", type=float)
    common(sp)

    sp = sub.add_parser("snapshot", help="one replicate of the field at all grid centres")
    sp.add_argument("--t", type=float)
    sp.add_argument("--t0", type=float, help="horizon sizing the grid (default t)")
    sp.add_argument("--mach", type=float)
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--n", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replicate", type=int)
    common(sp)
    return p


def resolve_config(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        file_cmd, file_cfg = load_config(args.config)
        if file_cmd is not None and file_cmd != cmd:
            raise UsageError(f"manifest is for command {file_cmd!r}, not {cmd!r}")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS[cmd]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"missing required setting --{k}")


def _threads(args):
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.threads
    return int(os.environ.get("CONVECTA_THREADS", "1") or 1)


# -- commands ---------------------------------------------------------------------

def cmd_green(cfg, args):
    _need(cfg, "t", "x")
    flow = FlowConfig(float(cfg["mach"]), max(float(cfg["t"]), 1e-300))
    g = green(float(cfg["t"]), float(cfg["x"][0]), float(cfg["x"][1]), flow)
    return {"value": g.value, "on_support": g.on_support, "singular": g.singular}, None, EXIT_OK


def cmd_check(cfg, args):
    _need(cfg, "model")
    model = model_from_json(cfg["model"])
    base, dalang = classify_base(model), classify_dalang(model)
    holder = classify_holder(model, float(cfg["alpha"]))
    band = max_holder_band(model)
    out = {"model": model.to_json(), "base": base.to_json(), "dalang": dalang.to_json(),
           "holder": {"alpha": float(cfg["alpha"]), **holder.to_json()},
           "holder_band": None if band is None else list(band)}
    if not dalang.convergent:
        out["error"] = "no real-valued solution: the existence integral of r ln(1/r) f(r) diverges"
        return out, None, EXIT_EXISTENCE
    return out, None, EXIT_OK


def _ensemble(points, flow, model, cfg, threads):
    disc = Discretization.for_flow(flow, int(cfg["n"]), int(cfg["replicates"]), int(cfg["seed"]),
                                   None if cfg["dt"] is None else float(cfg["dt"]),
                                   times=[p[0] for p in points])
    return simulate_ensemble(points, flow, model, disc, sampler=cfg["sampler"], threads=threads), disc


def cmd_moment(cfg, args):
    _need(cfg, "t", "model")
    model = model_from_json(cfg["model"])
    t = float(cfg["t"])
    flow = FlowConfig(float(cfg["mach"]), t)
    method = cfg["method"]
    if method in ("quadrature", "direct"):
        q = second_moment(t, flow, model, tol=float(cfg["tol"]),
                          method="reduced" if method == "quadrature" else "direct",
                          samples=int(cfg["samples"]), seed=int(cfg["seed"]))
        if not q.converged:
            raise QuadratureError(f"second moment did not converge: {q.to_json()}")
        return {"method": method, "value": q.value, "err": q.abs_err}, None, EXIT_OK
    if method != "mc":
        raise UsageError(f"unknown method {method!r}")
    ens, disc = _ensemble([(t, 0.0, 0.0)], flow, model, cfg, _threads(args))
    est = moments(ens, (t, 0.0, 0.0))
    out = {"method": "mc", "value": est.var, "se": est.se_var, "mean": est.mean, "se_mean": est.se_mean,
           "replicates": ens.replicates, "dt": disc.dt, "grid": disc.grid.to_json()}
    return out, ens, EXIT_OK


def cmd_holder(cfg, args):
    _need(cfg, "model")
    model = model_from_json(cfg["model"])
    h = sorted(float(v) for v in cfg["h"])
    base = (float(cfg["t"]), 0.0, 0.0)
    kind = cfg["kind"]
    t0 = base[0] + (max(h) if kind == "TimeShift" else 0.0)
    flow = FlowConfig(float(cfg["mach"]), t0)
    ens, disc = _ensemble(structure_points(base, kind, h), flow, model, cfg, _threads(args))
    tab = structure_function(ens, base, kind, h)
    fit = holder_fit(tab, model)
    return {"table": tab.to_json(), "fit": fit.to_json()}, (ens, tab), EXIT_OK


def cmd_verify(cfg, args):
    _need(cfg, "suite")
    suite = cfg["suite"]
    threads = _threads(args)
    flow = FlowConfig(float(cfg["mach"]), 1.0)
    if suite == "lemma_2_2":
        rep = check_lemma_2_2(int(cfg["draws"]), int(cfg["seed"]), threads=threads)
    elif suite == "lemma_3_1":
        rep = check_lemma_3_1(int(cfg["draws"]), int(cfg["seed"]), threads=threads)
    elif suite == "sandwich":
        family = cfg["models"] or [{"kind": "power_law", "alpha_f": a} for a in (0.5, 1.0, 1.5)]
        rep = check_theorem1_sandwich([model_from_json(m) for m in family], float(cfg["t"]), flow)
    elif suite == "remark2":
        _need(cfg, "model")
        rep = check_remark2_limit(model_from_json(cfg["model"]), flow)
    else:
        raise UsageError(f"unknown suite {suite!r}; expected one of {SUITES}")
    return rep.to_json(), None, EXIT_OK if rep.passed else EXIT_VIOLATIONS


def cmd_snapshot(cfg, args):
    _need(cfg, "t", "model")
    model = model_from_json(cfg["model"])
    t = float(cfg["t"])
    t0 = float(cfg["t0"]) if cfg["t0"] is not None else max(t, 1e-12)
    flow = FlowConfig(float(cfg["mach"]), t0)
    disc = Discretization.for_flow(flow, int(cfg["n"]), 2, int(cfg["seed"]),
                                   None if cfg["dt"] is None else float(cfg["dt"]), times=[t] if t > 0 else [])
    snap = simulate_field_snapshot(t, flow, model, disc, replicate=int(cfg["replicate"]))
    out = {"t": t, "n": disc.grid.n, "half_extent": disc.grid.half_extent, "dt": disc.dt,
           "valid_cells": int(snap.valid.sum())}
    return out, snap, EXIT_OK


COMMANDS = {"green": cmd_green, "check": cmd_check, "moment": cmd_moment, "holder": cmd_holder,
            "verify": cmd_verify, "snapshot": cmd_snapshot}


# -- output -----------------------------------------------------------------------

def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(args, cfg, result, artifact, elapsed):
    cmd = args.command
    seed = cfg.get("seed")
    manifest = RunManifest(cmd, cfg, None if seed is None else int(seed), wall_time=elapsed)
    doc = {"command": cmd, "result": result, "manifest": manifest.to_json()}
    if cmd == "holder" and artifact is not None:
        ens, tab = artifact
        if args.out:
            _write(args.out, structure_csv(tab))
        if getattr(args, "samples_out", None):
            _write(args.samples_out, samples_csv(ens))
    elif cmd == "snapshot" and artifact is not None:
        if args.out:
            _write(args.out, snapshot_csv(artifact))
    else:
        if args.out:
            _write(args.out, json.dumps(result, indent=2, sort_keys=True) + "\n")
        if artifact is not None and getattr(args, "samples_out", None):
            _write(args.samples_out, samples_csv(artifact))
    mpath = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if mpath:
        _write(mpath, json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _fail(code, kind, exc):
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
        with Stopwatch() as sw:
            result, artifact, code = COMMANDS[args.command](cfg, args)
        _emit(args, cfg, result, artifact, sw.elapsed)
        return code
    except ExistenceError as exc:
        return _fail(EXIT_EXISTENCE, "no real-valued solution", exc)
    except QuadratureError as exc:
        return _fail(EXIT_QUADRATURE, "quadrature did not converge", exc)
    except (ValueError, TypeError, KeyError, OSError, MemoryError, json.JSONDecodeError) as exc:
        return _fail(EXIT_INVALID, "invalid input", exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
