"""Command-line experiment runner.

Usage::

    wiggleguide <eig|series|bound|mc|brackets|ct|interval> --config cfg.json
                [--out DIR] [--svg] [--workers K] [--mtx]

Exit status is 0 on success, 1 for an invalid config, 2 when a solver does
not converge and 3 when a mathematical precondition fails.  Failures write a
JSON error record to stderr and to ``DIR/error.json``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .assembly import assemble, export_matrix_market, grid_for
from .eigensolve import smallest_eigs
from .exceptions import ConfigError, ConvergenceError, PreconditionError
from .geometry import Disorder, WaveguideSpec, constants, make_bump
from .greens import ct_sweep, decay_rate_fit
from .perturbation import deterministic_bound, fourier_coefficients, second_order_coefficient
from .probability import (
    DistributionSpec,
    bracketing_check,
    estimate_from_shifts,
    sample_config,
    sample_ground_shifts,
    theorem_interval,
)

__all__ = ["CONFIG_SCHEMA", "SUBCOMMANDS", "config_hash", "load_config", "main", "run"]

SCHEMA_VERSION = 1
SUBCOMMANDS = ("eig", "series", "bound", "mc", "brackets", "ct", "interval")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "N"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "bump": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["polynomial", "skew_polynomial", "sine"]},
                "l": {"type": "number", "minimum": 1},
            },
        },
        "N": {"type": "integer", "minimum": 1},
        "kappa": {"type": "number", "minimum": 0},
        "gamma": {"type": "number"},
        "omega": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "distribution": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["bernoulli", "uniform", "two_point"]},
                "p": {"type": "number", "minimum": 0, "maximum": 1},
                "scale": {"type": "number", "minimum": 0, "maximum": 1},
                "a": {"type": "number", "minimum": 0, "maximum": 1},
                "b": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "per_cell": {"type": "integer", "minimum": 1},
                "n2": {"type": "integer", "minimum": 8},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tol": _pos, "k": {"type": "integer", "minimum": 1, "maximum": 50}},
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t", "trials"],
            "properties": {
                "t": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
                "trials": {"type": "integer", "minimum": 1},
            },
        },
        "brackets": {
            "type": "object",
            "additionalProperties": False,
            "required": ["Kcells"],
            "properties": {"Kcells": {"type": "integer", "minimum": 1}},
        },
        "ct": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alphas"],
            "properties": {
                "lambda": _num,
                "gap_below": _pos,
                "alphas": {"type": "array", "items": {"type": "number", "minimum": 2},
                           "minItems": 1},
                "betas": {"type": "array", "items": {"type": "number", "minimum": 2},
                          "minItems": 1},
            },
        },
        "series": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_max": {"type": "integer", "minimum": 1},
                "m_max": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
            },
        },
    },
}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of ``cfg``."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    if "omega" in cfg and len(cfg["omega"]) != cfg["N"]:
        raise ConfigError(f"omega has {len(cfg['omega'])} entries, N = {cfg['N']}")
    return cfg


# ---------------------------------------------------------------- builders

def _bump(cfg):
    b = cfg.get("bump", {})
    return make_bump(b.get("family", "polynomial"), b.get("l", 1.0))


def _mu(cfg):
    return DistributionSpec(**cfg.get("distribution", {"kind": "uniform"}))


def _kappa(cfg, bump):
    if "kappa" in cfg:
        return float(cfg["kappa"])
    if "gamma" in cfg:
        tp = theorem_interval(cfg["gamma"], cfg["N"], _mu(cfg), constants(bump))
        return tp.remark_kappa
    raise ConfigError("config needs either kappa or gamma")


def _spec(cfg, trial=0):
    bump = _bump(cfg)
    if "omega" in cfg:
        disorder = Disorder(cfg["omega"])
    else:
        disorder = sample_config(_mu(cfg), cfg["N"], cfg.get("seed", 0), trial)
    return WaveguideSpec(bump=bump, kappa=_kappa(cfg, bump), disorder=disorder)


def _grid(cfg, spec):
    g = cfg.get("grid", {})
    return grid_for(spec, g.get("per_cell", 16), g.get("n2", 17))


def _solver(cfg):
    s = cfg.get("solver", {})
    return s.get("tol", 1e-8), s.get("k", 2)


# ---------------------------------------------------------------- emitters

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def append_csv(path, header, rows):
    """Append rows; a new file starts with a timestamp comment and the header."""
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        if new:
            stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            fh.write(f"# wiggleguide {__version__} {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_svg(path, series, title, xlabel, ylabel, logy=False, width=640, height=400):
    """Minimal self-contained line plot: ``series`` is a list of ``(label, x, y)``."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    if logy:
        ys = np.log10(ys[ys > 0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + (1.0 - (y - y0) / (y1 - y0)) * ph

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{pad_l + pw / 2}" y="{height - 10}" text-anchor="middle" '
           f'font-size="12">{xlabel}</text>',
           f'<text x="15" y="{pad_t + ph / 2}" font-size="12" '
           f'transform="rotate(-90 15 {pad_t + ph / 2})" text-anchor="middle">'
           f'{("log10 " if logy else "") + ylabel}</text>']
    for v, anchor in ((x0, "start"), (x1, "end")):
        out.append(f'<text x="{px(v):.1f}" y="{pad_t + ph + 15}" text-anchor="{anchor}" '
                   f'font-size="10">{v:.3g}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{pad_l - 5}" y="{py(v):.1f}" text-anchor="end" '
                   f'font-size="10">{v:.3g}</text>')
    for i, (label, x, y) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if logy:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad_l + 10}" y="{pad_t + 15 + 14 * i}" fill="{c}" '
                   f'font-size="11">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------- subcommands

def _base(cfg, h):
    return {"config_hash": h, "seed": cfg.get("seed", 0), "subcommand": None}


def _run_eig(cfg, h, out, opts):
    spec = _spec(cfg)
    grid = _grid(cfg, spec)
    tol, k = _solver(cfg)
    op = assemble(spec, grid)
    res = smallest_eigs(op, k, tol=tol)
    lam = res.eigenvalues
    lam2 = float(lam[1]) if len(lam) > 1 else float("nan")
    append_csv(os.path.join(out, "eig.csv"),
               ["config_hash", "N", "kappa", "seed", "grid", "lambda1", "lambda2", "residual"],
               [[h, spec.N, spec.kappa, cfg.get("seed", 0), grid.label(), float(lam[0]), lam2,
                 float(res.residuals.max())]])
    detail = {"eigenvalues": lam, "residuals": res.residuals, "grid": grid.label(),
              "method": res.method, "iterations": res.iterations, "N": spec.N,
              "kappa": spec.kappa, "omega": spec.disorder.omega, "epsilon": spec.epsilon}
    if opts.mtx:
        detail["matrix_market"] = [os.path.basename(p)
                                   for p in export_matrix_market(op, out, "eig")]
    if opts.svg:
        x = np.linspace(0.0, spec.L, 400)
        write_svg(os.path.join(out, "eig_profile.svg"), [("P(x1)", x, spec.profile(x))],
                  "boundary profile", "x1", "P")
    return detail


def _run_series(cfg, h, out, opts):
    spec = _spec(cfg)
    s = cfg.get("series", {})
    series = fourier_coefficients(spec, s.get("n_max"))
    S, tail = second_order_coefficient(series, spec.L, s.get("m_max", 256))
    detail = {"S": S, "S_tail": tail, "n_max": series.n_max, "m_max": s.get("m_max", 256),
              "G0": series.G0, "parseval_tail_bound": series.tail_bound,
              "predicted_shift": spec.epsilon**2 * S, "epsilon": spec.epsilon, "L": spec.L}
    if opts.svg:
        n = np.arange(1, series.n_max + 1)
        write_svg(os.path.join(out, "series.svg"),
                  [("|G_n|", n, np.abs(series.Gn)), ("bound", n, series.coefficient_bound(n))],
                  "cosine coefficients", "n", "|G_n|", logy=True)
    return detail


def _run_bound(cfg, h, out, opts):
    spec = _spec(cfg)
    s = cfg.get("series", {})
    rep = deterministic_bound(spec, s.get("n_max"), s.get("m_max", 256),
                              fem_grid=_grid(cfg, spec))
    return rep.as_dict()


def _run_mc(cfg, h, out, opts):
    if "mc" not in cfg:
        raise ConfigError("mc subcommand needs an 'mc' section")
    bump = _bump(cfg)
    mu = _mu(cfg)
    kappa = _kappa(cfg, bump)
    probe = WaveguideSpec(bump=bump, kappa=0.0, disorder=Disorder(np.zeros(cfg["N"])))
    grid = _grid(cfg, probe)
    tol, _ = _solver(cfg)
    seed = cfg.get("seed", 0)
    ts = cfg["mc"]["t"]
    ts = ts if isinstance(ts, list) else [ts]
    shifts = sample_ground_shifts(bump, cfg["N"], kappa, mu, cfg["mc"]["trials"], seed, grid,
                                  workers=opts.workers, tol=tol)
    ests = [estimate_from_shifts(shifts, t, seed) for t in ts]
    append_csv(os.path.join(out, "mc.csv"),
               ["config_hash", "t", "trials", "successes", "p_hat", "ci_lo", "ci_hi"],
               [[h, t, e.trials, e.successes, e.estimate, e.ci_low, e.ci_high]
                for t, e in zip(ts, ests)])
    if opts.svg:
        srt = np.sort(shifts)
        write_svg(os.path.join(out, "mc_cdf.svg"),
                  [("empirical CDF", srt, np.arange(1, len(srt) + 1) / len(srt))],
                  "ground-state shift distribution", "lambda1 - 1", "fraction")
    # discretization bias of the ground state on this grid, for calibrating t
    bias = smallest_eigs(assemble(probe, grid), 1, tol=tol).eigenvalues[0] - 1.0
    return {"kappa": kappa, "grid": grid.label(), "straight_guide_shift": bias,
            "shifts": shifts, "estimates": [e.__dict__ for e in ests]}


def _run_brackets(cfg, h, out, opts):
    if "brackets" not in cfg:
        raise ConfigError("brackets subcommand needs a 'brackets' section")
    spec = _spec(cfg)
    rep = bracketing_check(spec, cfg["brackets"]["Kcells"], _grid(cfg, spec))
    return rep.__dict__


def _run_ct(cfg, h, out, opts):
    if "ct" not in cfg:
        raise ConfigError("ct subcommand needs a 'ct' section")
    c = cfg["ct"]
    spec = _spec(cfg)
    grid = _grid(cfg, spec)
    alphas = c["alphas"]
    betas = c.get("betas", alphas)
    if len(betas) != len(alphas):
        raise ConfigError("ct.alphas and ct.betas must have equal length")
    lam = c.get("lambda")
    if lam is None:
        lam1 = smallest_eigs(assemble(spec, grid), 1).eigenvalues[0]
        lam = float(lam1 - c.get("gap_below", 1e-3))
    reps = ct_sweep(spec, grid, lam, alphas, betas, workers=opts.workers)
    append_csv(os.path.join(out, "ct.csv"),
               ["config_hash", "alpha", "beta", "dist", "delta", "measured", "proof_bound",
                "final_bound"],
               [[h, r.alpha, r.beta, r.dist, r.delta, r.measured_norm, r.proof_bound,
                 r.final_bound] for r in reps])
    detail = {"lambda": lam, "grid": grid.label(), "reports": [r.as_dict() for r in reps]}
    if len(reps) >= 2 and len({r.dist for r in reps}) >= 2:
        detail["fitted_decay_rate"] = decay_rate_fit(reps)
        detail["bound_decay_rate"] = reps[0].delta / 24.0
    if opts.svg:
        d = [r.dist for r in reps]
        write_svg(os.path.join(out, "ct.svg"),
                  [("measured", d, [r.measured_norm for r in reps]),
                   ("(2/delta) exp(-delta dist/24)", d, [r.proof_bound for r in reps])],
                  "end-strip resolvent block", "dist", "norm", logy=True)
    return detail


def _run_interval(cfg, h, out, opts):
    if "gamma" not in cfg:
        raise ConfigError("interval subcommand needs 'gamma'")
    bump = _bump(cfg)
    tp = theorem_interval(cfg["gamma"], cfg["N"], _mu(cfg), constants(bump))
    d = dict(tp.__dict__)
    d["notes"] = list(tp.notes) + [
        "the initial-scale regime N >= N1 is out of reach numerically; its ingredients are "
        "checked separately (series margin, large deviations, Neumann bracketing)"]
    return d


_RUNNERS = {"eig": _run_eig, "series": _run_series, "bound": _run_bound, "mc": _run_mc,
            "brackets": _run_brackets, "ct": _run_ct, "interval": _run_interval}


def run(subcommand, cfg, out, svg=False, workers=None, mtx=False):
    """Run one subcommand on a validated config; returns the JSON detail record."""
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    validate_config(cfg)
    os.makedirs(out, exist_ok=True)
    opts = argparse.Namespace(svg=svg, mtx=mtx,
                              workers=workers if workers else cfg.get("workers", 1))
    h = config_hash(cfg)
    detail = _RUNNERS[subcommand](cfg, h, out, opts)
    record = {"subcommand": subcommand, "config_hash": h, "seed": cfg.get("seed", 0),
              "version": __version__, "config": cfg, "result": detail}
    write_json(os.path.join(out, f"{subcommand}.json"), record)
    return record


def _fail(out, code, exc):
    rec = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("residual", "index", "distance"):
        if hasattr(exc, attr):
            rec[attr] = _jsonable(getattr(exc, attr))
    sys.stderr.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
    try:
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "error.json"), rec)
    except OSError:
        pass
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="wiggleguide",
                                     description="Low-lying spectrum of wiggled waveguides.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    parser.add_argument("--workers", type=int, default=None, help="thread count")
    parser.add_argument("--mtx", action="store_true", help="eig: export K and M")
    args = parser.parse_args(argv)
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config)
        record = run(args.subcommand, cfg, args.out, args.svg, args.workers, args.mtx)
    except ConfigError as exc:
        return _fail(args.out, 1, exc)
    except ConvergenceError as exc:
        return _fail(args.out, 2, exc)
    except PreconditionError as exc:
        return _fail(args.out, 3, exc)
    print(json.dumps({"subcommand": args.subcommand, "config_hash": record["config_hash"],
                      "out": args.out}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
