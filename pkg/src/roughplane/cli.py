"""Experiment harness: subcommands wiring the modules into reproducible runs.

Configuration comes from a TOML file ([common] section plus one section per
subcommand); command-line flags override file values, which override
defaults.  Every run writes NDJSON records behind a manifest header line
(the only line carrying a timestamp, so payloads are byte-reproducible)
and CSV files for tabular curves.

Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 acceptance failure.
Environment: ROUGHPLANE_SEED and ROUGHPLANE_THREADS supply defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .covariance import CovarianceModel
from .errors import ConfigError, RoughPlaneError
from .field import GridSpec, derive_seeds, field_metadata, sample_field, save_field
from .fluctuation import z_point
from .geodesic import UNBOUNDED, UnitTangentState, exit_time, integrate
from .metric import FlatMetric, GridMetricField, gauss_curvature
from .runners import parallel_map
from .serialize import manifest, write_csv, write_ndjson
from .distance import distance_map, frontier_scan, minimizing_fraction, shape_constant
from .jacobi import first_conjugate_point, t_star
from .pov import historical_exit_times, verify_change_of_variables_multi
from .bump import build_bump, bump_event, bump_jacobi_check
from .conditioning import (
    condition,
    conditional_sample,
    grid_gaussian,
    lens_node_family,
    monotonicity_check,
    square_grid_nodes,
    uniform_probability_demo,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4

_COMMON_KEYS = {"seed", "threads", "out", "format"}

_DEFAULTS = {
    "sample": {"amplitude": 0.1, "extent": 4.0, "n": 128},
    "geodesic": {
        "amplitude": 0.1, "extent": 4.0, "n": 128, "angle": 0.0,
        "t_back": 0.0, "t_forward": 1.0, "h": 0.002,
    },
    "distance": {
        "amplitude": 0.1, "extent": 8.0, "n": 256, "radii": [1.0, 2.0, 3.0],
        "n_samples": 4, "n_dirs": 12, "stencil": 32,
    },
    "pov-verify": {
        "amplitude": 0.1, "t": 0.5, "n_samples": 2000, "extent": 4.0, "n": 128,
        "h": 0.002, "functionals": ["g11_origin", "tanh_curvature", "z_ball_clipped"],
    },
    "history": {
        "amplitude": 0.1, "extent": 6.0, "n": 192, "r": 1.0,
        "t_max": 2.5, "resolution": 0.02, "h": 0.002,
    },
    "frontier": {
        "amplitude": 0.2, "extent": 10.0, "n": 320, "angle": 0.0,
        "r_min": 1.0, "r_max": 4.0, "r_count": 13, "theta": 1.1,
        "h_threshold": 40.0, "h": 0.004,
    },
    "conjugate-scan": {
        "amplitude": 0.3, "extent": 10.0, "n": 256, "n_samples": 200,
        "horizon": 6.0, "h": 0.004, "stencil": 16, "flat": False,
    },
    "bump-verify": {
        "amplitude": 0.0003, "extent": 4.0, "n": 192, "n_samples": 20,
        "theta": math.pi / 4, "h_threshold": 1.0, "epsilon": 0.05,
    },
    "condition-verify": {
        "amplitude": 1.0, "extent": 2.4, "n_nodes": 7, "n_samples": 5000,
        "n_pairs": 20, "n_conditional": 2000,
    },
    "chi": {
        "amplitude": 0.3, "extent": 12.0, "n": 384,
        "radii": [1.5, 2.0, 3.0, 4.0], "n_samples": 24, "n_dirs": 8, "flat": False,
    },
}


def _load_config(path, subcommand):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    merged = {}
    for section in ("common", subcommand):
        part = raw.get(section, {})
        if not isinstance(part, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        merged.update(part)
    known = set(_DEFAULTS[subcommand]) | _COMMON_KEYS
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {sorted(unknown)}")
    return merged


def _resolve(args, subcommand):
    cfg = dict(_DEFAULTS[subcommand])
    cfg.update(_load_config(args.config, subcommand))
    for key in set(cfg) | _COMMON_KEYS:
        flag = key.replace("-", "_")
        if hasattr(args, flag) and getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    cfg.setdefault("seed", _env_int("ROUGHPLANE_SEED", 0))
    if "seed" in cfg and cfg["seed"] is None:
        cfg["seed"] = _env_int("ROUGHPLANE_SEED", 0)
    cfg.setdefault("threads", _env_int("ROUGHPLANE_THREADS", 1))
    if cfg.get("threads") is None:
        cfg["threads"] = _env_int("ROUGHPLANE_THREADS", 1)
    cfg.setdefault("out", "runs")
    cfg.setdefault("format", "ndjson")
    if cfg["format"] not in ("ndjson", "csv"):
        raise ConfigError(f"format must be ndjson or csv, got {cfg['format']!r}")
    _validate(cfg, subcommand)
    return cfg


def _env_int(name, default):
    val = os.environ.get(name)
    if val is None:
        return default
    try:
        return int(val)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer")


def _validate(cfg, subcommand):
    numeric_pos = {
        "extent", "n", "h", "t_max", "resolution", "n_samples", "n_dirs",
        "n_nodes", "n_pairs", "n_conditional", "horizon", "r", "epsilon",
        "h_threshold", "r_count",
    }
    for key, val in cfg.items():
        if key in numeric_pos and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"{subcommand}.{key} must be positive, got {val!r}")
    if "amplitude" in cfg and (not isinstance(cfg["amplitude"], (int, float)) or cfg["amplitude"] < 0):
        raise ConfigError("amplitude must be a nonnegative number")
    if cfg.get("stencil") not in (None, 8, 16, 32):
        raise ConfigError("stencil must be 8, 16 or 32")


def _grid(cfg):
    return GridSpec(float(cfg["extent"]), int(cfg["n"]))


def _model(cfg):
    return CovarianceModel(float(cfg["amplitude"]))


# ---------------------------------------------------------------------------
# subcommand bodies: return (records, acceptance_ok)


def run_sample(cfg, outdir):
    sample = sample_field(_model(cfg), _grid(cfg), cfg["seed"])
    save_field(sample, outdir / "field.bin")
    return [field_metadata(sample)], True


def run_geodesic(cfg, outdir):
    field = _field_or_flat(cfg)
    ang = float(cfg["angle"])
    path = integrate(
        field,
        UnitTangentState((0.0, 0.0), (math.cos(ang), math.sin(ang))),
        (-float(cfg["t_back"]), float(cfg["t_forward"])),
        float(cfg["h"]),
    )
    path.to_csv(outdir / "path.csv")
    rec = {
        "record": "geodesic",
        "t_min": path.t_min,
        "t_max": path.t_max,
        "endpoint": [float(v) for v in path.xs[-1]],
        "max_radius": float(path.radii().max()),
    }
    return [rec], True


def run_distance(cfg, outdir):
    report = shape_constant(
        _model(cfg),
        [float(r) for r in cfg["radii"]],
        int(cfg["n_samples"]),
        cfg["seed"],
        grid=_grid(cfg),
        n_dirs=int(cfg["n_dirs"]),
        stencil=int(cfg["stencil"]),
        workers=int(cfg["threads"]),
    )
    rows = [("r", "mu", "ci95")]
    for r in report["radii"]:
        est = report["estimates"][str(r)]
        rows.append((r, est["mu"], est["ci95"]))
    write_csv(outdir / "shape.csv", rows)
    return [report], True


def run_pov_verify(cfg, outdir):
    records = verify_change_of_variables_multi(
        _model(cfg),
        list(cfg["functionals"]),
        float(cfg["t"]),
        int(cfg["n_samples"]),
        cfg["seed"],
        grid=_grid(cfg),
        h_step=float(cfg["h"]),
        workers=int(cfg["threads"]),
    )
    return records, all(r["passed"] for r in records)


def run_history(cfg, outdir):
    field = _field_or_flat(cfg)
    atoms = historical_exit_times(
        field, float(cfg["r"]), float(cfg["t_max"]), float(cfg["resolution"]),
        h_step=float(cfg["h"]),
    )
    return [{
        "record": "history",
        "r": cfg["r"],
        "t_max": cfg["t_max"],
        "resolution": cfg["resolution"],
        "atoms": atoms,
    }], True


def run_frontier(cfg, outdir):
    field = _field_or_flat(cfg)
    ang = float(cfg["angle"])
    radii = np.linspace(float(cfg["r_min"]), float(cfg["r_max"]), int(cfg["r_count"]))
    report = frontier_scan(
        field, (math.cos(ang), math.sin(ang)), radii,
        float(cfg["theta"]), float(cfg["h_threshold"]), h_step=float(cfg["h"]),
    )
    write_csv(outdir / "frontier.csv", report.csv_rows())
    return [{
        "record": "frontier",
        "theta": report.theta,
        "h": report.h_threshold,
        "density": report.density,
        "r_k": report.r_k,
    }], True


def _conjugate_worker(seed_seq, cfg):
    model = _model(cfg)
    grid = _grid(cfg)
    horizon = float(cfg["horizon"])
    if cfg.get("flat"):
        field = FlatMetric()
        dmap = distance_map(field, (0.0, 0.0), grid=grid, stencil=int(cfg["stencil"]))
    else:
        field = GridMetricField.from_sample(sample_field(model, grid, seed_seq))
        dmap = distance_map(field, (0.0, 0.0), stencil=int(cfg["stencil"]))
    try:
        path = integrate(field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, horizon),
                         float(cfg["h"]))
    except RoughPlaneError:
        return None
    ts = t_star(dmap, path, horizon - 2 * float(cfg["h"]))
    conj = first_conjugate_point(field, path, horizon - 2 * float(cfg["h"]))
    return {
        "record": "conjugate_sample",
        "t_star": ts.time,
        "at_horizon": ts.at_horizon,
        "conjugate_time": conj,
    }


def run_conjugate_scan(cfg, outdir):
    import functools

    seeds = derive_seeds(cfg["seed"], int(cfg["n_samples"]))
    job = functools.partial(_conjugate_worker, cfg=cfg)
    results = [r for r in parallel_map(job, seeds, int(cfg["threads"])) if r is not None]
    tstars = np.array([r["t_star"] for r in results])
    horizon_flags = np.array([r["at_horizon"] for r in results])
    ts_grid = np.linspace(0.0, float(cfg["horizon"]), 60)
    survival = [(float(np.mean(tstars >= t))) for t in ts_grid]
    rows = [("t", "survival")] + [(f"{t:.6g}", f"{s:.6g}") for t, s in zip(ts_grid, survival)]
    write_csv(outdir / "survival.csv", rows)
    # log-survival slope over the uncensored range
    mask = (np.array(survival) > 0) & (ts_grid > 0)
    slope, slope_ci = _slope_with_ci(ts_grid[mask], np.log(np.array(survival)[mask]))
    summary = {
        "record": "conjugate_scan",
        "n": len(results),
        "at_horizon_fraction": float(horizon_flags.mean()) if len(results) else None,
        "log_survival_slope": slope,
        "slope_ci95": slope_ci,
        "conjugate_found_fraction": float(
            np.mean([r["conjugate_time"] is not None for r in results])
        ) if results else None,
    }
    return results + [summary], True


def _slope_with_ci(x, y):
    if len(x) < 3:
        return None, None
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(np.sum((y - fitted) ** 2)) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), float(1.96 * math.sqrt(cov[1, 1]))


def _bump_worker(seed_seq, cfg):
    model = _model(cfg)
    grid = _grid(cfg)
    field = GridMetricField.from_sample(sample_field(model, grid, seed_seq))
    z0 = z_point(field, (0.0, 0.0))
    rec = {"record": "bump_sample", "z0": z0}
    if z0 > 2.0 * float(cfg["h_threshold"]):
        rec["admissible"] = False
        return rec
    rec["admissible"] = True
    try:
        bmp = build_bump(field, theta=float(cfg["theta"]),
                         h_threshold=float(cfg["h_threshold"]),
                         epsilon=float(cfg["epsilon"]))
        sol, conj, jtau = bump_jacobi_check(bmp, h_step=bmp.spec.tau / 800.0)
        tau = bmp.spec.tau
        rec.update({
            "built": True,
            "tau": tau,
            "k0": bmp.spec.k0,
            "conjugate_err": abs(conj - 0.75 * tau) if conj else None,
            "j_tau": jtau,
            "curvature_origin_err": abs(
                gauss_curvature(bmp, np.zeros(2)) - gauss_curvature(field, np.zeros(2))
            ),
        })
    except RoughPlaneError as exc:
        rec.update({"built": False, "reason": type(exc).__name__})
    return rec


def run_bump_verify(cfg, outdir):
    import functools

    seeds = derive_seeds(cfg["seed"], int(cfg["n_samples"]))
    job = functools.partial(_bump_worker, cfg=cfg)
    records = parallel_map(job, seeds, int(cfg["threads"]))
    built = [r for r in records if r.get("built")]
    ok = all(
        r["conjugate_err"] is not None and r["conjugate_err"] < 1e-3 and r["j_tau"] < 0
        for r in built
    ) and built
    summary = {
        "record": "bump_verify",
        "n_samples": len(records),
        "admissible": sum(1 for r in records if r["admissible"]),
        "built": len(built),
        "all_conjugate_ok": bool(ok),
    }
    return records + [summary], bool(ok)


def run_condition_verify(cfg, outdir):
    model = _model(cfg)
    nodes = square_grid_nodes(float(cfg["extent"]), int(cfg["n_nodes"]))
    dist = grid_gaussian(model, nodes)
    rng = np.random.default_rng(cfg["seed"])
    records = []
    ok = True

    d_ids = rng.choice(len(nodes), size=max(3, len(nodes) // 8), replace=False)
    observed = rng.normal(size=(len(d_ids), 3))
    res = condition(dist, d_ids, observed)
    identity_err = float(
        np.abs(res.mean[dist.component_indices(d_ids)] - observed.ravel()).max()
    )
    rows_err = float(np.abs(res.covariance[dist.component_indices(d_ids), :]).max())
    records.append({
        "record": "condition_identity",
        "identity_err": identity_err,
        "rows_on_D_max": rows_err,
        "passed": bool(identity_err < 1e-8 and rows_err < 1e-10),
    })
    ok = ok and records[-1]["passed"]

    passes = 0
    for _ in range(int(cfg["n_pairs"])):
        outer = rng.choice(len(nodes), size=8, replace=False)
        inner = outer[: rng.integers(1, 7)]
        rep = monotonicity_check(dist, inner, outer)
        passes += rep["passed"]
    records.append({
        "record": "condition_monotonicity",
        "pairs": int(cfg["n_pairs"]),
        "passed_pairs": passes,
        "passed": bool(passes == int(cfg["n_pairs"])),
    })
    ok = ok and records[-1]["passed"]

    draws = conditional_sample(res.mean, res.covariance, cfg["seed"], int(cfg["n_samples"]))
    emp = np.cov(draws.T, ddof=1)
    free = np.setdiff1d(np.arange(dist.dim), dist.component_indices(d_ids))
    sub = np.ix_(free, free)
    sd = np.sqrt(np.clip(np.diag(res.covariance)[free], 0.0, None))
    se = (np.outer(sd, sd) + np.abs(res.covariance[sub])) / math.sqrt(int(cfg["n_samples"]))
    dev = np.abs(emp[sub] - res.covariance[sub]) / np.maximum(se, 1e-12)
    records.append({
        "record": "condition_sampling",
        "max_dev_in_se": float(dev.max()),
        "passed": bool(dev.max() < 4.0),
    })
    ok = ok and records[-1]["passed"]

    demo = uniform_probability_demo(
        model, lens_node_family(), h_threshold=4.0 * math.sqrt(max(model.c0, 1e-9)),
        n_conditional=int(cfg["n_conditional"]), seed=cfg["seed"],
    )
    records.append(demo)
    ok = ok and demo["positive"]
    return records, ok


def _chi_worker(seed_seq, cfg):
    model = _model(cfg)
    grid = _grid(cfg)
    if cfg.get("flat"):
        field = FlatMetric()
        dmap = distance_map(field, (0.0, 0.0), grid=grid, stencil=16)
    else:
        field = GridMetricField.from_sample(sample_field(model, grid, seed_seq))
        dmap = distance_map(field, (0.0, 0.0), stencil=16)
    out = {}
    for r in cfg["radii"]:
        vals = []
        for k in range(int(cfg["n_dirs"])):
            th = 2.0 * math.pi * k / int(cfg["n_dirs"])
            target = r * np.array([math.cos(th), math.sin(th)])
            try:
                vals.append(dmap.value_at(target))
            except RoughPlaneError:
                pass
        out[float(r)] = float(np.mean(vals))
    return out


def run_chi(cfg, outdir):
    import functools

    seeds = derive_seeds(cfg["seed"], int(cfg["n_samples"]))
    job = functools.partial(_chi_worker, cfg=cfg)
    results = parallel_map(job, seeds, int(cfg["threads"]))
    radii = [float(r) for r in cfg["radii"]]
    stds = []
    for r in radii:
        vals = np.array([res[r] for res in results])
        stds.append(float(vals.std(ddof=1)))
    rows = [("r", "std_d")] + [(f"{r:.6g}", f"{s:.6g}") for r, s in zip(radii, stds)]
    write_csv(outdir / "chi.csv", rows)
    if all(s > 0 for s in stds):
        slope, ci = _slope_with_ci(np.log(np.array(radii)), np.log(np.array(stds)))
    else:
        slope, ci = None, None
    summary = {
        "record": "chi",
        "radii": radii,
        "std": stds,
        "slope": slope,
        "slope_ci95": ci,
        "conjectured_chi": 1.0 / 3.0,
        "note": "slope reported against the conjectured value, never asserted",
    }
    return [summary], True


def _field_or_flat(cfg):
    model = _model(cfg)
    if model.amplitude == 0.0:
        return FlatMetric()
    return GridMetricField.from_sample(sample_field(model, _grid(cfg), cfg["seed"]))


_RUNNERS = {
    "sample": run_sample,
    "geodesic": run_geodesic,
    "distance": run_distance,
    "pov-verify": run_pov_verify,
    "history": run_history,
    "frontier": run_frontier,
    "conjugate-scan": run_conjugate_scan,
    "bump-verify": run_bump_verify,
    "condition-verify": run_condition_verify,
    "chi": run_chi,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="roughplane",
                                     description="random Riemannian geometry laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--format", type=str, default=None, choices=("ndjson", "csv"))
        for key, val in _DEFAULTS[name].items():
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                p.add_argument(flag, action="store_true", default=None, dest=key)
            elif isinstance(val, list):
                p.add_argument(flag, type=float, nargs="+", default=None, dest=key)
            elif isinstance(val, int):
                p.add_argument(flag, type=int, default=None, dest=key)
            elif isinstance(val, float):
                p.add_argument(flag, type=float, default=None, dest=key)
            else:
                p.add_argument(flag, type=str, default=None, dest=key)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    name = args.subcommand
    try:
        cfg = _resolve(args, name)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        records, ok = _RUNNERS[name](cfg, outdir)
    except RoughPlaneError as exc:
        write_ndjson(
            outdir / f"{name}.ndjson",
            [{"record": "error", "type": type(exc).__name__, "message": str(exc)}],
            header=manifest(cfg, cfg["seed"], __version__),
        )
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    head = manifest(cfg, cfg["seed"], __version__, wall_time=round(time.time() - started, 3))
    write_ndjson(outdir / f"{name}.ndjson", records, header=head)
    if cfg["format"] == "csv":
        rows = [("record_json",)] + [(json.dumps(r, sort_keys=True),) for r in records]
        write_csv(outdir / f"{name}.records.csv", rows)
    return EXIT_OK if ok else EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
