"""Command-line front end.

Subcommands delegate to the library; ``run`` executes the pipelines declared
in a TOML configuration file and writes a self-describing run directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import tomli

from . import __version__
from .certificate import DEFAULT_ETAS, bound_integral_I, contraction_certificate
from .container import (load_dataset, load_potential, save_dataset, save_field, save_potential)
from .core_types import (GridSpec, PotentialGrid, WaveParams, fibonacci_sphere, grid_l2_norm,
                         make_bump_potential, make_gaussian_potential, make_radial_well, unit_vector)
from .datatools import add_noise
from .errors import BackscatterError, ConfigError
from .far_field import amplitudes, backscattering_dataset, fixed_incident_dataset, write_csv
from .forward_solver import solve_scattering
from .inversion import born_inversion, fixed_point_refine, uniqueness_experiment

logger = logging.getLogger("backscatter")

PIPELINES = ("forward", "dataset", "certificate", "invert", "uniqueness", "noise-study")
POTENTIAL_TYPES = ("bump", "gaussian", "well", "zero")


# -- potentials ------------------------------------------------------------------

def build_potential(spec: dict, grid: GridSpec, where: str = "potential") -> PotentialGrid:
    """A potential from a table such as ``{type = "bump", center = [...], radius = 1, amplitude = 0.1}``."""
    kind = spec.get("type")
    if kind not in POTENTIAL_TYPES:
        raise ConfigError(f"{where}.type", f"must be one of {POTENTIAL_TYPES}, got {kind!r}")
    center = _vector(spec.get("center", [0.0, 0.0, 0.0]), f"{where}.center")
    l = int(spec.get("smoothness_l", 3 if kind in ("bump", "gaussian") else 0))
    try:
        if kind == "zero":
            return PotentialGrid.on(grid, np.zeros(grid.shape), 3)
        if kind == "bump":
            return make_bump_potential(center, _num(spec, "radius", where),
                                       _num(spec, "amplitude", where), grid, l)
        if kind == "gaussian":
            return make_gaussian_potential(center, _num(spec, "width", where),
                                           _num(spec, "amplitude", where), grid, l)
        radii = spec.get("radii", [spec.get("radius")])
        values = spec.get("values", [-spec["depth"]] if "depth" in spec else None)
        if values is None or None in radii:
            raise ConfigError(where, "a well needs radius/depth or radii/values")
        return make_radial_well(radii, values, grid, center, l)
    except (ValueError, BackscatterError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where, str(exc)) from exc


def _num(spec, key, where):
    if key not in spec:
        raise ConfigError(f"{where}.{key}", "missing")
    val = spec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}", f"must be a number, got {val!r}")
    return float(val)


def _vector(val, where, unit=False):
    try:
        v = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, f"must be a 3-vector, got {val!r}") from None
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ConfigError(where, f"must be a 3-vector, got {val!r}")
    if unit and abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ConfigError(where, f"must be a unit vector (|v| = {np.linalg.norm(v):.6g})")
    return tuple(v)


def parse_potential_arg(text: str, grid: GridSpec) -> PotentialGrid:
    """``bump:cx,cy,cz,radius,amp`` | ``gaussian:cx,cy,cz,width,amp`` | ``well:depth,radius`` | ``zero`` | a container path."""
    if text == "zero":
        return build_potential({"type": "zero"}, grid)
    kind, _, rest = text.partition(":")
    if kind in ("bump", "gaussian") and rest:
        p = [float(x) for x in rest.split(",")]
        if len(p) != 5:
            raise ConfigError("potential", f"{kind} needs cx,cy,cz,size,amplitude")
        key = "radius" if kind == "bump" else "width"
        return build_potential({"type": kind, "center": p[:3], key: p[3], "amplitude": p[4]}, grid)
    if kind == "well" and rest:
        depth, radius = (float(x) for x in rest.split(","))
        return build_potential({"type": "well", "depth": depth, "radius": radius}, grid)
    path = Path(text)
    if path.is_dir():
        q = load_potential(path)
        if q.grid != grid:
            raise ConfigError("potential", f"{path} lives on {q.grid}, not {grid}")
        return q
    raise ConfigError("potential", f"cannot interpret {text!r}")


def _ks(k_max, n_k):
    return k_max * np.arange(1, n_k + 1) / n_k


# -- pipelines ---------------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def pipeline_forward(cfg, grid, pots, out: Path, threads, tol):
    q = pots[cfg["potential"]]
    wave = WaveParams(cfg["k"], cfg.get("eta", 0.0), cfg.get("alpha", (0.0, 0.0, 1.0)))
    sol = solve_scattering(q, wave, tol=tol)
    betas = fibonacci_sphere(cfg.get("directions", 16))
    amps = amplitudes(q, sol, betas)
    save_field(sol.v, grid, out / "forward_v", "v", k=wave.k, eta=wave.eta, alpha=list(wave.alpha),
               residual=sol.residual, iterations=sol.iterations)
    _write_rows(out / "forward_amplitudes.csv", ("bx", "by", "bz", "reA", "imA"),
                [(*b, a.real, a.imag) for b, a in zip(betas, amps)])
    return {"iterations": sol.iterations, "residual": sol.residual}


def _make_dataset(cfg, q, threads, tol):
    betas = fibonacci_sphere(cfg.get("directions", 200))
    ks = _ks(cfg.get("k_max", 4.0), cfg.get("n_k", 16))
    eta = cfg.get("eta", 0.0)
    if cfg.get("kind", "backscatter") == "backscatter":
        return backscattering_dataset(q, betas, ks, eta, tol, threads=threads)
    return fixed_incident_dataset(q, cfg.get("alpha0", (0.0, 0.0, 1.0)), betas, ks, eta, tol,
                                  threads=threads)


def pipeline_dataset(cfg, grid, pots, out: Path, threads, tol):
    ds = _make_dataset(cfg, pots[cfg["potential"]], threads, tol)
    save_dataset(ds, out / "dataset")
    write_csv(ds, out / "dataset.csv")
    return {"records": len(ds), "invalid": int(np.sum(~ds.valid))}


def pipeline_certificate(cfg, grid, pots, out: Path, threads, tol):
    rep = contraction_certificate(pots[cfg["q1"]], pots[cfg["q2"]], cfg.get("k", 1.0),
                                  cfg.get("etas", DEFAULT_ETAS), cfg.get("beta", (0.0, 0.0, 1.0)),
                                  tol=min(tol, 1e-10))
    (out / "certificate.json").write_text(rep.to_json())
    (out / "certificate.csv").write_text(rep.to_csv())
    return {"verdict": rep.verdict, "flags": rep.flags}


def pipeline_invert(cfg, grid, pots, out: Path, threads, tol):
    q = pots[cfg["potential"]]
    ds = _make_dataset({**cfg, "kind": "backscatter"}, q, threads, tol)
    born = born_inversion(ds, grid, cfg.get("support_radius"))
    its = fixed_point_refine(ds, born, cfg.get("refine_iterations", 0), tol=tol, threads=threads,
                             support_radius=cfg.get("support_radius"))
    for i, it in enumerate(its):
        save_potential(it, out / f"iterate_{i}")
    err = [grid_l2_norm(it.values - q.values, grid) / max(grid_l2_norm(q.values, grid), 1e-300)
           for it in its]
    _write_rows(out / "refine_history.csv", ("iteration", "misfit", "l2_error"),
                [(i, float(m), float(e)) for i, (m, e) in enumerate(zip(its.misfits, err))])
    return {"born_l2_error": err[0], "final_l2_error": err[-1]}


def pipeline_uniqueness(cfg, grid, pots, out: Path, threads, tol):
    rep = uniqueness_experiment(pots[cfg["q1"]], pots[cfg["q2"]],
                                fibonacci_sphere(cfg.get("directions", 20)),
                                _ks(cfg.get("k_max", 2.0), cfg.get("n_k", 4)), cfg.get("eta", 0.0),
                                tol, cfg.get("kind", "backscatter"), threads=threads)
    (out / "uniqueness.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    return rep


def pipeline_noise_study(cfg, grid, pots, out: Path, threads, tol):
    q = pots[cfg["potential"]]
    ds = _make_dataset({**cfg, "kind": "backscatter"}, q, threads, tol)
    rows = []
    for delta in cfg.get("deltas", [1e-3]):
        noisy = add_noise(ds, delta, cfg.get("seed", 0))
        rec = born_inversion(noisy, grid, cfg.get("support_radius"))
        err = grid_l2_norm(rec.values - q.values, grid) / grid_l2_norm(q.values, grid)
        dev = float(np.max(np.abs(noisy.amplitudes - ds.amplitudes)))
        rows.append((float(delta), dev, float(err)))
    _write_rows(out / "noise_study.csv", ("delta", "sup_deviation", "l2_error"), rows)
    return {"rows": len(rows)}


RUNNERS = {"forward": pipeline_forward, "dataset": pipeline_dataset,
           "certificate": pipeline_certificate, "invert": pipeline_invert,
           "uniqueness": pipeline_uniqueness, "noise-study": pipeline_noise_study}

_SECTION_SCHEMA = {
    "forward": {"potential": str, "k": float, "eta": float, "alpha": "unit", "directions": int},
    "dataset": {"potential": str, "kind": str, "directions": int, "k_max": float, "n_k": int,
                "eta": float, "alpha0": "unit"},
    "certificate": {"q1": str, "q2": str, "k": float, "etas": list, "beta": "unit"},
    "invert": {"potential": str, "directions": int, "k_max": float, "n_k": int,
               "support_radius": float, "refine_iterations": int},
    "uniqueness": {"q1": str, "q2": str, "directions": int, "k_max": float, "n_k": int,
                   "eta": float, "kind": str},
    "noise-study": {"potential": str, "directions": int, "k_max": float, "n_k": int,
                    "support_radius": float, "deltas": list, "seed": int},
}
_REQUIRED = {"forward": ("potential", "k"), "dataset": ("potential",), "certificate": ("q1", "q2"),
             "invert": ("potential",), "uniqueness": ("q1", "q2"), "noise-study": ("potential",)}


def validate_config(cfg: dict) -> dict:
    """Check a parsed configuration; raises :class:`ConfigError` naming the field."""
    run = cfg.get("run", {})
    pipelines = run.get("pipelines", [])
    if not isinstance(pipelines, list):
        raise ConfigError("run.pipelines", "must be a list")
    for p in pipelines:
        if p not in PIPELINES:
            raise ConfigError("run.pipelines", f"unknown pipeline {p!r}; choose from {PIPELINES}")
    for key, kind in (("seed", int), ("threads", int)):
        if key in run and (isinstance(run[key], bool) or not isinstance(run[key], kind)):
            raise ConfigError(f"run.{key}", "must be an integer")
    if "tol" in run and not (isinstance(run["tol"], float) and 0 < run["tol"] <= 1e-2):
        raise ConfigError("run.tol", "must be a float in (0, 1e-2]")
    if pipelines:
        g = cfg.get("grid")
        if not isinstance(g, dict):
            raise ConfigError("grid", "missing [grid] table")
        for key in ("half_width", "n"):
            if key not in g:
                raise ConfigError(f"grid.{key}", "missing")
        try:
            GridSpec(float(g["half_width"]), int(g["n"]))
        except BackscatterError as exc:
            raise ConfigError("grid", str(exc)) from exc
    names = set()
    for i, spec in enumerate(cfg.get("potentials", [])):
        name = spec.get("name")
        if not isinstance(name, str):
            raise ConfigError(f"potentials[{i}].name", "missing or not a string")
        if name in names:
            raise ConfigError(f"potentials[{i}].name", f"duplicate name {name!r}")
        names.add(name)
    for p in pipelines:
        section = cfg.get(p, {})
        for key in _REQUIRED[p]:
            if key not in section:
                raise ConfigError(f"{p}.{key}", "missing")
        for key, val in section.items():
            kind = _SECTION_SCHEMA[p].get(key)
            field = f"{p}.{key}"
            if kind is None:
                raise ConfigError(field, "unknown key")
            if kind == "unit":
                _vector(val, field, unit=True)
            elif kind is str:
                if not isinstance(val, str):
                    raise ConfigError(field, "must be a string")
                if key in ("potential", "q1", "q2") and val not in names:
                    raise ConfigError(field, f"no potential named {val!r}")
            elif kind is float:
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(field, "must be a number")
            elif kind is int:
                if isinstance(val, bool) or not isinstance(val, int) or val < 0:
                    raise ConfigError(field, "must be a non-negative integer")
            elif kind is list and not isinstance(val, list):
                raise ConfigError(field, "must be a list")
    return cfg


def load_config(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        cfg = tomli.loads(raw.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        raise ConfigError(str(path), str(exc)) from exc
    return validate_config(cfg), raw


def run(config_path, out_root=None, threads=None) -> tuple[int, Path]:
    """Execute a configuration; returns ``(exit_status, run_directory)``.

    Pipelines are independent: a failing pipeline is recorded in the
    manifest, the others still run, and the exit status is non-zero.
    """
    cfg, raw = load_config(config_path)
    run_cfg = cfg.get("run", {})
    digest = hashlib.sha256(raw).hexdigest()
    root = Path(out_root or run_cfg.get("out", "runs"))
    out = root / f"{run_cfg.get('name', Path(config_path).stem)}-{digest[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_bytes(raw)
    threads = threads or run_cfg.get("threads", 1)
    tol = run_cfg.get("tol", 1e-8)
    manifest = {
        "config": str(config_path), "config_sha256": digest, "seed": run_cfg.get("seed", 0),
        "threads": threads, "tol": tol,
        "versions": {"backscatter": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "pipelines": {},
    }
    status = 0
    pipelines = run_cfg.get("pipelines", [])
    if pipelines:
        g = cfg["grid"]
        grid = GridSpec(float(g["half_width"]), int(g["n"]))
        pots = {s["name"]: build_potential(s, grid, f"potentials[{i}]")
                for i, s in enumerate(cfg.get("potentials", []))}
    for name in pipelines:
        t0 = time.perf_counter()
        entry = {}
        try:
            entry["result"] = RUNNERS[name](cfg.get(name, {}), grid, pots, out, threads, tol)
            entry["status"] = "ok"
        except (BackscatterError, ValueError, ArithmeticError) as exc:
            logger.exception("pipeline %s failed", name)
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            status = 1
        entry["seconds"] = round(time.perf_counter() - t0, 3)
        manifest["pipelines"][name] = entry
    manifest["outputs"] = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return status, out


# -- argument parsing ----------------------------------------------------------------

def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _grid(args):
    return GridSpec(args.a, args.n)


def _common(p):
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for independent records")
    p.add_argument("--tol", type=float, default=1e-8, help="relative residual of the solver")


def _grid_args(p, a=3.0, n=32):
    p.add_argument("--a", type=float, default=a, help="box half-width")
    p.add_argument("--n", type=int, default=n, help="grid points per axis")


def cmd_forward(args):
    grid = _grid(args)
    q = parse_potential_arg(args.potential, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    res = pipeline_forward({"potential": "q", "k": args.k, "eta": args.eta,
                            "alpha": tuple(unit_vector(_floats(args.alpha))),
                            "directions": args.directions}, grid, {"q": q}, args.out,
                           args.threads, args.tol)
    print(json.dumps(res))
    return 0


def cmd_dataset(args):
    grid = _grid(args)
    q = parse_potential_arg(args.potential, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = {"kind": args.kind, "directions": args.directions, "k_max": args.k_max, "n_k": args.n_k,
           "eta": args.eta, "alpha0": tuple(unit_vector(_floats(args.alpha0)))}
    ds = _make_dataset(cfg, q, args.threads, args.tol)
    save_dataset(ds, args.out)
    write_csv(ds, args.out / "dataset.csv")
    print(json.dumps({"records": len(ds), "invalid": int(np.sum(~ds.valid))}))
    return 0 if np.all(ds.valid) else 1


def cmd_certify(args):
    grid = _grid(args)
    q1 = parse_potential_arg(args.q1, grid)
    q2 = parse_potential_arg(args.q2, grid)
    rep = contraction_certificate(q1, q2, args.k, _floats(args.etas), _floats(args.beta),
                                  tol=min(args.tol, 1e-10))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "certificate.json").write_text(rep.to_json())
    (args.out / "certificate.csv").write_text(rep.to_csv())
    print(rep.verdict)
    return 0 if rep.certified else 1


def cmd_invert_born(args):
    ds = load_dataset(args.data)
    grid = _grid(args)
    rec = born_inversion(ds, grid, args.support_radius)
    save_potential(rec, args.out)
    result = {"grid": [grid.half_width, grid.n]}
    if args.truth:
        q = parse_potential_arg(args.truth, grid)
        result["l2_error"] = grid_l2_norm(rec.values - q.values, grid) / grid_l2_norm(q.values, grid)
    print(json.dumps(result))
    return 0


def cmd_invert_refine(args):
    ds = load_dataset(args.data)
    q0 = load_potential(args.init)
    its = fixed_point_refine(ds, q0, args.iters, tol=args.tol, threads=args.threads,
                             support_radius=args.support_radius)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, it in enumerate(its):
        save_potential(it, args.out / f"iterate_{i}")
    _write_rows(args.out / "history.csv", ("iteration", "misfit"), enumerate(its.misfits))
    print(json.dumps({"misfits": its.misfits}))
    return 0


def cmd_uniqueness(args):
    grid = _grid(args)
    rep = uniqueness_experiment(parse_potential_arg(args.q1, grid), parse_potential_arg(args.q2, grid),
                                fibonacci_sphere(args.directions), _ks(args.k_max, args.n_k),
                                args.eta, args.tol, args.kind, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "uniqueness.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    print(json.dumps(rep))
    return 0


def cmd_perturb(args):
    noisy = add_noise(load_dataset(args.data), args.delta, args.seed)
    save_dataset(noisy, args.out)
    print(json.dumps({"records": len(noisy), "delta": args.delta, "seed": args.seed}))
    return 0


def cmd_bound_integral(args):
    print(repr(bound_integral_I(args.k, args.eta, args.l)))
    return 0


def cmd_run(args):
    status, out = run(args.config, args.out, args.threads)
    print(out)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backscatter",
                                     description="Backscattering forward solver, certificate and inversion")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="solve one scattering problem")
    _common(p)
    _grid_args(p)
    p.add_argument("--potential", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--alpha", default="0,0,1")
    p.add_argument("--directions", type=int, default=16)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("dataset", help="generate a far-field dataset")
    _common(p)
    _grid_args(p)
    p.add_argument("--potential", required=True)
    p.add_argument("--kind", choices=("backscatter", "fixed_incident"), default="backscatter")
    p.add_argument("--directions", type=int, default=200)
    p.add_argument("--k-max", type=float, default=4.0)
    p.add_argument("--n-k", type=int, default=16)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--alpha0", default="0,0,1")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("certify", help="contraction certificate; exit 0 iff certified")
    _common(p)
    _grid_args(p)
    p.add_argument("--q1", required=True)
    p.add_argument("--q2", default="zero")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--etas", default=",".join(str(e) for e in DEFAULT_ETAS))
    p.add_argument("--beta", default="0,0,1")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("invert-born", help="Born reconstruction from a backscatter dataset")
    _common(p)
    _grid_args(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--support-radius", type=float)
    p.add_argument("--truth", help="potential to report the relative L2 error against")
    p.set_defaults(func=cmd_invert_born)

    p = sub.add_parser("invert-refine", help="fixed-point refinement of a reconstruction")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--init", type=Path, required=True)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--support-radius", type=float)
    p.set_defaults(func=cmd_invert_refine)

    p = sub.add_parser("uniqueness-exp", help="data discrepancy of two potentials")
    _common(p)
    _grid_args(p)
    p.add_argument("--q1", required=True)
    p.add_argument("--q2", required=True)
    p.add_argument("--directions", type=int, default=20)
    p.add_argument("--k-max", type=float, default=2.0)
    p.add_argument("--n-k", type=int, default=4)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--kind", choices=("backscatter", "fixed_incident"), default="backscatter")
    p.set_defaults(func=cmd_uniqueness)

    p = sub.add_parser("perturb", help="add bounded noise to a dataset")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("bound-integral", help="print the majorant integral I(k, eta, l)")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--l", type=float, default=3.0)
    p.set_defaults(func=cmd_bound_integral)

    p = sub.add_parser("run", help="execute the pipelines of a TOML configuration")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, help="parent directory for the run directory")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BackscatterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
