"""Command-line front end: check suites, experiments and report bundles.

Exit codes: 0 all pass, 1 any failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import suites as S
from .grid_core import MIN_POINTS_PER_PERIOD, PROFILES, make_grid, named_coefficient
from .homogenization import (
    block_convergence_rate,
    cluster_eigenvalues,
    eigen_convergence_report,
    homo_operator_gap,
)
from .rate_lab import REGISTRY, SPEC_THETA_MIN, SPEC_TOLERANCE, BoundCertificate
from .spde_engine import EXPERIMENTS, epsilon_convergence_experiment

log = logging.getLogger("specbesov")

SCHEMA = "specbesov-report/1"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
EXPERIMENT_KINDS = (*EXPERIMENTS, "clusters", "rates")
UNIFORM_RATIO_MAX = 2.0

# config-file keys and their types; CLI flags override file values
_CONFIG_KEYS = {
    "profile": str, "N": int, "eps": str, "seed": int, "seeds": str, "delta": float, "T": float,
    "steps": int, "mc": int, "samples": int, "tol_scale": float, "cache_dir": str, "out": str, "j": int,
}


class UsageError(Exception):
    pass


def parse_eps(text: str) -> list[float]:
    """Comma list of fractions such as ``1/4,1/8``."""
    try:
        out = [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad --eps value {text!r}: {exc}") from exc
    if not out or any(e <= 0 for e in out):
        raise UsageError(f"--eps needs positive entries, got {text!r}")
    return out


def read_config(path: str) -> dict:
    """Plain ``key = value`` file with ``#`` comments."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + p.read_text())
    except configparser.Error as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    out = {}
    for k, v in cp["run"].items():
        if k not in _CONFIG_KEYS:
            raise UsageError(f"unknown config key {k!r}; known: {', '.join(_CONFIG_KEYS)}")
        try:
            out[k] = _CONFIG_KEYS[k](v)
        except ValueError as exc:
            raise UsageError(f"bad value for {k}: {v!r}") from exc
    return out


def _merged(args: argparse.Namespace) -> dict:
    vals = read_config(args.config) if getattr(args, "config", None) else {}
    for k in _CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    if "profile" in vals and vals["profile"] not in PROFILES:
        raise UsageError(f"unknown profile {vals['profile']!r}; choose from {', '.join(PROFILES)}")
    return vals


def run_config(vals: dict) -> S.RunConfig:
    cfg = S.RunConfig()
    for k in ("N", "seed", "delta", "T", "steps", "mc", "samples", "cache_dir", "tol_scale", "profile"):
        if k in vals:
            setattr(cfg, k, vals[k])
    if "eps" in vals:
        cfg.eps = parse_eps(vals["eps"])
    return cfg


def require_resolved(N: int, eps: list[float]) -> None:
    """Reject an eps sweep the grid cannot resolve before any work is done."""
    for e in eps:
        m = round(1.0 / e)
        if m > 1 and N < MIN_POINTS_PER_PERIOD * m:
            raise UsageError(f"--N {N} does not resolve eps=1/{m}: need N >= {MIN_POINTS_PER_PERIOD * m}")


def tolerances() -> dict:
    names = [n for n in dir(S) if n.isupper() and isinstance(getattr(S, n), float)]
    out = {n.lower(): getattr(S, n) for n in sorted(names)}
    out.update(spec_tolerance=SPEC_TOLERANCE, spec_theta_min=SPEC_THETA_MIN, uniform_ratio_max=UNIFORM_RATIO_MAX)
    return out


def provenance(command: list[str], cfg: S.RunConfig) -> dict:
    conf = asdict(cfg)
    blob = json.dumps(conf, sort_keys=True, default=str).encode()
    return {"version": __version__, "command": command, "config": conf,
            "config_hash": hashlib.sha256(blob).hexdigest()[:16], "seed": cfg.seed, "tolerances": tolerances()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_report(out: Path, stem: str, report: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.json"
    path.write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True))
    return path


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _failed(name: str, exc: Exception) -> BoundCertificate:
    return BoundCertificate(name, float("nan"), float("nan"), False, {}, {"error": f"{type(exc).__name__}: {exc}"})


def _print_certs(certs: list[BoundCertificate]) -> None:
    for c in certs:
        print(f"{'PASS' if c.verdict else 'FAIL'}  {c.name}  measured={c.measured:.4g}  bound={c.bound:.4g}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_check(args: argparse.Namespace) -> int:
    target = args.target
    if target != "all" and target not in S.SUITES and target not in REGISTRY:
        print(f"unknown check {target!r}", file=sys.stderr)
        print("suites: " + ", ".join(["all", *S.SUITES]), file=sys.stderr)
        print("registry: " + ", ".join(REGISTRY), file=sys.stderr)
        return EXIT_USAGE
    cfg = run_config(_merged(args))
    cache = S.DecCache(cfg.cache_dir)
    if target in REGISTRY:
        jobs = {target: lambda: S.suite_registry(cfg, cache, [target])}
    else:
        names = list(S.SUITES) if target == "all" else [target]
        jobs = {n: (lambda n=n: S.SUITES[n](cfg, cache)) for n in names}
    results: dict[str, list[BoundCertificate]] = {}
    for name, job in jobs.items():
        try:
            results[name] = job()
        except Exception as exc:  # one broken suite must not hide the others
            log.error("suite %s raised %s", name, exc)
            results[name] = [_failed(name, exc)]
        _print_certs(results[name])
    certs = [c for cs in results.values() for c in cs]
    n_fail = sum(not c.verdict for c in certs)
    report = {"schema": SCHEMA, "kind": "check", "target": target,
              "provenance": provenance(sys.argv[1:] if args.argv is None else args.argv, cfg),
              "suites": {n: [c.as_dict() for c in cs] for n, cs in results.items()},
              "summary": {"total": len(certs), "passed": len(certs) - n_fail, "failed": n_fail}}
    path = write_report(Path(args.out), f"check_{target}", report)
    print(f"{len(certs) - n_fail}/{len(certs)} passed; report {path}")
    return EXIT_PASS if n_fail == 0 else EXIT_FAIL


def _experiment_sde(kind: str, vals: dict, cfg: S.RunConfig, out: Path, argv) -> int:
    eps = cfg.eps_list([0.25, 0.125, 0.0625])
    seeds = [int(s) for s in str(vals.get("seeds", cfg.seed if "seed" in vals else 7)).split(",")]
    N = cfg.n(256)
    require_resolved(N, eps)
    A = named_coefficient(make_grid(1, N), cfg.profile)
    cache = S.DecCache(cfg.cache_dir)
    rep = epsilon_convergence_experiment(A, eps, cfg.delta, seeds=seeds, which=kind, T=cfg.T, M=cfg.steps,
                                         mc_samples=cfg.mc, decs=S._decs_for(cfg, cache, A, eps))
    sol_fit = rep.fits.get("solution_gap")
    checks = {
        "solution_gap_decreasing": rep.strictly_decreasing("solution_gap"),
        "solution_rate_positive": bool(sol_fit is not None and sol_fit.slope > 0),
        "uniform_bound": rep.uniform_ratio <= UNIFORM_RATIO_MAX,
        "flux_gap_decreasing": rep.strictly_decreasing("flux_gap"),
        "complete": not rep.partial,
    }
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'}  {kind}.{k}")
    report = {"schema": SCHEMA, "kind": "experiment", "experiment": kind,
              "provenance": provenance(argv, cfg), "result": rep.as_dict(), "checks": checks}
    write_report(out, f"experiment_{kind}", report)
    if not rep.partial:
        write_csv(out / f"{kind}_gaps.csv", ["eps", "solution_gap", "sharp_gap", "flux_gap", "enhancement_gap", "x_norm"],
                  zip(rep.eps, rep.solution_gap, rep.sharp_gap, rep.flux_gap, rep.enhancement_gap, rep.x_norms))
    return EXIT_PASS if all(checks.values()) else EXIT_FAIL


def _experiment_clusters(vals: dict, cfg: S.RunConfig, out: Path, argv) -> int:
    j = int(vals.get("j", 3))
    eps_given = cfg.eps
    if eps_given is not None and len(eps_given) != 1:
        raise UsageError("experiment clusters takes a single --eps value")
    eps = eps_given[0] if eps_given else 0.125
    require_resolved(cfg.n(512), sorted({0.25, 0.125, 0.0625, eps}))
    cfg.eps = None
    cache = S.DecCache(cfg.cache_dir)
    certs = S.suite_clusters(cfg, cache, j=j, eps=eps)
    A = named_coefficient(make_grid(1, cfg.n(512)), cfg.profile)
    sweep = sorted({0.25, 0.125, 0.0625, eps}, reverse=True)
    decs = S._decs_for(cfg, cache, A, sweep)
    C = eigen_convergence_report(A, sweep, decs=decs).C_KLS
    cl = cluster_eigenvalues(decs[0.0], j, eps, C)
    table = [{"class": k, "first": a, "last": b, "lambda_min": float(cl.lambdas[a]), "lambda_max": float(cl.lambdas[b]),
              "interval": list(iv)} for k, ((a, b), iv) in enumerate(zip(cl.classes, cl.intervals))]
    _print_certs(certs)
    for row in table:
        print(f"  cluster {row['class']}: n={row['first']}..{row['last']}  "
              f"lambda in [{row['lambda_min']:.4g}, {row['lambda_max']:.4g}]")
    report = {"schema": SCHEMA, "kind": "experiment", "experiment": "clusters", "provenance": provenance(argv, cfg),
              "params": {"j": j, "eps": eps, "C_KLS": C, "threshold": cl.threshold, "q": cl.q,
                         "constraint_value": cl.constraint_value, "constraint_ok": cl.constraint_ok},
              "clusters": table, "certificates": [c.as_dict() for c in certs]}
    write_report(out, "experiment_clusters", report)
    write_csv(out / "clusters.csv", ["class", "first", "last", "lambda_min", "lambda_max"],
              [(r["class"], r["first"], r["last"], r["lambda_min"], r["lambda_max"]) for r in table])
    return EXIT_PASS if all(c.verdict for c in certs) else EXIT_FAIL


def _experiment_rates(vals: dict, cfg: S.RunConfig, out: Path, argv) -> int:
    N = cfg.n(512)
    eps = cfg.eps_list([0.25, 0.125, 0.0625])
    require_resolved(N, eps)
    cache = S.DecCache(cfg.cache_dir)
    A = named_coefficient(make_grid(1, N), cfg.profile)
    decs = S._decs_for(cfg, cache, A, eps)
    fits = {f"block_j{j}": f for j, f in block_convergence_rate(A, range(-1, 5), eps, decs=decs, seed=cfg.seed).items()}
    fits.update({f"operator_{k}": f for k, f in homo_operator_gap(A, eps, decs=decs).items()})
    eig = eigen_convergence_report(A, eps, decs=decs)
    certs = eig.certificates(S.WEYL_TOL, S.KLS_MIN) + S.suite_block_convergence(cfg, cache)
    _print_certs(certs)
    for k, f in fits.items():
        print(f"  {k}: slope {f.slope:.3f}")
    report = {"schema": SCHEMA, "kind": "experiment", "experiment": "rates", "provenance": provenance(argv, cfg),
              "fits": {k: f.as_dict() for k, f in fits.items()}, "certificates": [c.as_dict() for c in certs]}
    write_report(out, "experiment_rates", report)
    cols = list(fits)
    write_csv(out / "rates.csv", ["eps", *cols], [(e, *(fits[c].ordinates[i] for c in cols)) for i, e in enumerate(eps)])
    return EXIT_PASS if all(c.verdict for c in certs) else EXIT_FAIL


def cmd_experiment(args: argparse.Namespace) -> int:
    vals = _merged(args)
    cfg = run_config(vals)
    out = Path(vals.get("out", args.out))
    argv = sys.argv[1:] if args.argv is None else args.argv
    if args.kind in EXPERIMENTS:
        return _experiment_sde(args.kind, vals, cfg, out, argv)
    if args.kind == "clusters":
        return _experiment_clusters(vals, cfg, out, argv)
    return _experiment_rates(vals, cfg, out, argv)


def cmd_report(args: argparse.Namespace) -> int:
    from .plotting import collate  # matplotlib is only loaded for this command

    d = Path(args.directory)
    if not d.is_dir():
        print(f"not a directory: {d}", file=sys.stderr)
        return EXIT_USAGE
    bundle = collate(d, args.out, png=not args.no_png)
    print(f"{len(bundle['figures'])} figure(s) written")
    return EXIT_PASS


def cmd_list(args: argparse.Namespace) -> int:
    print("suites:")
    for n in S.SUITES:
        print(f"  {n}")
    print("registry:")
    for n, spec in REGISTRY.items():
        print(f"  {n}  [{spec.family}]")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--profile", help=f"coefficient profile ({', '.join(PROFILES)})")
    p.add_argument("--N", type=int, help="grid points per axis")
    p.add_argument("--eps", help="comma list such as 1/4,1/8")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float, help="noise cutoff scale")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--steps", type=int, help="time steps")
    p.add_argument("--mc", type=int, help="Monte Carlo samples for expectations")
    p.add_argument("--samples", type=int, help="random inputs per registry spec")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--tol-scale", dest="tol_scale", type=float)
    p.add_argument("--out", default="specbesov_out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specbesov", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run a check suite, 'all', or one registry spec")
    c.add_argument("target")
    _common(c)
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("experiment", help="run an experiment")
    e.add_argument("kind", choices=EXPERIMENT_KINDS)
    e.add_argument("--j", type=int, help="dyadic index for clusters")
    e.add_argument("--seeds", help="comma list of seeds for kpz/phi4_1d")
    _common(e)
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="collate CSV files into a plot-data bundle")
    r.add_argument("directory")
    r.add_argument("--out", help="bundle directory (default <directory>/bundle)")
    r.add_argument("--no-png", action="store_true", help="write data files only")
    r.set_defaults(func=cmd_report)

    ls = sub.add_parser("list-checks", help="list suites and registry specs")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
