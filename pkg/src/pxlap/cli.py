"""Command line entry point: ``pxlap {norm,torsion,solve,sweep,verify}``.

Every command writes CSV files (17 significant digits, LF line endings)
under ``--out``. Exit codes: 0 success, 2 configuration error, 3 solver
did not converge, 4 a requested property check failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import exprparse, semipositone, solvers, varexp
from .errors import (CollapsedPath, ConfigError, DomainError, ExponentOutOfRange,
                     InvalidSize, NoConvergence, NoDescent, PxlapError)
from .fem import FeFunction, format_float, interval_mesh, mesh_from_spec, unit_square_mesh, write_function_csv

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_PROPERTY = 0, 2, 3, 4
COMMANDS = ("norm", "torsion", "solve", "sweep", "verify")

# config-file key -> RunConfig attribute
_KEYS = {
    "command": "command", "mesh": "mesh", "p": "p_expr", "f": "f_expr",
    "q": "q", "r": "r", "theta": "theta", "t0": "t0",
    "lambda": "lam", "lambda_list": "lambda_list", "tol": "tol",
    "path_points": "path_points", "out": "out_dir", "out_dir": "out_dir",
    "seed": "seed", "u": "u_expr", "draws": "draws",
}


@dataclass
class RunConfig:
    command: str = ""
    mesh: str = "interval:256"
    p_expr: str = "2"
    f_expr: Optional[str] = None
    q: float = 4.0
    r: Optional[float] = None
    theta: Optional[float] = None
    t0: float = 1.0
    lam: Optional[float] = None
    lambda_list: Optional[list] = None
    tol: float = 1e-8
    path_points: int = 41
    out_dir: str = "."
    seed: int = 0
    u_expr: Optional[str] = None
    draws: int = 100
    emit_gnuplot: bool = False
    warm_start: bool = True
    parallel: bool = False
    trace: bool = False


def _as_float(key, text):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not a number: {text!r}") from None


def _as_int(key, text):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not an integer: {text!r}") from None


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment line."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, value = s.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or f"line {lineno}", "expected 'key = value'")
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        out[_KEYS[key]] = _unquote(value)
    return out


def _typed(raw: dict) -> dict:
    typed = {}
    for name, value in raw.items():
        if value is None:
            continue
        if name in ("q", "r", "theta", "t0", "lam", "tol"):
            typed[name] = _as_float(name, value)
        elif name in ("path_points", "seed", "draws"):
            typed[name] = _as_int(name, value)
        elif name == "lambda_list":
            items = value if isinstance(value, (list, tuple)) else str(value).split(",")
            typed[name] = [_as_float("lambda_list", v) for v in items if str(v).strip()]
        else:
            typed[name] = value
    return typed


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge a config file with flag overrides (flags win) and validate."""
    merged = _typed(read_config_file(path)) if path else {}
    merged.update(_typed({k: v for k, v in (overrides or {}).items() if v is not None}))
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in merged.items() if k in known})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}")
    try:
        n = mesh_from_spec(cfg.mesh).n
    except InvalidSize as exc:
        raise ConfigError("mesh", str(exc)) from None
    if n < 2:
        raise ConfigError("mesh", "n must be at least 2")
    if not cfg.tol > 0:
        raise ConfigError("tol", "must be positive")
    if cfg.path_points < 3:
        raise ConfigError("path_points", "must be at least 3")
    if cfg.draws < 1:
        raise ConfigError("draws", "must be at least 1")
    if cfg.lambda_list is not None:
        lams = cfg.lambda_list
        if not lams:
            raise ConfigError("lambda_list", "empty")
        if any(b >= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("lambda_list", "must be strictly decreasing")
        if any(v <= 0 for v in lams):
            raise ConfigError("lambda_list", "values must be positive")
    if cfg.lam is not None and cfg.lam < 0:
        raise ConfigError("lambda", "must be non-negative")
    if cfg.command in ("torsion", "solve") and cfg.lam is None:
        raise ConfigError("lambda", f"required for {cfg.command}")
    if cfg.command == "sweep" and cfg.lambda_list is None:
        raise ConfigError("lambda_list", "required for sweep")
    if cfg.parallel and cfg.warm_start:
        raise ConfigError("parallel", "parallel sweep rows need --no-warm-start")
    for key, src, variables in (("p", cfg.p_expr, ("x", "y")), ("f", cfg.f_expr, ("t",)),
                                ("u", cfg.u_expr, ("x", "y"))):
        if src is not None:
            try:
                exprparse.parse(src, variables)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None


# -- output helpers --------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return "" if v is None else str(v)


def write_table(path: Path, header, rows) -> Path:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return Path(path)


def write_record(path: Path, record: dict) -> Path:
    return write_table(path, list(record), [list(record.values())])


def write_gnuplot(path: Path, u: FeFunction) -> Path:
    with Path(path).open("w", newline="") as fh:
        for coords, val in zip(u.mesh.vertices, u.nodal):
            fh.write(" ".join(format_float(c) for c in coords) + " " + format_float(val) + "\n")
    return Path(path)


_DUAL_NORM_NOTE = "sqrt(r^T K^-1 r), K = p=2 stiffness"


def _solve_record(cfg, rep: solvers.SolveReport, lam) -> dict:
    rec = {"command": cfg.command, "mesh": cfg.mesh, "p": cfg.p_expr, "lambda": lam,
           "energy": rep.energy, "residual_dual_norm": rep.residual_dual_norm,
           "residual_max": rep.residual_max, "min_u": rep.min_u, "max_u": rep.max_u,
           "negative_measure": rep.negative_measure, "iterations": rep.iterations,
           "converged": rep.converged}
    for key in ("lambda2_path", "lambda2_bound", "t1", "handoff"):
        if key in rep.extras:
            rec[key] = rep.extras[key]
    rec["dual_norm"] = _DUAL_NORM_NOTE
    return rec


# -- commands ----------------------------------------------------------------

def _setup(cfg):
    mesh = mesh_from_spec(cfg.mesh)
    try:
        p = varexp.ExponentField.from_expression(mesh, cfg.p_expr)
    except (DomainError, ExponentOutOfRange) as exc:
        raise ConfigError("p", str(exc)) from None
    return mesh, p


def _nonlinearity(cfg):
    r = cfg.q if cfg.r is None else cfg.r
    theta = cfg.q if cfg.theta is None else cfg.theta
    if cfg.f_expr is None:
        return semipositone.power_model(cfg.q, r, theta, cfg.t0)
    return semipositone.from_expression(cfg.f_expr, cfg.q, r, theta, cfg.t0)


def cmd_norm(cfg, out: Path) -> int:
    mesh, p = _setup(cfg)
    src = cfg.u_expr or ("x*(1-x)" if mesh.dim == 1 else "x*(1-x)*y*(1-y)")
    try:
        expr = exprparse.parse(src)
        u = FeFunction.interpolate(mesh, lambda *xy: exprparse.evaluate(expr, *xy))
    except DomainError as exc:
        raise ConfigError("u", str(exc)) from None
    rec = {"mesh": cfg.mesh, "p": cfg.p_expr, "u": src, "p_minus": p.p_minus, "p_plus": p.p_plus,
           "modular": varexp.modular(u, p), "luxemburg_norm": varexp.luxemburg_norm(u, p),
           "l1_norm": varexp.l1_norm(u)}
    rec["sobolev_norm"] = varexp.sobolev_norm(u, p) if u.boundary_max() <= 1e-14 else None
    nm = varexp.check_norm_modular(u, p)
    rec["norm_modular_holds"] = nm.passed
    write_record(out / "report.csv", rec)
    return EXIT_OK if nm.passed else EXIT_PROPERTY


def cmd_torsion(cfg, out: Path) -> int:
    mesh, p = _setup(cfg)
    rep = solvers.solve_torsion(p, cfg.lam, mesh, tol=cfg.tol)
    write_function_csv(rep.u, out / "solution.csv")
    write_record(out / "report.csv", _solve_record(cfg, rep, cfg.lam))
    if cfg.emit_gnuplot:
        write_gnuplot(out / "solution.dat", rep.u)
    return EXIT_OK


def _options(cfg):
    return solvers.MountainPassOptions(path_points=cfg.path_points, tol=cfg.tol, trace=cfg.trace)


def cmd_solve(cfg, out: Path) -> int:
    mesh, p = _setup(cfg)
    prob = semipositone.TruncatedProblem(_nonlinearity(cfg), cfg.lam)
    rep, state = solvers.mountain_pass(p, prob, mesh, _options(cfg))
    write_function_csv(rep.u, out / "solution.csv")
    rec = _solve_record(cfg, rep, cfg.lam)
    hyp = semipositone.validate_hypotheses(prob.base, p)
    rec["hypotheses_pass"] = hyp.passed
    write_record(out / "report.csv", rec)
    if cfg.trace:
        write_table(out / "mpa_trace.csv", ["iter", "point", "energy", "grad_dual"], state.trace)
    if cfg.emit_gnuplot:
        write_gnuplot(out / "solution.dat", rep.u)
    return EXIT_OK


def cmd_sweep(cfg, out: Path) -> int:
    mesh, p = _setup(cfg)
    res = solvers.lambda_sweep(p, _nonlinearity(cfg), mesh, cfg.lambda_list, _options(cfg),
                               warm_start=cfg.warm_start, parallel=cfg.parallel)
    header = ["lambda", "energy", "min_u", "negative_measure", "residual", "iterations", "converged"]
    write_table(out / "sweep.csv", header,
                [[r.lam, r.energy, r.min_u, r.negative_measure, r.residual, r.iterations, r.converged]
                 for r in res.rows])
    write_record(out / "report.csv", {"command": "sweep", "mesh": cfg.mesh, "p": cfg.p_expr,
                                      "lambda_threshold": res.lambda_threshold,
                                      "rows": len(res.rows),
                                      "converged_rows": sum(r.converged for r in res.rows),
                                      "dual_norm": _DUAL_NORM_NOTE})
    if cfg.emit_gnuplot:
        for k, row in enumerate(res.rows):
            if row.report is not None:
                write_gnuplot(out / f"sweep_{k:03d}.dat", row.report.u)
    return EXIT_OK if all(r.converged for r in res.rows) else EXIT_NOCONV


def cmd_verify(cfg, out: Path) -> int:
    rows = []
    meshes = [interval_mesh(64), unit_square_mesh(16)]
    for res in varexp.function_space_suite(meshes, cfg.draws, cfg.seed):
        rows.append([res.name, res.passed, res.worst_slack, res.draws])

    # truncation layer for a few λ
    nl = _nonlinearity(cfg)
    rng = np.random.default_rng(cfg.seed)
    t = rng.uniform(-5.0, 20.0, size=10_000)
    for lam in (0.01, 0.1, 0.5):
        prob = semipositone.TruncatedProblem(nl, lam)
        jumps = max(abs(prob.f_lambda(k - 1e-12) - prob.f_lambda(k + 1e-12)) for k in (-1.0, 0.0))
        rows.append([f"truncation_continuity[{lam:g}]", bool(jumps < 1e-9), 1e-9 - jumps, 2])
        below = prob.F_lambda(np.minimum(t, -1.0))
        dev = float(np.max(np.abs(below - 0.5 * lam)))
        rows.append([f"truncation_plateau[{lam:g}]", dev == 0.0, -dev, t.size])
        c1 = semipositone.growth_envelope_constant(nl, nl.r, nl.q)
        ok = semipositone.check_growth_bound(prob, nl.r, nl.q, c1, t)
        rows.append([f"growth_bound[{lam:g}]", bool(ok.all()), float(ok.mean()) - 1.0, t.size])

    write_table(out / "verify.csv", ["suite", "passed", "worst_slack", "draws"], rows)
    return EXIT_OK if all(r[1] for r in rows) else EXIT_PROPERTY


_DISPATCH = {"norm": cmd_norm, "torsion": cmd_torsion, "solve": cmd_solve,
             "sweep": cmd_sweep, "verify": cmd_verify}


def run(cfg: RunConfig) -> int:
    validate(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[cfg.command](cfg, out)


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file; flags override it")
    common.add_argument("--mesh", help="interval:N or square:N (default interval:256)")
    common.add_argument("--p", dest="p_expr", help="exponent p(x, y) expression (default 2)")
    common.add_argument("--f", dest="f_expr", help="nonlinearity f(t) expression (default t^(q-1))")
    common.add_argument("--q", type=str)
    common.add_argument("--r", type=str)
    common.add_argument("--theta", type=str)
    common.add_argument("--t0", type=str)
    common.add_argument("--lambda", dest="lam", type=str)
    common.add_argument("--lambdas", dest="lambda_list", type=str,
                        help="comma separated, strictly decreasing")
    common.add_argument("--tol", type=str)
    common.add_argument("--path-points", dest="path_points", type=str)
    common.add_argument("--out", dest="out_dir", help="output directory (default .)")
    common.add_argument("--seed", type=str)
    common.add_argument("--u", dest="u_expr", help="function u(x, y) for the norm command")
    common.add_argument("--draws", type=str, help="random draws for verify (default 100)")
    common.add_argument("--emit-gnuplot", action="store_true", default=None)
    common.add_argument("--no-warm-start", dest="warm_start", action="store_false", default=None)
    common.add_argument("--parallel", action="store_true", default=None)
    common.add_argument("--trace", action="store_true", default=None,
                        help="write per-iteration path energies to mpa_trace.csv")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="pxlap",
                                     description="Semipositone p(x)-Laplacian toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"norm": "modular and Luxemburg norm of a function",
             "torsion": "solve -Δ_p v = -λ with v = 0 on the boundary",
             "solve": "mountain-pass solution of -Δ_p u = f(u) - λ",
             "sweep": "mountain-pass solutions over a decreasing λ list",
             "verify": "seeded function-space and truncation property suites"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
        return run(cfg)
    except ConfigError as exc:
        print(f"pxlap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, CollapsedPath, NoDescent) as exc:
        print(f"pxlap: no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except PxlapError as exc:
        print(f"pxlap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
