"""Batch front-end: bound evaluation, eigensolves, verification, sweeps.

Outputs are deterministic given the configuration and seed: JSON summaries
carry no timestamps and are serialized with sorted keys, CSV columns are
fixed per schema version (see schemas/ in the repository root).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bounds import (
    BoundConfigError,
    BoundReport,
    ExponentConfig,
    b_rs_estimate,
    k_ps_bound,
    lambda_lower_bound,
)
from .discretization import ScalarField
from .eigensolver import ConvergenceError, inverse_iteration, minimize_rayleigh
from .geometry import (
    BoxDomain,
    CuspDomain,
    GeometryError,
    mesh_box,
    mesh_cusp,
    write_mesh_text,
)
from .verification import run_verify_suite

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


@dataclass
class RunConfig:
    """Merged options for one subcommand run (defaults < file < flags)."""

    command: str
    options: dict

    def get(self, key, default=None):
        value = self.options.get(key)
        return default if value is None else value


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _load_config_file(path: str) -> dict:
    """Key = value lines; '#' starts a comment."""
    values: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str, header: list[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuspeig",
        description="Neumann (p,q)-eigenvalues on power-law cusp domains",
    )
    parser.add_argument("--config", help="key = value configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    bound = sub.add_parser("bound", help="evaluate the closed-form lower bound")
    bound.add_argument("--n", type=int)
    bound.add_argument("--p", type=float)
    bound.add_argument("--q", type=float)
    bound.add_argument("--s", type=float)
    bound.add_argument("--r", type=float)
    bound.add_argument("--gammas", help="comma-separated profile exponents")
    bound.add_argument("--pin-a", type=float, dest="pin_a",
                       help="evaluate at this mapping exponent instead of optimizing")
    bound.add_argument("--use-12pi", action="store_true", dest="use_12pi",
                       help="replace the Poincare estimate by the rounded constant 12*pi")
    bound.add_argument("--unsafe-n2", action="store_true", dest="unsafe_n2",
                       help="allow the 2-D evaluation of the composite bound")
    bound.add_argument("--json", dest="json_path")
    bound.add_argument("--csv", dest="csv_path", help="write (a, objective) samples")

    solve = sub.add_parser("solve", help="compute the first nontrivial eigenpair")
    solve.add_argument("--domain", choices=("cusp", "box"))
    solve.add_argument("--gammas", help="cusp profile exponents")
    solve.add_argument("--sides", help="box side lengths")
    solve.add_argument("--a", type=float, help="mesh grading exponent for cusp domains")
    solve.add_argument("--p", type=float)
    solve.add_argument("--q", type=float)
    solve.add_argument("--resolution", type=int)
    solve.add_argument("--method", choices=("minimize", "iterate"))
    solve.add_argument("--tol", type=float)
    solve.add_argument("--seed", type=int)
    solve.add_argument("--json", dest="json_path")
    solve.add_argument("--csv", dest="csv_path", help="write the iteration trace")
    solve.add_argument("--dump-mesh", dest="dump_mesh", help="write the mesh as plain text")

    verify = sub.add_parser("verify", help="run the cross-check suite")
    verify.add_argument("--fast", action="store_true")
    verify.add_argument("--seed", type=int)
    verify.add_argument("--json", dest="json_path")

    sweep = sub.add_parser("sweep", help="Cartesian parameter sweep")
    sweep.add_argument("--n", type=int)
    sweep.add_argument("--q", type=float)
    sweep.add_argument("--gamma-grid", dest="gamma_grid",
                       help="comma-separated isotropic profile exponents")
    sweep.add_argument("--p-grid", dest="p_grid")
    sweep.add_argument("--resolution-grid", dest="resolution_grid")
    sweep.add_argument("--method", choices=("minimize", "iterate"))
    sweep.add_argument("--tol", type=float)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--csv", dest="csv_path", required=True)
    return parser


_DEFAULTS = {
    "bound": {"n": 3, "p": 3.0, "q": 2.0, "gammas": "1.5,1.5"},
    "solve": {
        "domain": "cusp",
        "gammas": "2",
        "sides": "1,1",
        "a": 1.0,
        "p": 2.0,
        "q": 2.0,
        "resolution": 16,
        "method": "minimize",
        "tol": 1e-6,
        "seed": 0,
    },
    "verify": {"seed": 0},
    "sweep": {
        "n": 2,
        "q": 2.0,
        "gamma_grid": "1,2",
        "p_grid": "2",
        "resolution_grid": "8",
        "method": "minimize",
        "tol": 1e-4,
        "workers": 1,
    },
}

_TYPES = {
    "n": int,
    "p": float,
    "q": float,
    "s": float,
    "r": float,
    "a": float,
    "pin_a": float,
    "tol": float,
    "resolution": int,
    "seed": int,
    "workers": int,
    "use_12pi": lambda v: str(v).lower() in ("1", "true", "yes"),
    "unsafe_n2": lambda v: str(v).lower() in ("1", "true", "yes"),
    "fast": lambda v: str(v).lower() in ("1", "true", "yes"),
}


def _merge_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(_DEFAULTS.get(args.command, {}))
    if args.config:
        for key, raw in _load_config_file(args.config).items():
            merged[key] = _TYPES[key](raw) if key in _TYPES else raw
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None:
            continue
        if val is False and key in ("use_12pi", "unsafe_n2", "fast"):
            continue  # absent store_true flags must not mask config values
        merged[key] = val
    return RunConfig(command=args.command, options=merged)


def _run_bound(config: RunConfig) -> int:
    n = int(config.get("n"))
    p = float(config.get("p"))
    q = float(config.get("q"))
    gammas = _parse_floats(config.get("gammas"))
    use_12pi = bool(config.get("use_12pi", False))
    pin_a = config.get("pin_a")
    s = config.get("s")
    r = config.get("r")
    if len(gammas) != n - 1:
        raise BoundConfigError(
            f"expected {n - 1} profile exponents for n={n}, got {gammas}"
        )
    domain = CuspDomain(gammas)
    if n == 2 and not config.get("unsafe_n2", False):
        raise BoundConfigError(
            "composite bound is stated for n >= 3; pass --unsafe-n2 to evaluate anyway"
        )
    b_constant = 12.0 * math.pi if use_12pi else None
    echo = {
        "n": n, "p": p, "q": q, "s": s, "r": r, "gammas": list(gammas),
        "use_12pi": use_12pi, "pin_a": pin_a,
    }
    if p < domain.gamma:
        cfg = ExponentConfig.from_domain(domain, p, q, s=s, r=r)
        echo["s"], echo["r"] = cfg.s, cfg.r
        report = lambda_lower_bound(
            cfg, domain, b_constant=b_constant, fixed_a=pin_a,
            allow_n2=bool(config.get("unsafe_n2", False)),
        )
    elif n == 3 and p == 3.0 and q == 2.0 and domain.gamma == 3.0 and pin_a in (None, 1.0):
        # Lipschitz corner: the optimization window degenerates, but the
        # composite bound extends continuously to a = 1 with m_rq = 1.
        b_const = b_constant if b_constant is not None else b_rs_estimate(
            3, float(r if r is not None else 2.5), float(s if s is not None else 1.5)
        )
        k_val = k_ps_bound(1.0, 3.0, domain)
        f_val = (k_val * b_const) ** 3
        report = BoundReport(
            a_star=1.0,
            k_ps=k_val,
            m_rq=1.0,
            b_rs=b_const,
            upper_on_inverse_lambda=f_val,
            lambda_lower=1.0 / f_val,
            interval=(1.0, 1.0),
            evaluations=[(1.0, f_val)],
        )
    else:
        raise BoundConfigError(
            f"requires p < gamma (got p={p}, gamma={domain.gamma}); the "
            "degenerate corner is supported only for (n, p, q) = (3, 3, 2) at a = 1"
        )
    payload = {
        "schema": f"bound_report/{SCHEMA_VERSION}",
        "config": echo,
        "report": report.as_dict(),
    }
    _write_json(config.get("json_path"), payload)
    if config.get("csv_path"):
        _write_csv(
            config.get("csv_path"), ["a", "objective"],
            [(a, obj) for a, obj in report.evaluations],
        )
    return EXIT_OK


def _run_solve(config: RunConfig) -> int:
    p = float(config.get("p"))
    q = float(config.get("q"))
    resolution = int(config.get("resolution"))
    method = config.get("method")
    tol = float(config.get("tol"))
    if config.get("domain") == "box":
        domain_info = {"type": "box", "sides": list(_parse_floats(config.get("sides")))}
        mesh = mesh_box(BoxDomain(_parse_floats(config.get("sides"))), resolution)
    else:
        gammas = _parse_floats(config.get("gammas"))
        domain_info = {"type": "cusp", "gammas": list(gammas), "a": float(config.get("a"))}
        mesh = mesh_cusp(CuspDomain(gammas), float(config.get("a")), resolution)
    if config.get("dump_mesh"):
        write_mesh_text(mesh, config.get("dump_mesh"))

    trace_rows: list[tuple] = []
    if method == "iterate":
        pair, trace = inverse_iteration(
            mesh, p, tol=max(tol * 1e-2, 1e-10), residual_tol=tol, q=q
        )
        trace_rows = [
            (i, state.mu, state.energy, state.constraint_residual)
            for i, state in enumerate(trace)
        ]
    else:
        pair = minimize_rayleigh(mesh, p, q, tol=tol)
        trace_rows = [
            (i, lam, lam, cres)
            for i, (lam, _res, cres) in enumerate(pair.diagnostics.get("history", []))
        ]
    payload = {
        "schema": f"eigenpair/{SCHEMA_VERSION}",
        "config": {
            "domain": domain_info, "p": p, "q": q,
            "resolution": resolution, "method": method, "tol": tol,
            "seed": int(config.get("seed", 0)),
        },
        "result": {
            "lambda": pair.lam,
            "iterations": pair.iterations,
            "weak_residual": pair.weak_residual,
            "constraint_residual": pair.constraint_residual,
            "nodes": mesh.num_nodes,
            "cells": mesh.num_cells,
        },
    }
    _write_json(config.get("json_path"), payload)
    if config.get("csv_path"):
        _write_csv(
            config.get("csv_path"),
            ["n", "mu_n", "energy_n", "constraint_residual"],
            trace_rows,
        )
    return EXIT_OK


def _run_verify(config: RunConfig) -> int:
    checks = run_verify_suite(
        fast=bool(config.get("fast", False)), seed=int(config.get("seed", 0))
    )
    passed = all(check["passed"] for check in checks)
    payload = {
        "schema": f"verify_report/{SCHEMA_VERSION}",
        "passed": passed,
        "checks": checks,
    }
    _write_json(config.get("json_path"), payload)
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        sys.stderr.write(f"[{status}] {check['name']}\n")
    return EXIT_OK if passed else EXIT_NUMERICAL


def _sweep_cell(task: tuple) -> tuple:
    n, q, sigma, p, resolution, method, tol = task
    domain = CuspDomain(tuple([sigma] * (n - 1)))
    mesh = mesh_cusp(domain, 1.0, resolution)
    if method == "iterate":
        pair, _ = inverse_iteration(mesh, p, tol=max(tol * 1e-2, 1e-10), residual_tol=tol, q=q)
    else:
        pair = minimize_rayleigh(mesh, p, q, tol=tol)
    return (sigma, p, resolution, pair.lam, pair.weak_residual, pair.iterations)


def _run_sweep(config: RunConfig) -> int:
    n = int(config.get("n"))
    q = float(config.get("q"))
    method = config.get("method")
    tol = float(config.get("tol"))
    tasks = [
        (n, q, sigma, p, int(res), method, tol)
        for sigma in _parse_floats(config.get("gamma_grid"))
        for p in _parse_floats(config.get("p_grid"))
        for res in _parse_floats(config.get("resolution_grid"))
    ]
    workers = int(config.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(task) for task in tasks]
    _write_csv(
        config.get("csv_path"),
        ["gamma_i", "p", "resolution", "lambda", "weak_residual", "iterations"],
        rows,
    )
    return EXIT_OK


_RUNNERS = {
    "bound": _run_bound,
    "solve": _run_solve,
    "verify": _run_verify,
    "sweep": _run_sweep,
}


def run(config: RunConfig) -> int:
    """Dispatch a merged configuration; exit code semantics as `main`."""
    return _RUNNERS[config.command](config)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
        return run(config)
    except (BoundConfigError, GeometryError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except (ConvergenceError, RuntimeError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
