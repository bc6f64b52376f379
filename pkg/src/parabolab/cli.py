"""Experiment driver.

``parabolab run <config>`` solves the configured problem (optionally per
sweep value), runs the requested estimators and writes results.csv plus a
manifest.json with full provenance.  ``parabolab verify <suite>`` runs the
module property suites and prints a pass/fail table.

Exit codes: 0 ok, 1 verify failure, 2 config validation, 3 CFL refusal,
4 estimator precondition.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_problem, parse_config
from .geometry import Point
from .solver import CflError, maximum_principle_check, solve

CSV_SCHEMA = "parabolab-results-v1"
CSV_COLUMNS = ["sweep_parameter", "sweep_value", "analysis", "metric", "value", "detail"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(sweep_param, sweep_value, analysis, metric, value, detail=""):
    return {
        "sweep_parameter": sweep_param or "",
        "sweep_value": "" if sweep_value is None else repr(float(sweep_value)),
        "analysis": analysis,
        "metric": metric,
        "value": _fmt(value),
        "detail": detail,
    }


def run_analyses(cfg: ExperimentConfig, result, F, sweep_param, sweep_value) -> list:
    from . import goodsets, regularity

    u = result.u
    g = u.grid
    origin = Point((0.0,) * g.d, 0.0)
    rows = []
    for name in cfg.analyses:
        if name == "campanato":
            alpha = cfg.number("campanato.alpha", 0.5)
            radii = cfg.floats("campanato.radii", regularity.default_radii())
            value, per = regularity.campanato_seminorm(u, alpha, origin, radii)
            detail = json.dumps([[r, s] for r, s, _ in per])
            rows.append(_row(sweep_param, sweep_value, name, "seminorm", value, detail))
        elif name == "holder":
            alpha = cfg.number("holder.alpha", 0.5)
            value = regularity.holder_seminorm(u, alpha, np.ones(g.shape, dtype=bool))
            rows.append(_row(sweep_param, sweep_value, name, "seminorm", value))
        elif name == "c2alpha":
            alpha = cfg.number("c2alpha.alpha", 0.5)
            value = regularity.c2alpha_seminorm(u, alpha, np.ones(g.shape, dtype=bool))
            rows.append(_row(sweep_param, sweep_value, name, "seminorm", value))
        elif name == "dyadic_sequence":
            rho = cfg.number("dyadic_sequence.rho", 0.5)
            alpha = cfg.number("dyadic_sequence.alpha", 0.5)
            k_max = cfg.integer("dyadic_sequence.k_max", 4)
            rep = regularity.dyadic_polynomial_sequence(u, F, rho, alpha, k_max)
            detail = json.dumps(rep.to_record())
            expo = rep.fit.exponent if rep.fit else float("nan")
            rows.append(_row(sweep_param, sweep_value, name, "fitted_exponent", expo, detail))
            if rep.fit:
                rows.append(
                    _row(sweep_param, sweep_value, name, "r_squared", rep.fit.r_squared)
                )
        elif name == "loglip":
            radii = cfg.floats("loglip.radii", regularity.default_radii(4))
            rep = regularity.loglip_fit(u, origin, radii)
            detail = json.dumps({"moduli": list(rep.moduli)})
            rows.append(_row(sweep_param, sweep_value, name, "preferred_model", rep.preferred, detail))
            rows.append(_row(sweep_param, sweep_value, name, "c_plain", rep.c_plain))
            rows.append(_row(sweep_param, sweep_value, name, "c_log", rep.c_log))
        elif name == "sobolev":
            p = cfg.number("sobolev.p", 2.0)
            value = regularity.sobolev_norm(u, p)
            rows.append(_row(sweep_param, sweep_value, name, "norm", value))
        elif name == "pbmo":
            p = cfg.number("pbmo.p", 2.0)
            radii = cfg.floats("pbmo.radii", regularity.default_radii(4))
            value = regularity.pbmo_norm(u, p, np.ones(g.shape, dtype=bool), radii)
            rows.append(_row(sweep_param, sweep_value, name, "norm", value))
        elif name == "a_decay":
            openings = cfg.floats("a_decay.openings", [4.0, 8.0, 16.0, 32.0])
            ss = cfg.integer("a_decay.space_stride", 1)
            ts = cfg.integer("a_decay.time_stride", 1)
            uu = u.subsample(ss, ts) if (ss > 1 or ts > 1) else u
            fit, measures = goodsets.a_decay(uu, openings)
            detail = json.dumps(measures)
            if fit is None:
                rows.append(_row(sweep_param, sweep_value, name, "a_set", "empty", detail))
            else:
                rows.append(_row(sweep_param, sweep_value, name, "delta", -fit.exponent, detail))
                rows.append(_row(sweep_param, sweep_value, name, "r_squared", fit.r_squared))
        elif name == "class_residual":
            rows.append(_row(sweep_param, sweep_value, name, "lower", result.residual_lower))
            rows.append(_row(sweep_param, sweep_value, name, "upper", result.residual_upper))
        elif name == "max_principle":
            rep = maximum_principle_check(result)
            rows.append(_row(sweep_param, sweep_value, name, "excess", rep.excess))
    return rows


def run_sweep_point(text: str, sweep_value):
    """Worker: parse, build, solve and analyze one sweep point."""
    cfg = parse_config(text)
    spec, scheme = build_problem(cfg, sweep_value)
    n_store = cfg.integer("scheme.n_store")
    result = solve(spec, scheme, n_store=n_store)
    sweep_param = cfg.get("sweep.parameter")
    return run_analyses(cfg, result, spec.F, sweep_param, sweep_value)


def _write_csv(path: Path, rows: list) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={CSV_SCHEMA}\n")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _error_json(out_dir: Path, code: str, message: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "errors.json", "w") as fh:
        json.dump({"code": code, "message": message}, fh, indent=2)


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        out = Path(args.out or "results")
        _error_json(out, exc.code, str(exc))
        print(f"config validation failed [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out or cfg.get("output.dir", "results"))
    sweep_param = cfg.get("sweep.parameter")
    values = cfg.floats("sweep.values") if sweep_param else [None]
    try:
        if args.workers > 1 and len(values) > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                futures = [pool.submit(run_sweep_point, text, v) for v in values]
                chunks = [f.result() for f in futures]  # merged in sweep order
        else:
            chunks = [run_sweep_point(text, v) for v in values]
    except ConfigError as exc:
        _error_json(out_dir, exc.code, str(exc))
        print(f"validation failed [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except CflError as exc:
        _error_json(out_dir, "cfl", str(exc))
        print(f"CFL refusal: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        _error_json(out_dir, "estimator", str(exc))
        print(f"estimator precondition failed: {exc}", file=sys.stderr)
        return 4
    rows = [r for chunk in chunks for r in chunk]
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "results.csv", rows)
    manifest = {
        "schema": CSV_SCHEMA,
        "version": __version__,
        "seed": cfg.integer("seed", 0),
        "config": cfg.raw,
        "config_text": text,
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {out_dir / 'results.csv'} ({len(rows)} rows)")
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    name = args.suite
    if name not in SUITES and name != "all":
        print(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'", file=sys.stderr)
        return 2
    names = sorted(SUITES) if name == "all" else [name]
    failures = 0
    for suite in names:
        results = run_suite(suite)
        for prop, ok, info in results:
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {suite}.{prop}" + (f"  ({info})" if info else ""))
            failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="parabolab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--schema", action="store_true", help="print the CSV schema and exit")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_ver = sub.add_parser("verify", help="run a module property suite")
    p_ver.add_argument("suite")
    args = parser.parse_args(argv)
    if args.schema:
        print(f"schema={CSV_SCHEMA}")
        print(",".join(CSV_COLUMNS))
        return 0
    if args.command == "run":
        return cmd_run(args)
    if args.command == "verify":
        return cmd_verify(args)
    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
