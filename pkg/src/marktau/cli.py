"""Command line interface: estimate, test, simulate, power.

Every artifact embeds the resolved run configuration and a format version.
All randomness is seed-driven and replications use per-index seed streams,
so artifacts are byte-identical across re-runs and worker counts; the
worker count is an execution detail and deliberately not part of the
embedded configuration. File paths are identified by content hash rather
than by name for the same reason.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .data_model import (
    DataError,
    MarkInterval,
    Sidecar,
    apply_mark_scaling,
    drop_incomplete_rows,
    parse_dataset,
    parse_sidecar,
    scale_marks,
    validate,
)
from .estimator import EstimationError, EvaluationGrid, estimate_on_grid
from .inference import InferenceError, TestConfig, run_test
from .kernels import KernelError
from .simulation import (
    Scenario,
    SimulationError,
    resolve_censoring,
    run_replications,
    size_power_curve,
)

FORMAT_VERSION = 1

_ERRORS = (DataError, KernelError, EstimationError, InferenceError, SimulationError)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_safe(value):
    """Replace non-finite floats with None so the JSON artifact stays strict."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    return value


def _format_cell(value) -> str:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def _config_comment(config: dict) -> str:
    encoded = json.dumps(_json_safe(config), sort_keys=True, separators=(",", ":"))
    return f"# marktau format={FORMAT_VERSION} config={encoded}"


def _write_csv(path: Path, header: tuple[str, ...], rows, config: dict) -> None:
    lines = [_config_comment(config), ",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8", newline="")


def _resolve_workers(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("MARKTAU_THREADS", "1"))
    if value < 1:
        raise SimulationError(f"thread count must be >= 1, got {value}")
    return value


def _parse_interval(text: str) -> MarkInterval:
    parts = text.split(",")
    if len(parts) != 2:
        raise DataError(f"interval must be 'lower,upper', got {text!r}")
    return MarkInterval(float(parts[0]), float(parts[1]))


def _parse_points(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise DataError(f"grid must be comma-separated numbers, got {text!r}") from None


def _build_grid(args) -> EvaluationGrid:
    interval = _parse_interval(args.interval) if args.interval else None
    if args.grid:
        return EvaluationGrid.explicit(_parse_points(args.grid), interval)
    if interval is None:
        raise DataError("pass --interval lower,upper (or an explicit --grid)")
    return EvaluationGrid.evenly_spaced(interval, args.grid_points)


def _parse_c3_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise SimulationError(f"--c3-range must be 'lo:hi:step', got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise SimulationError(f"--c3-range needs step > 0 and hi >= lo, got {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(count)]


def _grid_config(grid: EvaluationGrid) -> dict:
    return {
        "points": [float(v) for v in grid.points],
        "interval": [grid.interval.lower, grid.interval.upper],
    }


def _load_dataset(args) -> tuple["Dataset", dict]:
    """Read, optionally filter, parse, scale, and validate the input CSV."""
    path = Path(args.input)
    text = path.read_text(encoding="utf-8")
    info: dict = {"input_sha256": _sha256(path)}
    dropped = 0
    if args.drop_missing_marks:
        text, dropped = drop_incomplete_rows(text)
    info["dropped_rows"] = dropped

    sidecar = Sidecar()
    if args.meta:
        sidecar = parse_sidecar(Path(args.meta).read_text(encoding="utf-8"))
    dataset = parse_dataset(text, follow_up=sidecar.follow_up)

    scaling = None
    if sidecar.mark_scaling == "auto":
        _, scaling = scale_marks(dataset.observed_marks())
    elif sidecar.mark_scaling is not None:
        scaling = sidecar.mark_scaling
    if scaling is not None:
        dataset = apply_mark_scaling(dataset, scaling)
        info["mark_scaling"] = {
            "min": scaling.vmin, "max": scaling.vmax, "degenerate": scaling.degenerate,
        }
    else:
        info["mark_scaling"] = None

    report = validate(dataset)
    if not report.ok:
        raise DataError(f"input fails validation:\n{report}")
    m = int(np.count_nonzero(dataset.delta == 1))
    if m < 20:
        print(
            f"warning: only {m} observed events; kernel smoothing and the "
            "rule-of-thumb bandwidth are unreliable at this size",
            file=sys.stderr,
        )
    return dataset, info


def _bandwidth_args(args) -> dict:
    if args.bandwidth is not None and args.bandwidth <= 0:
        raise KernelError(f"bandwidth must be positive, got {args.bandwidth!r}")
    return {"bandwidth": args.bandwidth, "varpi": args.bandwidth_scale}


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="CSV with header y,delta,mark,a")
    parser.add_argument("--meta", help="JSON sidecar with follow_up / mark_scaling")
    parser.add_argument("--drop-missing-marks", action="store_true",
                        help="drop uncensored rows whose mark is missing before parsing")


def _add_grid_flags(parser: argparse.ArgumentParser, default_interval: str | None = None,
                    ) -> None:
    parser.add_argument("--interval", default=default_interval,
                        help="mark interval 'lower,upper' inside [0,1]")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--grid-points", type=int, default=20,
                       help="number of evenly spaced grid points (default 20)")
    group.add_argument("--grid", help="explicit comma-separated grid points")


def _add_bandwidth_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bandwidth-scale", type=float, default=1.0, metavar="VARPI",
                        help="scale constant of the rule-of-thumb bandwidth (default 1)")
    parser.add_argument("--bandwidth", type=float,
                        help="explicit bandwidth; overrides the rule of thumb")


def cmd_estimate(args) -> int:
    dataset, info = _load_dataset(args)
    grid = _build_grid(args)
    est = estimate_on_grid(dataset, grid, alpha=args.alpha, **_bandwidth_args(args))

    config = {
        "command": "estimate",
        "input_sha256": info["input_sha256"],
        "drop_missing_marks": bool(args.drop_missing_marks),
        "mark_scaling": info["mark_scaling"],
        "grid": _grid_config(grid),
        "alpha": args.alpha,
        "bandwidth": args.bandwidth,
        "bandwidth_scale": args.bandwidth_scale,
    }
    out_csv = Path(args.out)
    header = ("v", "tau1", "tau0", "tau", "sigma2", "ci_lower", "ci_upper",
              "events1", "events0")
    rows = zip(est.points, est.tau1, est.tau0, est.tau, est.sigma2,
               est.ci_lower, est.ci_upper, est.events1, est.events0)
    _write_csv(out_csv, header, rows, config)

    summary = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "h": est.h,
        "bandwidth_scale": est.bandwidth.varpi,
        "sigma_v": est.bandwidth.sigma_v,
        "observed_events": est.bandwidth.m,
        "alpha": est.alpha,
        "n": est.n,
        "n0": est.n0,
        "n1": est.n1,
        "flagged_points": [float(v) for v in est.points[est.flagged]],
        "dropped_rows": info["dropped_rows"],
    }
    _write_json(out_csv.with_suffix(".json"), summary)

    if args.dump_censoring:
        from .km import fit_censoring_km

        for a in (0, 1):
            idx = dataset.arm_indices(a)
            curve = fit_censoring_km(dataset.y[idx], dataset.delta[idx], group=a)
            rows = [(0.0, 1.0)] + list(zip(curve.jump_times, curve.values))
            _write_csv(Path(f"{args.dump_censoring}_arm{a}.csv"),
                       ("t", "survival"), rows, config)
    return 0


def cmd_test(args) -> int:
    dataset, info = _load_dataset(args)
    grid = _build_grid(args)
    bw = _bandwidth_args(args)
    config_obj = TestConfig(
        grid=grid, resamples=args.resamples, alpha=args.alpha, seed=args.seed,
        bandwidth=bw["bandwidth"], varpi=bw["varpi"], pi_design=args.pi_design,
        add_one_correction=args.add_one_correction,
    )
    result = run_test(args.kind, dataset, config_obj)

    config = {
        "command": "test",
        "kind": args.kind,
        "input_sha256": info["input_sha256"],
        "drop_missing_marks": bool(args.drop_missing_marks),
        "mark_scaling": info["mark_scaling"],
        "grid": _grid_config(grid),
        "alpha": args.alpha,
        "B": args.resamples,
        "seed": args.seed,
        "bandwidth": args.bandwidth,
        "bandwidth_scale": args.bandwidth_scale,
        "pi_design": args.pi_design,
        "add_one_correction": bool(args.add_one_correction),
    }
    report = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "kind": result.kind,
        "statistic": result.statistic,
        "critical_value": result.critical_value,
        "p_value": result.p_value,
        "reject": bool(result.reject),
        "alpha": result.alpha,
        "B": result.resamples,
        "seed": result.seed,
        "grid": [float(v) for v in grid.points],
        "excluded_points": list(result.excluded_points),
        "skipped_pairs": result.skipped_pairs,
        "h": result.estimate.h,
        "n": result.estimate.n,
    }
    if args.out:
        _write_json(Path(args.out), report)
    print(
        f"{result.kind} test: statistic={result.statistic:.6g} "
        f"critical_value={result.critical_value:.6g} p_value={result.p_value:.6g} "
        f"reject={result.reject}"
    )
    return 0


def _scenario_from_args(args, c3: float | None = None) -> Scenario:
    grid = None
    if args.grid:
        interval = _parse_interval(args.interval) if args.interval else None
        grid = EvaluationGrid.explicit(_parse_points(args.grid), interval)
        interval = grid.interval
    else:
        interval = _parse_interval(args.interval)
    return Scenario(
        c1=args.c1, c2=args.c2, c3=args.c3 if c3 is None else c3, n=args.n,
        p_treat=args.p_treat, censor_mean0=args.censor_mean0,
        censor_mean1=args.censor_mean1, censor_target=args.censor_target,
        interval=interval, grid_points=args.grid_points, grid=grid,
        reps=args.reps, seed=args.seed, alpha=args.alpha,
        varpi=args.bandwidth_scale,
    )


def _scenario_config(scenario: Scenario, command: str) -> dict:
    return {
        "command": command,
        "c1": scenario.c1, "c2": scenario.c2, "c3": scenario.c3,
        "n": scenario.n, "p_treat": scenario.p_treat,
        "censor_mean0": scenario.censor_mean0,
        "censor_mean1": scenario.censor_mean1,
        "censor_target": scenario.censor_target,
        "grid": _grid_config(scenario.resolve_grid()),
        "reps": scenario.reps, "seed": scenario.seed, "alpha": scenario.alpha,
        "bandwidth_scale": scenario.varpi,
    }


def cmd_simulate(args) -> int:
    scenario = resolve_censoring(_scenario_from_args(args))
    table = run_replications(scenario, workers=_resolve_workers(args.threads))
    config = _scenario_config(scenario, "simulate")
    header = ("v", "true_tau", "bias", "bias_se", "ratio", "ratio_se",
              "coverage", "coverage_se", "reps", "n")
    rows = zip(table.points, table.true_tau, table.bias, table.bias_se,
               table.ratio, table.ratio_se, table.coverage, table.coverage_se,
               [table.reps] * len(table.points), [table.n] * len(table.points))
    _write_csv(Path(args.out), header, rows, config)
    return 0


def cmd_power(args) -> int:
    c3_values = _parse_c3_range(args.c3_range)
    base = _scenario_from_args(args, c3=c3_values[0])
    table = size_power_curve(base, c3_values, args.kind, resamples=args.resamples,
                             workers=_resolve_workers(args.threads))
    config = _scenario_config(base, "power")
    config["kind"] = args.kind
    config["c3"] = c3_values
    config["B"] = args.resamples
    header = ("c3", "rate", "se", "rejections", "reps", "n")
    rows = zip(table.c3, table.rate, table.se, table.rejections,
               [table.reps] * len(c3_values), [table.n] * len(c3_values))
    _write_csv(Path(args.out), header, rows, config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marktau",
        description="Mark-specific treatment effects on right-censored failure times",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="estimate effects on a mark grid")
    _add_data_flags(p_est)
    _add_grid_flags(p_est)
    _add_bandwidth_flags(p_est)
    p_est.add_argument("--alpha", type=float, default=0.05)
    p_est.add_argument("--out", required=True, help="output CSV; JSON summary beside it")
    p_est.add_argument("--dump-censoring", metavar="PREFIX",
                       help="also dump each arm's censoring survival curve as CSV")
    p_est.set_defaults(func=cmd_estimate)

    p_test = sub.add_parser("test", help="multiplier-resampling hypothesis test")
    _add_data_flags(p_test)
    _add_grid_flags(p_test)
    _add_bandwidth_flags(p_test)
    p_test.add_argument("--kind", choices=["global", "constancy"], required=True)
    p_test.add_argument("--resamples", type=int, default=500, metavar="B")
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--pi-design", type=float,
                        help="design treated fraction; default is the empirical one")
    p_test.add_argument("--add-one-correction", action="store_true",
                        help="use the (count+1)/(B+1) p-value variant")
    p_test.add_argument("--out", help="write the JSON report here")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="replicate estimation, report quality metrics")
    p_sim.add_argument("--c1", type=float, default=3.0)
    p_sim.add_argument("--c2", type=float, default=0.0)
    p_sim.add_argument("--c3", type=float, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--p-treat", type=float, default=2.0 / 3.0)
    p_sim.add_argument("--censor-mean0", type=float)
    p_sim.add_argument("--censor-mean1", type=float)
    p_sim.add_argument("--censor-target", type=float, default=0.4)
    _add_grid_flags(p_sim, default_interval="0.1,0.9")
    _add_bandwidth_flags(p_sim)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--threads", type=int,
                       help="worker processes (default: MARKTAU_THREADS or 1)")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_pow = sub.add_parser("power", help="rejection-rate sweep across c3")
    p_pow.add_argument("--kind", choices=["global", "constancy"], required=True)
    p_pow.add_argument("--c3-range", required=True, metavar="LO:HI:STEP")
    p_pow.add_argument("--c1", type=float, default=3.0)
    p_pow.add_argument("--c2", type=float, default=0.0)
    p_pow.add_argument("--n", type=int, required=True)
    p_pow.add_argument("--p-treat", type=float, default=2.0 / 3.0)
    p_pow.add_argument("--censor-mean0", type=float)
    p_pow.add_argument("--censor-mean1", type=float)
    p_pow.add_argument("--censor-target", type=float, default=0.4)
    _add_grid_flags(p_pow, default_interval="0.1,0.9")
    _add_bandwidth_flags(p_pow)
    p_pow.add_argument("--alpha", type=float, default=0.05)
    p_pow.add_argument("--reps", type=int, default=500)
    p_pow.add_argument("--resamples", type=int, default=500, metavar="B")
    p_pow.add_argument("--seed", type=int, default=0)
    p_pow.add_argument("--threads", type=int,
                       help="worker processes (default: MARKTAU_THREADS or 1)")
    p_pow.add_argument("--out", required=True, help="output CSV path")
    p_pow.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
