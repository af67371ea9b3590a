"""Command-line front end: simulate / decay-check / strong-order /
weak-order / horizon / exp-moment.

Every run writes its artifacts plus a manifest (resolved config, config
hash, seed, versions, derived fields) into the configured output directory.
Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3
acceptance gate failed under --assert.  The worker count is a CLI flag, not
a config key, and never changes any output byte.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys

import numpy as np

from . import __version__
from .config import (
    COMMANDS,
    ConfigError,
    Problem,
    RunConfig,
    build_problem,
    parse_config,
    render_value,
    validate_for_command,
)
from .experiments import (
    FUNCTIONALS,
    horizon_study,
    sample_trajectories,
    strong_study,
    weak_study,
)
from .monitors import decay_check, exp_moment_estimate
from .noise import sample_stream
from .output import (
    write_errors_csv,
    write_expmoment_csv,
    write_fit_json,
    write_horizon_csv,
    write_json,
    write_monitors_csv,
)
from .stepper import NumericalFailure, run_trajectory

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_GATE = 3

DEFAULT_SLOPE_WINDOWS = {
    "strong-order": (0.35, 0.65),
    "weak-order": (0.75, 1.25),
}


def _out(config: RunConfig, name: str) -> str:
    import os

    return os.path.join(config.output_dir, name)


def _write_manifest(config: RunConfig, command: str, problem: Problem) -> None:
    manifest = {
        "command": command,
        "config": {k: render_value(v) for k, v in sorted(config.values.items()) if v is not None},
        "config_hash": config.config_hash,
        "master_seed": config.seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "sns": __version__,
        },
        "derived": {
            "h": problem.grid.h,
            "margin_a": problem.damping.margin,
            "fq": [float(v) for v in problem.model.fq],
            "alpha": [float(v) for v in problem.damping.alpha],
            "initial_charge": float(
                problem.grid.h * np.sum(np.abs(problem.u0.values) ** 2)
            ),
        },
    }
    write_json(_out(config, "manifest.json"), manifest)


def _slope_window(config: RunConfig, command: str) -> tuple[float, float]:
    lo, hi = DEFAULT_SLOPE_WINDOWS[command]
    v = config.values
    if v["experiment.slope_min"] is not None:
        lo = v["experiment.slope_min"]
    if v["experiment.slope_max"] is not None:
        hi = v["experiment.slope_max"]
    return lo, hi


def _cmd_simulate(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    rng = sample_stream(config.seed, 0)
    _, records = run_trajectory(
        problem.u0,
        problem.setup.params(v["scheme.tau"], v["scheme.M"]),
        problem.damping,
        problem.model,
        rng,
        record_every=v["experiment.record_every"],
        beta=v["experiment.beta"],
    )
    write_monitors_csv(_out(config, "monitors.csv"), records)
    return EXIT_OK


def _cmd_decay_check(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    tolerance = v["experiment.decay_tolerance"]
    if tolerance is None:
        tolerance = v["scheme.M"] * 1e-8
    all_records = sample_trajectories(
        problem.setup,
        v["scheme.tau"],
        v["scheme.M"],
        v["experiment.samples"],
        record_every=v["experiment.record_every"],
        beta=v["experiment.beta"],
        workers=workers,
    )
    margin = problem.damping.margin
    worst_ratio, worst_index, worst_sample = -math.inf, 0, 0
    passed = True
    for sample, records in enumerate(all_records):
        verdict = decay_check(records, margin, tolerance)
        passed = passed and verdict.passed
        if verdict.worst_ratio > worst_ratio:
            worst_ratio = verdict.worst_ratio
            worst_index = verdict.worst_index
            worst_sample = sample
    write_monitors_csv(_out(config, "monitors.csv"), all_records[0])
    write_json(
        _out(config, "verdict.json"),
        {
            "passed": passed,
            "worst_ratio": worst_ratio,
            "worst_index": worst_index,
            "worst_sample": worst_sample,
            "tolerance": tolerance,
            "margin_a": margin,
            "paths": v["experiment.samples"],
        },
    )
    if gate and not passed:
        print(
            f"decay gate failed: worst ratio {worst_ratio:.12g} at record "
            f"{worst_index} of sample {worst_sample}",
            file=sys.stderr,
        )
        return EXIT_GATE
    return EXIT_OK


def _cmd_strong(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    table = strong_study(
        problem.setup,
        v["scheme.T"],
        v["experiment.tau_list"],
        v["experiment.tau_ref"],
        v["experiment.samples"],
        workers=workers,
    )
    write_errors_csv(_out(config, "errors.csv"), table)
    write_fit_json(_out(config, "fit.json"), table, config.config_hash, config.seed)
    return _slope_gate(config, "strong-order", table.fitted_slope, gate)


def _cmd_weak(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    table = weak_study(
        problem.setup,
        v["scheme.T"],
        FUNCTIONALS[v["experiment.phi"]],
        v["experiment.tau_list"],
        v["experiment.tau_ref"],
        v["experiment.samples"],
        workers=workers,
    )
    write_errors_csv(_out(config, "errors.csv"), table)
    write_fit_json(_out(config, "fit.json"), table, config.config_hash, config.seed)
    return _slope_gate(config, "weak-order", table.fitted_slope, gate)


def _slope_gate(config: RunConfig, command: str, slope: float, gate: bool) -> int:
    if not gate:
        return EXIT_OK
    lo, hi = _slope_window(config, command)
    if math.isnan(slope) or not (lo <= slope <= hi):
        print(
            f"{command} gate failed: fitted slope {slope!r} outside [{lo}, {hi}]",
            file=sys.stderr,
        )
        return EXIT_GATE
    return EXIT_OK


def _cmd_horizon(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    rows = horizon_study(
        problem.setup,
        v["scheme.tau"],
        v["experiment.horizons"],
        v["experiment.tau_ref"],
        v["experiment.samples"],
        workers=workers,
    )
    write_horizon_csv(_out(config, "horizon.csv"), rows)
    ratio = rows[-1].error / rows[0].error if rows[0].error > 0 else math.inf
    write_json(
        _out(config, "horizon.json"),
        {
            "tau": v["scheme.tau"],
            "reference_tau": v["experiment.tau_ref"],
            "sample_count": v["experiment.samples"],
            "horizons": list(v["experiment.horizons"]),
            "errors": [r.error for r in rows],
            "last_over_first": ratio,
            "config_hash": config.config_hash,
            "master_seed": config.seed,
        },
    )
    if gate and not (ratio <= v["experiment.horizon_ratio_max"]):
        print(
            f"horizon gate failed: error({rows[-1].T})/error({rows[0].T}) = "
            f"{ratio:.6g} > {v['experiment.horizon_ratio_max']}",
            file=sys.stderr,
        )
        return EXIT_GATE
    return EXIT_OK


def _cmd_exp_moment(config: RunConfig, problem: Problem, workers: int, gate: bool) -> int:
    v = config.values
    beta = v["experiment.beta"]
    all_records = sample_trajectories(
        problem.setup,
        v["scheme.tau"],
        v["scheme.M"],
        v["experiment.samples"],
        record_every=v["experiment.record_every"],
        beta=beta,
        workers=workers,
    )
    series = exp_moment_estimate(all_records, beta)
    write_expmoment_csv(_out(config, "expmoment.csv"), series)
    horizon = v["scheme.T"]
    first = series.mean_exp[series.t <= 0.25 * horizon]
    last = series.mean_exp[series.t >= 0.75 * horizon]
    first_max = float(np.max(first)) if first.size else math.nan
    last_max = float(np.max(last)) if last.size else math.nan
    growth = last_max / first_max if first_max and math.isfinite(first_max) else math.inf
    finite = bool(np.all(np.isfinite(series.mean_exp)))
    write_json(
        _out(config, "expmoment.json"),
        {
            "beta": beta,
            "sample_count": v["experiment.samples"],
            "running_max_final": float(series.running_max[-1]),
            "first_quarter_max": first_max,
            "last_quarter_max": last_max,
            "growth": growth,
            "finite": finite,
            "config_hash": config.config_hash,
            "master_seed": config.seed,
        },
    )
    if gate and (not finite or not (growth <= v["experiment.expmom_growth_max"])):
        print(
            f"exp-moment gate failed: growth {growth:.6g} over limit "
            f"{v['experiment.expmom_growth_max']} (finite={finite})",
            file=sys.stderr,
        )
        return EXIT_GATE
    return EXIT_OK


_RUNNERS = {
    "simulate": _cmd_simulate,
    "decay-check": _cmd_decay_check,
    "strong-order": _cmd_strong,
    "weak-order": _cmd_weak,
    "horizon": _cmd_horizon,
    "exp-moment": _cmd_exp_moment,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sns",
        description="Splitting Crank-Nicolson runs for the damped stochastic NLS equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--workers", type=int, default=1, help="worker processes for sampling")
        p.add_argument(
            "--assert",
            dest="assert_gate",
            action="store_true",
            help="exit 3 when the run's acceptance gate fails",
        )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    try:
        config = parse_config(args.config)
        validate_for_command(config, args.command)
        problem = build_problem(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        code = _RUNNERS[args.command](config, problem, args.workers, args.assert_gate)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_manifest(config, args.command, problem)
    return code


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
