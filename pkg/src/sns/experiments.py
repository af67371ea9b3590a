"""Monte Carlo convergence studies with coupled Brownian paths.

The reference and every coarse trajectory of a sample are driven by the same
fine-step Wiener increments: a coarse increment is the sum of the fine ones
it spans, so pathwise differences measure discretization error and the weak
estimator benefits from common random numbers.

Each sample owns a private counter-based stream keyed by (master_seed,
sample_index); aggregation runs in sample order, so every result is
independent of worker count and scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import StateVector, charge, l2_distance, sobolev_norm
from .monitors import MonitorRecord
from .noise import (
    DampingProfile,
    NoiseModel,
    WienerIncrement,
    sample_increment_block,
    sample_stream,
)
from .stepper import (
    NumericalFailure,
    SchemeParams,
    exact_linear_flow,
    propagate,
    run_trajectory,
)

__all__ = [
    "ProblemSetup",
    "TestFunctional",
    "FUNCTIONALS",
    "ErrorRow",
    "ErrorTable",
    "HorizonRow",
    "coupled_increments",
    "fit_order",
    "strong_study",
    "weak_study",
    "horizon_study",
    "sample_trajectories",
]

CONFIDENCE_FACTOR = 1.96  # two-sided 95% normal quantile
NOISE_FLOOR_MULTIPLE = 3.0  # weak rows below this many half-widths are not fit
MIN_STUDY_SAMPLES = 50


@dataclass(frozen=True, eq=False)
class ProblemSetup:
    """Everything a sample worker needs to integrate one trajectory."""

    model: NoiseModel
    damping: DampingProfile
    u0: StateVector
    lam: int
    fp_tol: float | None
    fp_max_iters: int
    master_seed: int

    def params(self, tau: float, M: int) -> SchemeParams:
        return SchemeParams(
            tau=tau,
            M=M,
            lam=self.lam,
            fp_tol=self.fp_tol,
            fp_max_iters=self.fp_max_iters,
            master_seed=self.master_seed,
        )


@dataclass(frozen=True)
class TestFunctional:
    """Bounded smooth observable for the weak-error study."""

    name: str
    evaluate: Callable[[StateVector], float]


def _phi_exp_neg_charge(u: StateVector) -> float:
    return float(np.exp(-charge(u)))


def _phi_smoothed_h1(u: StateVector) -> float:
    n1 = sobolev_norm(u, 1)
    return 1.0 / (1.0 + n1 * n1)


FUNCTIONALS = {
    "exp_neg_charge": TestFunctional("exp_neg_charge", _phi_exp_neg_charge),
    "smoothed_h1": TestFunctional("smoothed_h1", _phi_smoothed_h1),
}


@dataclass(frozen=True)
class ErrorRow:
    tau: float
    error: float
    half_width: float
    used_in_fit: bool


@dataclass
class ErrorTable:
    """Error-versus-step-size table with its log-log fit.

    Rows are sorted by decreasing tau.  The slope is the least-squares fit of
    log(error) against log(tau) over the rows flagged used_in_fit; it is NaN
    when fewer than two rows qualify (degenerate study).  ``extras`` carries
    non-serialized diagnostics.
    """

    rows: list[ErrorRow]
    fitted_slope: float
    fitted_intercept: float
    sample_count: int
    reference_tau: float
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HorizonRow:
    T: float
    error: float
    half_width: float


def coupled_increments(
    fine_increments: Sequence[WienerIncrement], ratio: int
) -> list[WienerIncrement]:
    """Aggregate fine increments into coarse ones; ratio=1 is the identity.

    Coarse increment j sums fine increments [j*ratio, (j+1)*ratio), and the
    coarse step is ratio times the fine step.
    """
    if ratio < 1:
        raise ValueError(f"ratio must be a positive integer, got {ratio}")
    n = len(fine_increments)
    if n % ratio != 0:
        raise ValueError(f"{n} fine increments do not split into groups of {ratio}")
    if n == 0:
        return []
    stack = np.stack([w.values for w in fine_increments])
    sums = _group_sum(stack, ratio)
    tau_coarse = ratio * fine_increments[0].tau
    return [WienerIncrement(values=sums[j], tau=tau_coarse) for j in range(len(sums))]


def _group_sum(increments: np.ndarray, ratio: int) -> np.ndarray:
    """Sum consecutive groups of ``ratio`` rows, accumulating left to right."""
    out = increments[0::ratio].copy()
    for j in range(1, ratio):
        out += increments[j::ratio]
    return out


def fit_order(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Ordinary least squares of log(error) against log(tau)."""
    if len(points) < 2:
        raise ValueError(f"need at least two points to fit an order, got {len(points)}")
    taus = np.array([p[0] for p in points], dtype=np.float64)
    errs = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(taus <= 0) or np.any(errs <= 0):
        raise ValueError("order fit requires positive step sizes and errors")
    slope, intercept = np.polyfit(np.log(taus), np.log(errs), 1)
    return float(slope), float(intercept)


def _steps(T: float, tau: float, what: str) -> int:
    m = round(T / tau)
    if m < 1 or abs(m * tau - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"{what}={tau} does not divide the horizon T={T}")
    return m


def _ratio(tau: float, tau_ref: float) -> int:
    r = tau / tau_ref
    ir = round(r)
    if ir < 1 or abs(r - ir) > 1e-9 * max(ir, 1):
        raise ValueError(f"tau_list entry {tau} is not an integer multiple of tau_ref={tau_ref}")
    return ir


def _check_study_args(tau_list: Sequence[float], tau_ref: float, samples: int) -> None:
    if len(tau_list) == 0:
        raise ValueError("tau_list is empty")
    if any(t <= 0 for t in tau_list):
        raise ValueError("tau_list entries must be positive")
    if any(a <= b for a, b in zip(tau_list, tau_list[1:])):
        raise ValueError("tau_list must be strictly decreasing")
    for tau in tau_list:
        _ratio(tau, tau_ref)  # ratio 1 is allowed: it realizes exact coupling
    if samples < MIN_STUDY_SAMPLES:
        raise ValueError(f"need at least {MIN_STUDY_SAMPLES} samples, got {samples}")


def _pmap(fn, tasks: list, workers: int) -> list:
    """Order-preserving map over tasks, optionally across processes."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _commuting_constants(setup: ProblemSetup) -> tuple[float, float]:
    """Validate the exactly solvable configuration and pull (a0, c) from it."""
    if setup.lam != 0:
        raise ValueError("exact reference requires lam = 0")
    if setup.model.K != 1:
        raise ValueError("exact reference requires a single noise mode")
    mode = setup.model.modes[0]
    if np.ptp(mode) > 1e-12 * (1.0 + abs(mode[0])):
        raise ValueError("exact reference requires a constant noise mode")
    alpha = setup.damping.alpha
    if np.ptp(alpha) > 1e-12 * (1.0 + abs(alpha[0])):
        raise ValueError("exact reference requires constant damping")
    return float(alpha[0]), float(mode[0])


def _strong_sample(args) -> np.ndarray:
    setup, T, tau_list, tau_ref, reference, index = args
    try:
        rng = sample_stream(setup.master_seed, index)
        m_ref = _steps(T, tau_ref, "tau_ref")
        fine = sample_increment_block(setup.model, tau_ref, m_ref, rng)
        ratios = [_ratio(tau, tau_ref) for tau in tau_list]

        if reference == "fine":
            needed = frozenset(
                m * r for r in ratios for m in range(1, m_ref // r + 1)
            )
            _, ref_states = propagate(
                setup.u0,
                fine,
                setup.params(tau_ref, m_ref),
                setup.damping,
                setup.model,
                needed,
            )
        else:
            a0, c = _commuting_constants(setup)
            # Scalar Brownian path at fine times, recovered from the constant
            # increment fields.
            scalar = fine[:, 0] / c if c != 0.0 else np.zeros(m_ref)
            brownian = np.cumsum(scalar)

        sup_sq = np.empty(len(tau_list))
        for j, (tau, ratio) in enumerate(zip(tau_list, ratios)):
            coarse = _group_sum(fine, ratio)
            mc = coarse.shape[0]
            _, states = propagate(
                setup.u0,
                coarse,
                setup.params(tau, mc),
                setup.damping,
                setup.model,
                frozenset(range(1, mc + 1)),
            )
            worst = 0.0
            for m in range(1, mc + 1):
                if reference == "fine":
                    ref = ref_states[m * ratio]
                else:
                    ref = exact_linear_flow(
                        setup.u0, m * tau, a0, c, brownian[m * ratio - 1]
                    )
                d = l2_distance(states[m], ref)
                worst = max(worst, d * d)
            sup_sq[j] = worst
        return sup_sq
    except NumericalFailure as exc:
        raise type(exc)(f"sample {index}, tau sweep: {exc}") from exc


def _weak_sample(args) -> tuple[float, np.ndarray]:
    setup, T, phi_name, tau_list, tau_ref, index = args
    try:
        phi = FUNCTIONALS[phi_name].evaluate
        rng = sample_stream(setup.master_seed, index)
        m_ref = _steps(T, tau_ref, "tau_ref")
        fine = sample_increment_block(setup.model, tau_ref, m_ref, rng)
        ref_final, _ = propagate(
            setup.u0, fine, setup.params(tau_ref, m_ref), setup.damping, setup.model
        )
        values = np.empty(len(tau_list))
        for j, tau in enumerate(tau_list):
            ratio = _ratio(tau, tau_ref)
            coarse = _group_sum(fine, ratio)
            final, _ = propagate(
                setup.u0,
                coarse,
                setup.params(tau, coarse.shape[0]),
                setup.damping,
                setup.model,
            )
            values[j] = phi(final)
        return phi(ref_final), values
    except NumericalFailure as exc:
        raise type(exc)(f"sample {index}, tau sweep: {exc}") from exc


def _horizon_sample(args) -> np.ndarray:
    setup, tau, horizons, tau_ref, index = args
    try:
        rng = sample_stream(setup.master_seed, index)
        t_max = horizons[-1]
        m_ref = _steps(t_max, tau_ref, "tau_ref")
        ratio = _ratio(tau, tau_ref)
        fine = sample_increment_block(setup.model, tau_ref, m_ref, rng)
        ref_marks = frozenset(_steps(t, tau_ref, "tau_ref") for t in horizons)
        _, ref_states = propagate(
            setup.u0,
            fine,
            setup.params(tau_ref, m_ref),
            setup.damping,
            setup.model,
            ref_marks,
        )
        coarse = _group_sum(fine, ratio)
        coarse_marks = frozenset(_steps(t, tau, "tau") for t in horizons)
        _, coarse_states = propagate(
            setup.u0,
            coarse,
            setup.params(tau, coarse.shape[0]),
            setup.damping,
            setup.model,
            coarse_marks,
        )
        out = np.empty(len(horizons))
        for j, t in enumerate(horizons):
            d = l2_distance(
                coarse_states[_steps(t, tau, "tau")],
                ref_states[_steps(t, tau_ref, "tau_ref")],
            )
            out[j] = d * d
        return out
    except NumericalFailure as exc:
        raise type(exc)(f"sample {index}, horizon sweep: {exc}") from exc


def _trajectory_sample(args) -> list[MonitorRecord]:
    setup, tau, M, record_every, beta, index = args
    try:
        rng = sample_stream(setup.master_seed, index)
        _, records = run_trajectory(
            setup.u0,
            setup.params(tau, M),
            setup.damping,
            setup.model,
            rng,
            record_every=record_every,
            beta=beta,
        )
        return records
    except NumericalFailure as exc:
        raise type(exc)(f"sample {index}: {exc}") from exc


def _assemble_table(
    tau_list: Sequence[float],
    errors: np.ndarray,
    half_widths: np.ndarray,
    used: np.ndarray,
    samples: int,
    tau_ref: float,
    extras: dict | None = None,
) -> ErrorTable:
    rows = [
        ErrorRow(float(t), float(e), float(hw), bool(u))
        for t, e, hw, u in zip(tau_list, errors, half_widths, used)
    ]
    fit_points = [(r.tau, r.error) for r in rows if r.used_in_fit]
    if len(fit_points) >= 2:
        slope, intercept = fit_order(fit_points)
    else:
        slope, intercept = math.nan, math.nan
    return ErrorTable(
        rows=rows,
        fitted_slope=slope,
        fitted_intercept=intercept,
        sample_count=samples,
        reference_tau=tau_ref,
        extras=extras or {},
    )


def strong_study(
    setup: ProblemSetup,
    T: float,
    tau_list: Sequence[float],
    tau_ref: float,
    samples: int,
    workers: int = 1,
    reference: str = "fine",
) -> ErrorTable:
    """Root-mean-square of the pathwise sup-over-time L2 error per step size.

    error(tau) = (mean over samples of max_m ||u_ref(t_m) - u_tau(t_m)||^2)^{1/2}
    with the reference either the same scheme at tau_ref ("fine") or the
    closed-form commuting flow ("exact").  Half-widths are 95% confidence
    radii mapped through the square root.
    """
    if reference not in ("fine", "exact"):
        raise ValueError(f"unknown reference kind {reference!r}")
    _check_study_args(tau_list, tau_ref, samples)
    if reference == "exact":
        _commuting_constants(setup)
    tasks = [(setup, T, tuple(tau_list), tau_ref, reference, i) for i in range(samples)]
    sup_sq = np.stack(_pmap(_strong_sample, tasks, workers))
    mean_sq = np.mean(sup_sq, axis=0)
    hw_mean = CONFIDENCE_FACTOR * np.std(sup_sq, axis=0, ddof=1) / np.sqrt(samples)
    errors = np.sqrt(mean_sq)
    half_widths = np.where(errors > 0, hw_mean / np.maximum(2.0 * errors, 1e-300), 0.0)
    used = errors > 0
    return _assemble_table(tau_list, errors, half_widths, used, samples, tau_ref)


def weak_study(
    setup: ProblemSetup,
    T: float,
    phi: TestFunctional,
    tau_list: Sequence[float],
    tau_ref: float,
    samples: int,
    workers: int = 1,
) -> ErrorTable:
    """Weak error |E[phi(u_ref(T))] - E[phi(u_tau(T))]| per step size.

    Both expectations use the same coupled samples (common random numbers);
    the half-width comes from the sample variance of the pairwise
    differences.  Rows whose error does not exceed three half-widths are
    flagged as drowned by Monte Carlo noise and excluded from the fit; the
    flag is kept in the table rather than silently dropped.
    """
    if phi.name not in FUNCTIONALS:
        raise ValueError(f"unknown test functional {phi.name!r}")
    _check_study_args(tau_list, tau_ref, samples)
    tasks = [(setup, T, phi.name, tuple(tau_list), tau_ref, i) for i in range(samples)]
    results = _pmap(_weak_sample, tasks, workers)
    phi_ref = np.array([r[0] for r in results])
    phi_coarse = np.stack([r[1] for r in results])
    diffs = phi_ref[:, None] - phi_coarse
    errors = np.abs(np.mean(diffs, axis=0))
    half_widths = CONFIDENCE_FACTOR * np.std(diffs, axis=0, ddof=1) / np.sqrt(samples)
    used = errors > NOISE_FLOOR_MULTIPLE * half_widths
    indep_hw = CONFIDENCE_FACTOR * np.sqrt(
        (np.var(phi_ref, ddof=1) + np.var(phi_coarse, axis=0, ddof=1)) / samples
    )
    extras = {"independent_half_widths": indep_hw.tolist()}
    return _assemble_table(
        tau_list, errors, half_widths, used, samples, tau_ref, extras
    )


def horizon_study(
    setup: ProblemSetup,
    tau: float,
    horizons: Sequence[float],
    tau_ref: float,
    samples: int,
    workers: int = 1,
) -> list[HorizonRow]:
    """Strong error at the final time only, across increasing horizons.

    Operationalizes the time-independence of the strong-error constant: for
    damped configurations the reported errors should not grow with T.
    Undamped configurations run too, for contrast; no bound is implied then.
    """
    if len(horizons) == 0:
        raise ValueError("need at least one horizon")
    if any(a >= b for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing")
    _ratio(tau, tau_ref)
    for t in horizons:
        _steps(t, tau, "tau")
    if samples < 1:
        raise ValueError("need at least one sample")
    tasks = [(setup, tau, tuple(horizons), tau_ref, i) for i in range(samples)]
    sq = np.stack(_pmap(_horizon_sample, tasks, workers))
    mean_sq = np.mean(sq, axis=0)
    hw_mean = CONFIDENCE_FACTOR * np.std(sq, axis=0, ddof=1) / np.sqrt(samples)
    errors = np.sqrt(mean_sq)
    half_widths = np.where(errors > 0, hw_mean / np.maximum(2.0 * errors, 1e-300), 0.0)
    return [
        HorizonRow(float(t), float(e), float(hw))
        for t, e, hw in zip(horizons, errors, half_widths)
    ]


def sample_trajectories(
    setup: ProblemSetup,
    tau: float,
    M: int,
    samples: int,
    record_every: int = 1,
    beta: float = 1.0,
    workers: int = 1,
) -> list[list[MonitorRecord]]:
    """Monitor records of ``samples`` independent trajectories, in sample order."""
    tasks = [(setup, tau, M, record_every, beta, i) for i in range(samples)]
    return _pmap(_trajectory_sample, tasks, workers)
