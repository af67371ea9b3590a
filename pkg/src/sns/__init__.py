"""Splitting Crank-Nicolson solver and Monte Carlo experiment harness for
the one-dimensional damped stochastic nonlinear Schrodinger equation with
multiplicative noise."""

__version__ = "0.1.0"

from .grid import (
    GridSpec,
    StateVector,
    charge,
    l4_norm_pow4,
    laplacian,
    make_grid,
    make_state,
    real_inner,
    sobolev_norm,
    sobolev_seminorm,
)
from .monitors import (
    DecayVerdict,
    MonitorRecord,
    decay_check,
    energy,
    exp_moment_estimate,
    lyapunov_f,
)
from .noise import (
    DampingProfile,
    NoiseModel,
    WienerIncrement,
    build_noise,
    damping_margin,
    sample_increment,
    sample_stream,
)
from .stepper import (
    FixedPointDivergence,
    NumericalFailure,
    SchemeParams,
    StepReport,
    cn_substep,
    exact_linear_flow,
    ou_substep,
    run_trajectory,
    split_step,
)
from .experiments import (
    ErrorTable,
    ProblemSetup,
    TestFunctional,
    coupled_increments,
    fit_order,
    horizon_study,
    strong_study,
    weak_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
