"""Truncated Q-Wiener noise model, damping profiles, and increment sampling.

The driving noise is W(t) = sum_k sqrt(q_k) e_k beta_k(t) truncated at K
modes, with the trigonometric eigenbasis

    e_1 = 1/sqrt(2L),   e_{2m} = cos(m pi x / L)/sqrt(L),
                        e_{2m+1} = sin(m pi x / L)/sqrt(L),

which is discretely orthonormal on the uniform mesh as long as frequencies
stay below Nyquist, and eigenvalues q_k = amplitude * k^{-r}.  The pointwise
intensity F_Q(x) = sum_k f_k(x)^2 with f_k = sqrt(q_k) e_k enters both the
damping condition and the exact stochastic substep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec

__all__ = [
    "NoiseModel",
    "WienerIncrement",
    "DampingProfile",
    "build_noise",
    "damping_margin",
    "sample_increment",
    "sample_increment_block",
    "sample_stream",
]

MIN_DECAY_EXPONENT = 3.0


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Truncated Q-Wiener representation on a fixed grid.

    Attributes:
        grid: the mesh all mode functions are sampled on.
        K: number of retained modes (may be 0: deterministic dynamics).
        amplitude: eigenvalue scale, q_k = amplitude * k^{-r}.
        r: eigenvalue decay exponent (>= 3).
        basis: (K, N) orthonormal eigenfunctions e_k.
        modes: (K, N) scaled modes f_k = sqrt(q_k) e_k.
        q: (K,) eigenvalues, nonincreasing.
        fq: (N,) pointwise intensity F_Q = sum_k f_k^2, nonnegative.
    """

    grid: GridSpec
    K: int
    amplitude: float
    r: float
    basis: np.ndarray
    modes: np.ndarray
    q: np.ndarray
    fq: np.ndarray


@dataclass(frozen=True, eq=False)
class WienerIncrement:
    """Real-valued field W(t+tau) - W(t) sampled on the grid."""

    values: np.ndarray
    tau: float


@dataclass(frozen=True, eq=False)
class DampingProfile:
    """Damping field alpha(x) and its margin over the noise intensity.

    margin = min_x (alpha(x) - F_Q(x)/2).  A positive margin is the standing
    damping assumption; margin 0 is the charge-conserving case.
    """

    alpha: np.ndarray
    fq: np.ndarray
    margin: float

    @property
    def damped(self) -> bool:
        return self.margin > 0.0


def build_noise(grid: GridSpec, K: int, amplitude: float, r: float) -> NoiseModel:
    """Assemble the truncated noise model with power-law eigenvalues.

    Rejects r < 3: slower decay breaks the square-summability the solution
    theory rests on (sum q_k (1+k^2)^s must converge for the Sobolev orders
    the experiments track).
    """
    if K < 0:
        raise ValueError(f"mode count must be nonnegative, got K={K}")
    if amplitude < 0:
        raise ValueError(f"noise amplitude must be nonnegative, got {amplitude}")
    if r < MIN_DECAY_EXPONENT:
        raise ValueError(
            f"eigenvalue decay r={r} too slow: need r >= {MIN_DECAY_EXPONENT} "
            "so that the noise keeps the regularity the scheme assumes"
        )
    if K > grid.N // 2:
        raise ValueError(f"K={K} modes cannot be represented on N={grid.N} points")

    basis = np.empty((K, grid.N))
    for idx in range(K):
        mode = idx + 1
        if mode == 1:
            basis[idx] = 1.0 / np.sqrt(2.0 * grid.L)
        else:
            freq = mode // 2
            phase = freq * np.pi * grid.x / grid.L
            trig = np.cos(phase) if mode % 2 == 0 else np.sin(phase)
            basis[idx] = trig / np.sqrt(grid.L)

    q = amplitude * np.arange(1, K + 1, dtype=np.float64) ** (-r)
    modes = np.sqrt(q)[:, None] * basis
    fq = np.sum(modes * modes, axis=0) if K > 0 else np.zeros(grid.N)
    return NoiseModel(
        grid=grid,
        K=int(K),
        amplitude=float(amplitude),
        r=float(r),
        basis=basis,
        modes=modes,
        q=q,
        fq=fq,
    )


def damping_margin(alpha: np.ndarray, model: NoiseModel) -> DampingProfile:
    """Damping profile for a given alpha(x) against a noise model.

    The margin may come out nonpositive; callers that require actual damping
    must check ``profile.damped`` themselves.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (model.grid.N,):
        raise ValueError(f"alpha has shape {a.shape}, grid expects ({model.grid.N},)")
    if not np.all(np.isfinite(a)):
        raise ValueError("alpha contains non-finite entries")
    margin = float(np.min(a - 0.5 * model.fq))
    return DampingProfile(alpha=a, fq=model.fq, margin=margin)


def sample_increment(
    model: NoiseModel, tau: float, rng: np.random.Generator
) -> WienerIncrement:
    """One Wiener increment over a step of length tau.

    Draws K independent standard normals xi_k from ``rng`` and returns
    sum_k f_k sqrt(tau) xi_k, so Var[dW(x)] = tau * F_Q(x).
    """
    return WienerIncrement(
        values=sample_increment_block(model, tau, 1, rng)[0], tau=float(tau)
    )


def sample_increment_block(
    model: NoiseModel, tau: float, steps: int, rng: np.random.Generator
) -> np.ndarray:
    """(steps, N) array of consecutive increments.

    Consumes the stream exactly like ``steps`` successive sample_increment
    calls (the underlying normal draws coincide; the mode products may
    differ in the last floating-point bits across batch shapes).
    """
    if tau <= 0:
        raise ValueError(f"step size must be positive, got tau={tau}")
    if model.K == 0:
        return np.zeros((steps, model.grid.N))
    xi = rng.standard_normal((steps, model.K))
    return np.sqrt(tau) * (xi @ model.modes)


def sample_stream(master_seed: int, sample_index: int) -> np.random.Generator:
    """Private counter-based stream for one Monte Carlo sample.

    Streams are keyed by (master_seed, sample_index) through Philox, so the
    draw sequence of a sample is independent of how samples are scheduled
    across workers.
    """
    key = np.array(
        [np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF), np.uint64(sample_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
