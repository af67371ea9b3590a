import numpy as np
import pytest

from sns.grid import GridSpec, StateVector, make_grid, make_state


@pytest.fixture
def grid() -> GridSpec:
    return make_grid(16.0, 128)


@pytest.fixture
def small_grid() -> GridSpec:
    return make_grid(8.0, 32)


def smooth_random_state(
    grid: GridSpec, rng: np.random.Generator, max_mode: int = 6, scale: float = 0.5
) -> StateVector:
    """Random band-limited field: only |j| <= max_mode Fourier modes carry mass.

    Smoothness is what the finite-difference and explicit-integrator oracles
    need; the band limit keeps their truncation errors far below the bounds
    under test.
    """
    coeffs = np.zeros(grid.N, dtype=np.complex128)
    for j in range(-max_mode, max_mode + 1):
        c = rng.standard_normal() + 1j * rng.standard_normal()
        coeffs[j % grid.N] = c * scale / (1.0 + j * j)
    values = np.fft.ifft(coeffs * grid.N)
    return make_state(values, grid)
