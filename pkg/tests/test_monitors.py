import numpy as np
import pytest

from conftest import smooth_random_state
from sns.grid import charge, l4_norm_pow4, laplacian, make_state, sobolev_norm, sobolev_seminorm
from sns.monitors import (
    MonitorRecord,
    decay_check,
    energy,
    exp_moment_estimate,
    lyapunov_f,
    make_record,
)


def record(t, q, H=0.0):
    return MonitorRecord(t=t, charge=q, energy_H=H, h1_norm=0.0, h2_norm=0.0, exp_arg=H)


class TestEnergy:
    def test_zero_state(self, grid):
        assert energy(make_state(np.zeros(grid.N), grid), -1) == 0.0

    @pytest.mark.parametrize("lam", [-1, 1])
    def test_plane_wave_formula(self, grid, lam):
        A, j = 0.8, 5
        k = j * np.pi / grid.L
        u = make_state(A * np.exp(1j * k * grid.x), grid)
        expected = 0.5 * k**2 * A**2 * 2 * grid.L - 0.25 * lam * A**4 * 2 * grid.L
        assert energy(u, lam) == pytest.approx(expected, rel=1e-12)

    def test_defocusing_energy_nonnegative(self, grid):
        for seed in range(8):
            u = smooth_random_state(grid, np.random.default_rng(seed), scale=2.0)
            assert energy(u, -1) >= 0.0

    def test_matches_quadrature_oracle(self, grid):
        u = smooth_random_state(grid, np.random.default_rng(30))
        direct = 0.5 * sobolev_seminorm(u, 1) ** 2 + 0.25 * l4_norm_pow4(u)
        assert energy(u, -1) == pytest.approx(direct, rel=1e-12)


class TestLyapunov:
    def test_zero_state(self, grid):
        assert lyapunov_f(make_state(np.zeros(grid.N), grid), -1, 2) == 0.0

    @pytest.mark.parametrize("lam", [-1, 1])
    def test_pure_mode_s2(self, grid, lam):
        A, j = 0.6, 4
        k = j * np.pi / grid.L
        u = make_state(A * np.exp(1j * k * grid.x), grid)
        expected = k**4 * A**2 * 2 * grid.L - lam * k**2 * A**4 * 2 * grid.L
        assert lyapunov_f(u, lam, 2) == pytest.approx(expected, rel=1e-12)

    def test_matches_physical_space_oracle(self, grid):
        u = smooth_random_state(grid, np.random.default_rng(31))
        # oracle: apply -laplacian (s-1) times, pair with |u|^2 u by quadrature
        minus_lap = make_state(-laplacian(u).values, grid)
        cubic = np.abs(u.values) ** 2 * u.values
        pairing = grid.h * np.sum((np.conj(minus_lap.values) * cubic).real)
        direct = sobolev_seminorm(u, 2) ** 2 - (-1) * pairing
        assert lyapunov_f(u, -1, 2) == pytest.approx(direct, rel=1e-10)

    @pytest.mark.parametrize("s", [0, 1, 5])
    def test_rejects_unsupported_order(self, grid, s):
        u = make_state(np.zeros(grid.N), grid)
        with pytest.raises(ValueError):
            lyapunov_f(u, -1, s)


class TestMakeRecord:
    def test_fields_consistent_with_norms(self, grid):
        u = smooth_random_state(grid, np.random.default_rng(32))
        rec = make_record(u, 0.5, -1, beta=2.0)
        assert rec.charge == pytest.approx(charge(u), rel=1e-12)
        assert rec.energy_H == pytest.approx(energy(u, -1), rel=1e-12)
        assert rec.h1_norm == pytest.approx(sobolev_norm(u, 1), rel=1e-12)
        assert rec.h2_norm == pytest.approx(sobolev_norm(u, 2), rel=1e-12)
        assert rec.exp_arg == pytest.approx(np.exp(-1.0) * rec.energy_H, rel=1e-12)


class TestDecayCheck:
    def test_conservative_is_flat(self):
        records = [record(t, 2.0) for t in np.linspace(0, 4, 9)]
        verdict = decay_check(records, a=0.0)
        assert verdict.passed
        assert verdict.worst_ratio == pytest.approx(1.0)

    def test_damped_envelope_passes(self):
        records = [record(t, 2.0 * np.exp(-1.0 * t) * (1 - 1e-12)) for t in np.linspace(0, 4, 9)]
        assert decay_check(records, a=0.5).passed

    def test_tampered_record_flagged(self):
        times = np.linspace(0, 4, 9)
        records = [record(t, 2.0 * np.exp(-1.0 * t)) for t in times]
        records[6] = record(times[6], records[6].charge * 1.5)
        verdict = decay_check(records, a=0.5)
        assert not verdict.passed
        assert verdict.worst_index == 6
        assert verdict.worst_ratio == pytest.approx(1.5, rel=1e-9)

    def test_deterministic(self):
        records = [record(t, np.exp(-t)) for t in np.linspace(0, 1, 5)]
        a = decay_check(records, a=0.5)
        b = decay_check(records, a=0.5)
        assert a == b

    def test_requires_t0(self):
        with pytest.raises(ValueError):
            decay_check([record(1.0, 1.0)], a=0.5)


class TestExpMoment:
    def test_all_zero_states(self):
        samples = [[record(t, 0.0, H=0.0) for t in (0.0, 1.0, 2.0)] for _ in range(4)]
        series = exp_moment_estimate(samples, beta=1.0)
        assert np.allclose(series.mean_exp, 1.0)
        assert np.allclose(series.running_max, 1.0)

    def test_single_sample_is_exact(self):
        recs = [record(t, 1.0, H=0.3 + 0.1 * t) for t in (0.0, 0.5, 1.0)]
        series = exp_moment_estimate([recs], beta=2.0)
        expected = [np.exp(np.exp(-2.0 * r.t) * r.energy_H) for r in recs]
        assert series.mean_exp == pytest.approx(expected, rel=1e-14)

    def test_overflow_reported_as_inf(self):
        recs = [record(0.0, 1.0, H=800.0), record(1.0, 1.0, H=1.0)]
        series = exp_moment_estimate([recs, recs], beta=1.0)
        assert np.isinf(series.mean_exp[0])
        assert np.isfinite(series.mean_exp[1])
        assert np.isinf(series.running_max[-1])

    def test_mismatched_schedules_rejected(self):
        a = [record(0.0, 1.0), record(1.0, 1.0)]
        b = [record(0.0, 1.0), record(2.0, 1.0)]
        with pytest.raises(ValueError):
            exp_moment_estimate([a, b], beta=1.0)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            exp_moment_estimate([[record(0.0, 1.0)]], beta=0.0)
