import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besovns.elliptic import (
    CoefficientField,
    NonConvergenceError,
    SolverTimeoutError,
    choose_cutoff,
    elliptic_estimate_check,
    solve_pressure,
)
from besovns.spectral import ParameterError, TorusGrid, divergence, gradient, leray_project
from oracles import dense_pressure_gradient


def coefficient(grid, rng, amplitude, kmax=4):
    F = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * (grid.kmag <= kmax)
    a = grid.ifft(F).real
    return amplitude * a / np.abs(a).max()


def residual(grid, a, F, grad_pi):
    lhs = divergence(grid, grid.fft((1 + a) * grad_pi))
    return np.abs(grid.ifft(lhs - divergence(grid, grid.fft(F)))).max()


class TestZeroCoefficient:
    def test_single_mode(self):
        g = TorusGrid((32, 32))
        x, y = g.mesh()
        F = np.stack([np.cos(x + 2 * y), np.zeros(g.shape)])
        sol = solve_pressure(CoefficientField.zero(g), F)
        expected = np.stack([np.cos(x + 2 * y), 2 * np.cos(x + 2 * y)]) / 5
        assert np.abs(sol.grad_pi - expected).max() <= 1e-12

    def test_gradient_part(self, rng):
        g = TorusGrid((32, 32))
        F = rng.standard_normal((2,) + g.shape)
        sol = solve_pressure(CoefficientField.zero(g), F)
        Fh = g.fft(F)
        Q = Fh - leray_project(g, Fh)
        # modes carrying a Nyquist index are outside the range of the discrete gradient
        keep = ~g.nyquist
        assert np.abs(g.fft(sol.grad_pi)[:, keep] - Q[:, keep]).max() <= 1e-14

    def test_divergence_free_source(self, rng):
        g = TorusGrid((16, 16))
        psi = g.fft(rng.standard_normal(g.shape))
        G = gradient(g, psi)
        F = g.ifft(np.stack([-G[1], G[0]]))
        sol = solve_pressure(CoefficientField(g, coefficient(g, rng, 0.1)), F)
        assert np.abs(sol.grad_pi).max() <= 1e-12


class TestVariableCoefficient:
    @pytest.mark.parametrize("amp", [0.05, 0.3, 0.6])
    def test_dense_oracle(self, amp, rng):
        g = TorusGrid((16, 16))
        a = coefficient(g, rng, amp)
        F = rng.standard_normal((2,) + g.shape)
        sol = solve_pressure(CoefficientField(g, a), F, tol=1e-14, max_iter=2000)
        assert np.abs(sol.grad_pi - dense_pressure_gradient(a, F)).max() <= 1e-9

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.01, 0.1))
    def test_geometric_convergence(self, seed, amp):
        g = TorusGrid((32, 32))
        rng = np.random.default_rng(seed)
        a = coefficient(g, rng, amp)
        F = rng.standard_normal((2,) + g.shape)
        sol = solve_pressure(CoefficientField(g, a), F, tol=1e-10)
        res = [h[1] for h in sol.history]
        assert sol.residual <= 1e-10
        assert all(b < a_ for a_, b in zip(res, res[1:]))
        assert sol.contraction <= amp * 1.5
        assert residual(g, a, F, sol.grad_pi) <= 1e-8 * np.abs(F).max()

    def test_curl_free_and_mean_zero(self, rng):
        g = TorusGrid((32, 32))
        a = coefficient(g, rng, 0.1)
        sol = solve_pressure(CoefficientField(g, a), rng.standard_normal((2,) + g.shape))
        G = g.fft(sol.grad_pi)
        curl = gradient(g, G[1])[0] - gradient(g, G[0])[1]
        assert np.abs(curl).max() <= 1e-12
        assert np.abs(sol.grad_pi.mean(axis=(1, 2))).max() <= 1e-14

    def test_warm_start(self, rng):
        g = TorusGrid((32, 32))
        coef = CoefficientField(g, coefficient(g, rng, 0.1))
        F = rng.standard_normal((2,) + g.shape)
        cold = solve_pressure(coef, F, tol=1e-12)
        warm = solve_pressure(coef, F, tol=1e-12, pi0=cold.pi)
        assert warm.iterations <= 1

    def test_divergence_reported(self, rng):
        g = TorusGrid((16, 16))
        a = 0.1 + coefficient(g, rng, 4.0)
        a = np.maximum(a, -0.9)
        with pytest.raises(NonConvergenceError, match="diverges") as info:
            solve_pressure(CoefficientField(g, a), rng.standard_normal((2,) + g.shape))
        assert info.value.contraction >= 1

    def test_timeout(self, rng):
        g = TorusGrid((16, 16))
        a = coefficient(g, rng, 0.3)
        with pytest.raises(SolverTimeoutError):
            solve_pressure(CoefficientField(g, a), rng.standard_normal((2,) + g.shape), tol=1e-14, max_iter=2)

    def test_nonpositive_coefficient(self):
        g = TorusGrid((8, 8))
        with pytest.raises(ParameterError):
            CoefficientField(g, -np.ones(g.shape))


class TestCutoff:
    def test_zero_field(self):
        g = TorusGrid((32, 32))
        assert choose_cutoff(g, np.zeros(g.shape)) == -1

    def test_monotone_in_c(self, rng):
        g = TorusGrid((32, 32))
        a = coefficient(g, rng, 0.2, kmax=12)
        ms = [choose_cutoff(g, a, c) for c in (10.0, 1.0, 0.1, 0.01, 1e-6)]
        assert ms == sorted(ms)
        assert ms[-1] <= 4 + 1

    def test_tail_condition(self, rng):
        g = TorusGrid((32, 32))
        a = coefficient(g, rng, 0.2, kmax=12)
        coef = CoefficientField(g, a, c=0.05)
        hp = coef.high_part()
        from besovns.littlewood_paley import DyadicDecomposition

        dec = DyadicDecomposition(g, hp)
        mask = dec.levels >= coef.m
        tail = np.sum(2.0 ** dec.levels[mask] * dec.norms(2)[mask])
        assert 2 * tail <= 0.05 + 1e-15

    def test_margin_sign(self, rng):
        g = TorusGrid((32, 32))
        a = coefficient(g, rng, 0.1, kmax=3)
        assert CoefficientField(g, a, m=-1).smallness_margin() < 0
        assert CoefficientField(g, a, m=-1).tail_norm() > CoefficientField(g, a).tail_norm()


class TestEstimate:
    @pytest.mark.parametrize("sigma", [0.5, 0.75, 1.0, 1.5])
    def test_ratio_bounded(self, sigma, rng):
        g = TorusGrid((32, 32))
        rep = None
        for _ in range(4):
            coef = CoefficientField(g, coefficient(g, rng, 0.1))
            rep = elliptic_estimate_check(coef, rng.standard_normal((2,) + g.shape), sigma, 0.5, report=rep)
        assert max(rep.ratios) <= 2.0

    def test_index_range(self, rng):
        g = TorusGrid((16, 16))
        coef = CoefficientField(g, coefficient(g, rng, 0.1))
        with pytest.raises(ParameterError):
            elliptic_estimate_check(coef, rng.standard_normal((2,) + g.shape), 0.25, 0.5)
        with pytest.raises(ParameterError):
            elliptic_estimate_check(coef, rng.standard_normal((2,) + g.shape), 0.5, 1.0)
