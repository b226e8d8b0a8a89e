import math
import warnings

import numpy as np
import pytest

from besovns.littlewood_paley import DyadicDecomposition
from besovns.navier_stokes import (
    BootstrapKnobs,
    BootstrapMonitor,
    MonitorBreachError,
    SolverConfig,
    energy,
    large_tail_density,
    run,
    scalar_field,
    scaling_check,
    smooth_data,
    solenoidal_field,
    stability_experiment,
    stokes_smoothing_terms,
    stokes_step,
    taylor_green,
)
from besovns.spectral import ParameterError, TorusGrid, divergence
from besovns.transport import CFLError
from oracles import duhamel_single_mode, taylor_green_velocity


@pytest.fixture(scope="module")
def g32():
    return TorusGrid((32, 32))


class TestStokes:
    @pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
    def test_duhamel_single_mode(self, g32, t):
        x, y = g32.mesh()
        mu = 0.3
        f = np.stack([np.sin(2 * y), np.zeros(g32.shape)])
        new, gp = stokes_step(g32, np.zeros((2,) + g32.shape, complex), f, mu, t)
        u = g32.ifft(new)
        assert np.abs(u[0] - duhamel_single_mode(mu, 4, t) * np.sin(2 * y)).max() <= 1e-14
        assert np.abs(u[1]).max() <= 1e-15
        assert np.abs(gp).max() <= 1e-15

    def test_gradient_force_goes_to_pressure(self, g32):
        x, y = g32.mesh()
        f = np.stack([np.cos(x + y), np.cos(x + y)])
        new, gp = stokes_step(g32, np.zeros((2,) + g32.shape, complex), f, 0.1, 0.5)
        assert np.abs(new).max() <= 1e-15
        assert np.abs(g32.ifft(gp) - f).max() <= 1e-14

    def test_free_decay(self, g32):
        u0 = taylor_green(g32)
        new, _ = stokes_step(g32, g32.fft(u0), None, 0.1, 0.7)
        assert np.abs(g32.ifft(new) - u0 * math.exp(-0.14)).max() <= 1e-14

    def test_smoothing_terms(self, g32):
        u0 = taylor_green(g32)
        small = stokes_smoothing_terms(g32, u0, None, 0.1, 1e-3)
        large = stokes_smoothing_terms(g32, u0, None, 0.1, 1e3)
        assert 0 < small < large
        assert large == pytest.approx(DyadicDecomposition(g32, u0).besov(0.0, 2, 2), rel=1e-12)


class TestDataFamilies:
    def test_scalar_field(self, g32):
        a = scalar_field(g32, seed=3, amplitude=0.2)
        assert np.abs(a).max() == pytest.approx(0.2)
        assert abs(a.mean()) <= 1e-15
        assert np.array_equal(a, scalar_field(g32, seed=3, amplitude=0.2))

    def test_solenoidal_field(self, g32):
        u = solenoidal_field(g32, seed=4, amplitude=0.5)
        assert np.sqrt((u**2).sum(0)).max() == pytest.approx(0.5)
        assert np.abs(g32.ifft(divergence(g32, g32.fft(u)))).max() <= 1e-13

    def test_large_tail_survives_dealiasing(self):
        g = TorusGrid((64, 64))
        a = large_tail_density(g)
        A = g.fft(a)
        assert np.abs(A[~g.dealias_mask]).max() <= 1e-15
        dec = DyadicDecomposition(g, a)
        norms = dec.norms(2)
        assert dec.levels[np.argmax(norms)] >= 3

    def test_smooth_data(self, g32):
        a = large_tail_density(g32, level=2)
        sa, none = smooth_data(g32, 1, a, None)
        assert none is None
        assert np.abs(sa).max() <= 1e-14


class TestRuns:
    def test_taylor_green_exact(self, g32):
        mu, T = 0.1, 0.5
        cfg = SolverConfig(mu=mu, dt=0.05, T=T)
        res = run(g32, np.zeros(g32.shape), taylor_green(g32), config=cfg)
        x, y = g32.mesh()
        assert np.abs(res.state.u - taylor_green_velocity(x, y, T, mu)).max() <= 1e-13
        assert np.abs(res.state.u_tilde).max() <= 1e-13
        # dissipation is a quadrature along the steps, so the balance is not exact
        assert res.energy_residual.max() <= 1e-9

    def test_zero_velocity_freezes_density(self, g32):
        a0 = scalar_field(g32, seed=1)
        res = run(g32, a0, np.zeros((2,) + g32.shape), config=SolverConfig(dt=0.05, T=0.2))
        assert np.abs(res.state.a - a0).max() <= 1e-14
        assert np.abs(res.state.u).max() == 0

    def test_small_density_self_convergence(self, g32):
        a0 = scalar_field(g32, seed=2, amplitude=0.05)
        u0 = solenoidal_field(g32, seed=1, amplitude=0.5)
        sols = [run(g32, a0, u0, config=SolverConfig(dt=dt, T=0.4)).state.u for dt in (0.1, 0.05, 0.0125)]
        e1 = np.abs(sols[0] - sols[2]).max()
        e2 = np.abs(sols[1] - sols[2]).max()
        assert e1 / e2 > 4

    def test_energy_balance_with_force(self, g32):
        x, y = g32.mesh()
        f = 0.2 * np.stack([np.sin(y), np.zeros(g32.shape)])
        a0 = scalar_field(g32, seed=2, amplitude=0.1)
        u0 = solenoidal_field(g32, seed=1, amplitude=0.5)
        res = run(g32, a0, u0, f, SolverConfig(dt=0.025, T=0.5))
        assert res.energy_residual.max() <= 1e-6
        assert res.max_div <= 1e-12
        assert res.work[-1] != 0

    @pytest.mark.parametrize("splitting", ["lie", "strang"])
    def test_split_schemes_agree(self, g32, splitting):
        a0 = scalar_field(g32, seed=2, amplitude=0.1)
        u0 = solenoidal_field(g32, seed=1, amplitude=0.5)
        ref = run(g32, a0, u0, config=SolverConfig(dt=0.01, T=0.2)).state.u
        alt = run(g32, a0, u0, config=SolverConfig(dt=0.01, T=0.2, splitting=splitting)).state.u
        assert np.abs(alt - ref).max() <= 1e-3

    def test_callback_sees_every_step(self, g32):
        seen = []
        run(g32, np.zeros(g32.shape), taylor_green(g32), config=SolverConfig(dt=0.1, T=0.3),
            callback=lambda s: seen.append(s.t))
        assert seen == pytest.approx([0.0, 0.1, 0.2, 0.3])

    def test_rows(self, g32):
        res = run(g32, np.zeros(g32.shape), taylor_green(g32), config=SolverConfig(dt=0.1, T=0.2))
        rows = res.rows()
        assert len(rows) == 3 and {"t", "energy", "H1_margin"} <= set(rows[0])
        assert energy(g32, np.zeros(g32.shape), taylor_green(g32)) == pytest.approx(rows[0]["energy"])


class TestErrors:
    def test_config(self):
        with pytest.raises(ParameterError):
            SolverConfig(mu=0)
        with pytest.raises(ParameterError):
            SolverConfig(splitting="none")
        with pytest.raises(ParameterError):
            SolverConfig(breach_policy="ignore")
        assert isinstance(SolverConfig(knobs={"c": 0.1}).knobs, BootstrapKnobs)

    def test_compressible_data(self, g32):
        x, y = g32.mesh()
        with pytest.raises(ParameterError, match="divergence"):
            run(g32, np.zeros(g32.shape), np.stack([np.sin(x), np.zeros(g32.shape)]))

    def test_nonpositive_density(self, g32):
        with pytest.raises(ParameterError):
            run(g32, -np.ones(g32.shape), taylor_green(g32))

    def test_cfl(self, g32):
        with pytest.raises(CFLError):
            run(g32, np.zeros(g32.shape), taylor_green(g32, 20.0), config=SolverConfig(dt=0.1, T=0.2))


class TestMonitor:
    def test_small_data_no_breach(self, g32):
        cfg = SolverConfig(dt=0.02, T=0.1, smoothing=3, monitor=True, breach_policy="abort")
        res = run(g32, scalar_field(g32, seed=2), solenoidal_field(g32, seed=1, amplitude=1e-4), config=cfg)
        assert not res.breaches
        for entry in res.monitor.history:
            assert min(entry["margins"].values()) >= 0
        tc = res.monitor.history[-1]["time_conditions"]
        assert tc["stokes_bound"] >= 0

    def test_large_tail_names_cutoff(self):
        g = TorusGrid((64, 64))
        cfg = SolverConfig(dt=0.02, T=0.02, monitor=True, knobs=BootstrapKnobs(m=2))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = run(g, large_tail_density(g), solenoidal_field(g, seed=1, amplitude=1e-3), config=cfg)
        assert any(issubclass(w.category, RuntimeWarning) and "(H1)" in str(w.message) for w in caught)
        msg = [b for b in res.breaches if b.startswith("(H1)")][0]
        assert "m = 2" in msg and "raise m" in msg

    def test_abort_policy(self):
        g = TorusGrid((64, 64))
        cfg = SolverConfig(dt=0.02, T=0.02, monitor=True, breach_policy="abort", knobs=BootstrapKnobs(m=2))
        with pytest.raises(MonitorBreachError) as info:
            run(g, large_tail_density(g), solenoidal_field(g, seed=1, amplitude=1e-3), config=cfg)
        assert any("H1" in b for b in info.value.breaches)

    def test_eta_auto(self, g32):
        mon = BootstrapMonitor(g32, scalar_field(g32), solenoidal_field(g32, amplitude=1e-3), 0.1)
        assert mon.eta == pytest.approx(0.9 * min(mon._eta_bounds()))
        assert BootstrapMonitor(g32, scalar_field(g32), np.zeros((2,) + g32.shape), 0.1,
                                knobs=BootstrapKnobs(eta=0.5)).eta == 0.5

    def test_parabolic_not_applicable_at_critical_index(self, g32):
        mon = BootstrapMonitor(g32, scalar_field(g32), solenoidal_field(g32), 0.1)
        out = mon.parabolic_estimate(None, None, None)
        assert out["applicable"] is False


class TestExperiments:
    def test_scaling(self, g32):
        cfg = SolverConfig(dt=0.02, T=0.1)
        out = scaling_check(g32, scalar_field(g32, seed=2), solenoidal_field(g32, seed=1, amplitude=0.5), cfg)
        assert out["max_diff"] <= 1e-10
        assert out["diff_grad_pi"] <= 1e-10 * max(out["scale_grad_pi"], 1.0)
        with pytest.raises(ParameterError):
            scaling_check(g32, np.zeros(g32.shape), taylor_green(g32), cfg, l=0)

    def test_stability_slope(self, g32):
        cfg = SolverConfig(dt=0.05, T=0.2)
        out = stability_experiment(g32, scalar_field(g32, seed=2), solenoidal_field(g32, seed=1, amplitude=0.5),
                                   scalar_field(g32, seed=5, amplitude=1.0), solenoidal_field(g32, seed=6),
                                   deltas=(1e-2, 1e-3, 1e-4), config=cfg)
        assert out["slope"] == pytest.approx(1.0, abs=0.05)
        assert all(np.isfinite(c) and c > 0 for c in out["constants"])
