"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time
import warnings

import numpy as np
import pytest

from besovns.bony import commutator_estimate
from besovns.elliptic import CoefficientField, solve_pressure
from besovns.harness import SampleSpec, generate_sample, run_suite
from besovns.littlewood_paley import DyadicDecomposition
from besovns.navier_stokes import (
    BootstrapKnobs,
    SolverConfig,
    large_tail_density,
    run,
    scalar_field,
    scaling_check,
    solenoidal_field,
    stability_experiment,
)
from besovns.spectral import TorusGrid, divergence, gradient, leray_project
from besovns.transport import advect
from oracles import dense_pressure_gradient

pytestmark = pytest.mark.acceptance


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def verdict_detail(res) -> str:
    return "; ".join(f"{k}: C_emp={v['c_emp']:.3g} stab={v['stability']:.3f} n={v['samples']}"
                     for k, v in res.verdicts.items())


def test_01_reconstruction(acceptance):
    worst = 0.0
    with Timer() as tm:
        for n in (64, 128):
            for i in range(100):
                spec = SampleSpec(s=0.0, envelope="flat", seed=i, sizes=(n, n))
                u = generate_sample(spec)
                rec = DyadicDecomposition(spec.grid, u).reconstruct()
                worst = max(worst, np.abs(u - rec).max() / np.abs(u).max())
    ok = worst <= 1e-12 and tm.elapsed < 10
    acceptance(1, "partition reconstruction", ok, f"max rel err {worst:.2e}, {tm.elapsed:.1f} s")
    assert ok


def test_02_leray(acceptance, rng):
    errs = {"idempotence": 0.0, "gradient": 0.0, "divergence": 0.0}
    with Timer() as tm:
        for n in (64, 128):
            g = TorusGrid((n, n))
            for _ in range(10):
                U = g.fft(rng.standard_normal((2,) + g.shape))
                scale = np.abs(U).max()
                P = leray_project(g, U)
                errs["idempotence"] = max(errs["idempotence"], np.abs(leray_project(g, P) - P).max() / scale)
                errs["divergence"] = max(errs["divergence"], np.abs(divergence(g, P)).max() / (scale * g.kmax))
                G = gradient(g, g.fft(rng.standard_normal(g.shape)))
                errs["gradient"] = max(errs["gradient"], np.abs(leray_project(g, G)).max() / np.abs(G).max())
    ok = max(errs.values()) <= 1e-12 and tm.elapsed < 5
    acceptance(2, "Leray projector", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f", {tm.elapsed:.1f} s")
    assert ok


def test_03_bony_identity(acceptance):
    with Timer() as tm:
        res = run_suite(["bony-identity"], M=100, resolutions=(64,))
    worst = max(res.reports[0].ratios)
    ok = res.passed and worst <= 1e-12 and len(res.reports[0].ratios) == 100 and tm.elapsed < 30
    acceptance(3, "Bony identity", ok, f"max err/(|u||v|) {worst:.2e} over 100 pairs, {tm.elapsed:.1f} s")
    assert ok


def test_04_commutator(acceptance):
    with Timer() as tm:
        split_err = 0.0
        for seed in range(3):
            g = TorusGrid((64, 64))
            a = generate_sample(SampleSpec(s=1.5, seed=seed, sizes=g.sizes))
            w = generate_sample(SampleSpec(s=1.0, seed=seed + 100, sizes=g.sizes))
            out = commutator_estimate(g, a, w, 0.5, 0.5, split=True)
            split_err = max(split_err, out["split_error"])
        res = run_suite(["commutator"], M=20, resolutions=(64, 128))
    rep = res.reports[0]
    partial = [rec.extra["partial_max"] for rec in rep.records]
    v = res.verdicts["commutator"]
    ok = (split_err <= 1e-12 and res.passed and all(math.isfinite(x) for x in partial)
          and v["stability"] <= 2 and tm.elapsed < 120)
    acceptance(4, "commutator", ok, f"split err {split_err:.1e}, max partial sum {max(partial):.3g}, "
                                    f"{verdict_detail(res)}, {tm.elapsed:.1f} s")
    assert ok


def test_05_product_laws(acceptance):
    laws = ["product-2.2", "product-2.5", "product-corollary"]
    with Timer() as tm:
        res = run_suite(laws, M=100, resolutions=(64, 128))
    ok = res.passed and all(res.verdicts[k]["stability"] <= 2 for k in laws) and tm.elapsed < 120
    acceptance(5, "product laws", ok, f"{verdict_detail(res)}, {tm.elapsed:.1f} s")
    assert ok


def test_06_log_interpolation(acceptance):
    with Timer() as tm:
        res = run_suite(["log-interpolation"], M=50, resolutions=(64, 128))
    rep = res.reports[0]
    per_eps = {}
    for eps in (0.4, 0.2, 0.1, 0.05):
        recs = [r for r in rep.records if r.extra["eps"] == eps]
        c = {n: max(r.ratio for r in recs if r.resolution == n) for n in (64, 128)}
        per_eps[eps] = c[128] / c[64]
    ok = res.passed and all(s <= 2 for s in per_eps.values()) and tm.elapsed < 60
    acceptance(6, "log-interpolation", ok, f"{verdict_detail(res)}, per-eps stability "
               + " ".join(f"{e}:{s:.3f}" for e, s in per_eps.items()) + f", {tm.elapsed:.1f} s")
    assert ok


def _coefficient(grid, rng, amplitude):
    F = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * (grid.kmag <= 4)
    a = grid.ifft(F).real
    return amplitude * a / np.abs(a).max()


def test_07_elliptic(acceptance, rng):
    with Timer() as tm:
        g = TorusGrid((64, 64))
        x, y = g.mesh()
        F = np.stack([np.cos(x + 2 * y), np.sin(3 * x - y)])
        exact = np.stack([np.cos(x + 2 * y) / 5, 2 * np.cos(x + 2 * y) / 5])
        exact += np.stack([-3 * np.sin(3 * x - y), np.sin(3 * x - y)]) / 10
        zero_err = np.abs(solve_pressure(CoefficientField.zero(g), F).grad_pi - exact).max()

        g16 = TorusGrid((16, 16))
        dense_err = 0.0
        for amp in (0.05, 0.1, 0.3):
            a = _coefficient(g16, rng, amp)
            F16 = rng.standard_normal((2,) + g16.shape)
            sol = solve_pressure(CoefficientField(g16, a), F16, tol=1e-14, max_iter=2000)
            dense_err = max(dense_err, np.abs(sol.grad_pi - dense_pressure_gradient(a, F16)).max())

        geometric = True
        worst_res = 0.0
        for amp in (0.02, 0.05, 0.1):
            sol = solve_pressure(CoefficientField(g, _coefficient(g, rng, amp)),
                                 rng.standard_normal((2,) + g.shape), tol=1e-10)
            hist = [h[1] for h in sol.history]
            geometric &= all(b < a_ for a_, b in zip(hist, hist[1:])) and sol.contraction < 1
            worst_res = max(worst_res, sol.residual)
        suite = run_suite(["elliptic-estimate"], M=20, resolutions=(64, 128))
    ok = (zero_err <= 1e-12 and dense_err <= 1e-9 and geometric and worst_res <= 1e-10
          and suite.passed and tm.elapsed < 60)
    acceptance(7, "elliptic solver", ok, f"a=0 err {zero_err:.1e}, dense err {dense_err:.1e}, "
               f"geometric {geometric}, residual {worst_res:.1e}, {verdict_detail(suite)}, {tm.elapsed:.1f} s")
    assert ok


def test_08_transport(acceptance):
    with Timer() as tm:
        g = TorusGrid((256, 256))
        x, y = g.mesh()
        v = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
        a0 = np.exp(np.cos(x) + np.cos(2 * y) - 2) - 0.3
        res = advect(g, a0, v, T=1.0, dt=0.005, lp_track=(2.0, 4.0, math.inf))
        drift = {p: float(np.abs(np.asarray(h) / h[0] - 1).max()) for p, h in res.lp_history.items()}

        g32 = TorusGrid((32, 32))
        x, y = g32.mesh()
        v32 = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
        b0 = np.exp(np.cos(x) + np.cos(2 * y) - 2) - 0.3
        sols = [advect(g32, b0, v32, T=1.0, dt=dt).a for dt in (0.04, 0.02, 0.01, 0.0025)]
        e = [np.abs(s - sols[-1]).max() for s in sols[:-1]]
        order = min(math.log2(e[0] / e[1]), math.log2(e[1] / e[2]))
    ok = max(drift.values()) <= 1e-3 and order >= 2 and tm.elapsed < 180
    acceptance(8, "transport", ok, "drift " + " ".join(f"L{p:g}:{d:.1e}" for p, d in drift.items())
               + f", order {order:.2f}, {tm.elapsed:.1f} s")
    assert ok


def test_09_energy_equality(acceptance):
    with Timer() as tm:
        g = TorusGrid((128, 128))
        a0 = scalar_field(g, seed=1, amplitude=0.1)
        u0 = solenoidal_field(g, seed=0, amplitude=0.5)
        residuals = []
        for dt in (0.05, 0.025, 0.0125):
            res = run(g, a0, u0, config=SolverConfig(mu=0.1, dt=dt, T=0.5))
            residuals.append(float(res.energy_residual[-1]))
        orders = [math.log2(r0 / r1) for r0, r1 in zip(residuals, residuals[1:])]
    ok = max(residuals) <= 1e-4 and min(orders) >= 2 and tm.elapsed < 300
    acceptance(9, "energy equality", ok, "residuals " + " ".join(f"{r:.1e}" for r in residuals)
               + " orders " + " ".join(f"{o:.2f}" for o in orders) + f", {tm.elapsed:.1f} s")
    assert ok


def test_10_scaling(acceptance):
    with Timer() as tm:
        g = TorusGrid((64, 64))
        out = scaling_check(g, scalar_field(g, seed=1, amplitude=0.1), solenoidal_field(g, seed=0, amplitude=0.5),
                            SolverConfig(mu=0.1, dt=0.02, T=0.2), l=2)
    ok = out["max_diff"] <= 1e-10 and tm.elapsed < 180
    acceptance(10, "scaling covariance", ok, f"max diff {out['max_diff']:.1e}, {tm.elapsed:.1f} s")
    assert ok


def test_11_stability(acceptance):
    with Timer() as tm:
        g = TorusGrid((64, 64))
        out = stability_experiment(g, scalar_field(g, seed=1, amplitude=0.1),
                                   solenoidal_field(g, seed=0, amplitude=0.5),
                                   scalar_field(g, seed=5, amplitude=1.0), solenoidal_field(g, seed=6),
                                   deltas=(1e-2, 1e-3, 1e-4), config=SolverConfig(mu=0.1, dt=0.02, T=0.5))
    ok = abs(out["slope"] - 1) <= 0.1 and tm.elapsed < 600
    acceptance(11, "stability slope", ok, f"slope {out['slope']:.4f}, {tm.elapsed:.1f} s")
    assert ok


def test_12_monitor(acceptance):
    with Timer() as tm:
        g = TorusGrid((64, 64))
        cfg = SolverConfig(dt=0.02, T=0.1, smoothing=3, monitor=True, breach_policy="abort")
        small = run(g, scalar_field(g, seed=2), solenoidal_field(g, seed=1, amplitude=1e-4), config=cfg)
        hist = small.monitor.history
        held = (not small.breaches and hist[0]["t"] == 0.0 and len(hist) == len(small.times)
                and all(min(e["margins"].values()) >= 0 for e in hist))
        conditions = sorted(hist[0]["margins"])

        cfg = SolverConfig(dt=0.02, T=0.02, monitor=True, knobs=BootstrapKnobs(m=2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            big = run(g, large_tail_density(g), solenoidal_field(g, seed=1, amplitude=1e-3), config=cfg)
        h1 = [b for b in big.breaches if b.startswith("(H1)")]
        named = bool(h1) and "m = 2" in h1[0]
    ok = held and named and tm.elapsed < 120
    acceptance(12, "bootstrap monitor", ok, f"small data held {held} ({', '.join(conditions)}), "
               f"large tail: {h1[0] if h1 else 'no H1 breach'}, {tm.elapsed:.1f} s")
    assert ok
