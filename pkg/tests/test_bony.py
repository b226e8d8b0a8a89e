import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besovns.bony import (
    ProductLawCase,
    bony_decomposition,
    commutator,
    commutator_estimate,
    commutator_kernel_terms,
    commutator_split,
    paraproduct,
    product_law_check,
    product_law_terms,
    r1_window,
    remainder,
)
from besovns.littlewood_paley import DyadicDecomposition
from besovns.reports import DegenerateSampleError
from besovns.spectral import ParameterError, TorusGrid, multiply


def smooth_random(grid, rng, kmax=6, decay=1.5):
    """Random real field with spectrum ``(1 + |k|)**-decay`` up to ``kmax``."""
    F = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    F *= (1 + grid.kmag) ** (-decay) * (grid.kmag <= kmax)
    return grid.ifft(F).real


class TestBonyIdentity:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), pad=st.booleans())
    def test_identity(self, seed, pad):
        g = TorusGrid((32, 32))
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        tu, tv, R = bony_decomposition(g, u, v, pad)
        err = np.abs(tu + tv + R - multiply(g, u, v, pad)).max()
        assert err <= 1e-12 * np.abs(u).max() * np.abs(v).max()

    def test_constant_factor(self, rng):
        # a constant lives in block -1: T_v c = 0, R(c, v) = c S_1 v, T_c v = c (v - S_1 v)
        g = TorusGrid((16, 16))
        v = rng.standard_normal(g.shape)
        c = 2.0 * np.ones(g.shape)
        low = DyadicDecomposition(g, v).partial_sum(1)
        assert np.abs(paraproduct(g, v, c)).max() <= 1e-14
        assert np.abs(remainder(g, c, v) - 2 * low).max() <= 1e-13
        assert np.abs(paraproduct(g, c, v) - 2 * (v - low)).max() <= 1e-13

    def test_remainder_symmetric(self, rng):
        g = TorusGrid((32, 32))
        u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        assert np.abs(remainder(g, u, v) - remainder(g, v, u)).max() <= 1e-12

    def test_paraproduct_spectral_support(self):
        # low times high: T_u v sits near the high frequency of v
        g = TorusGrid((64, 64))
        x, y = g.mesh()
        u, v = np.cos(x), np.cos(12 * y)
        T = paraproduct(g, u, v, pad=True)
        assert np.abs(T - u * v).max() <= 1e-13
        assert np.abs(paraproduct(g, v, u, pad=True)).max() <= 1e-14


class TestCommutator:
    def test_constant_coefficient(self, rng):
        g = TorusGrid((32, 32))
        w = rng.standard_normal(g.shape)
        for q in (-1, 0, 2, 4):
            assert np.abs(commutator(g, 3.0 * np.ones(g.shape), w, 0, q)).max() <= 1e-12

    def test_bad_indices(self):
        g = TorusGrid((16, 16))
        z = np.zeros(g.shape)
        with pytest.raises(ParameterError):
            commutator(g, z, z, 2, 0)
        with pytest.raises(ParameterError):
            commutator(g, z, z, 0, -2)

    @pytest.mark.parametrize("k", [0, 1])
    @pytest.mark.parametrize("q", [-1, 0, 1, 3, 5])
    def test_split_recombines(self, k, q, rng):
        g = TorusGrid((64, 64))
        a, w = smooth_random(g, rng, 20), smooth_random(g, rng, 30)
        parts = commutator_split(g, a, w, k, q)
        comb = parts["R1"] - parts["R2"] + parts["R3"] + parts["R4"] - parts["R5"]
        scale = max(np.abs(v).max() for v in parts.values())
        assert np.abs(parts["R"] - comb).max() <= 1e-12 * max(scale, 1.0)
        assert np.abs(parts["R"] - commutator(g, a, w, k, q)).max() <= 1e-13 * max(scale, 1.0)

    def test_r1_window(self, rng):
        lo, hi = r1_window()
        assert lo < 0 < hi
        g = TorusGrid((64, 64))
        a, w = smooth_random(g, rng, 30, 0.5), smooth_random(g, rng, 30, 0.5)
        q = 2
        for qp in range(0, 6):
            comm, bound = commutator_kernel_terms(g, a, w, q, qp)
            if not (q + lo <= qp <= q + hi):
                assert comm <= 1e-13
            # first-order kernel bound with a modest constant
            assert comm <= 10 * bound + 1e-13

    def test_estimate_constant(self, rng):
        g = TorusGrid((64, 64))
        a, w = smooth_random(g, rng), smooth_random(g, rng)
        out = commutator_estimate(g, a, w, sigma=0.5, alpha=0.5, split=True)
        assert np.isfinite(out["constant"]) and out["constant"] > 0
        assert np.all(np.diff(out["partial_sums"]) >= -1e-15)
        assert out["partial_sums"][-1] == pytest.approx(out["constant"])
        assert out["split_error"] <= 1e-12 * max(out["split_scale"], 1.0)

    def test_estimate_ranges(self, rng):
        g = TorusGrid((16, 16))
        a = w = smooth_random(g, rng)
        with pytest.raises(ParameterError):
            commutator_estimate(g, a, w, sigma=0.5, alpha=1.0)
        with pytest.raises(ParameterError):
            commutator_estimate(g, a, w, sigma=3.0, alpha=0.5)
        with pytest.raises(DegenerateSampleError):
            commutator_estimate(g, np.zeros(g.shape), w, sigma=0.5, alpha=0.5)


class TestProductLaws:
    @pytest.mark.parametrize("kwargs, message", [
        (dict(law="2.6"), "unknown"),
        (dict(law="2.5", s=1.0), "N/p"),
        (dict(law="2.5", s=-1.5, p=1.5), "N/p'"),
        (dict(law="2.4", s1=0.5, s2=0.0), "s1 \\+ s2 = 0"),
        (dict(law="2.3", s1=-0.5, s2=-0.5), "s1 \\+ s2"),
        (dict(law="2.3", s1=1.5, s2=0.1), "lambda2"),
        (dict(law="corollary", p=4.0, p1=2.0), "p <= p1"),
        (dict(law="2.2", r=0.5), "r must"),
    ])
    def test_validation(self, kwargs, message):
        with pytest.raises(ParameterError, match=message):
            ProductLawCase(**kwargs)

    def test_law_ids_and_indices(self):
        assert ProductLawCase("2.2").law_id == "product-2.2"
        case = ProductLawCase("2.3", s1=0.5, s2=0.25, p=2, p1=2, p2=2)
        s, p, r = case.lhs_index()
        assert s == pytest.approx(0.75 - 2 * 0.5)
        assert ProductLawCase("2.4", s1=0.5, s2=-0.5).lhs_index()[2] == math.inf

    def test_dimension_mismatch(self):
        g = TorusGrid((8, 8, 8))
        z = np.zeros(g.shape)
        with pytest.raises(ParameterError):
            product_law_terms(ProductLawCase("2.2"), g, z, z)

    @pytest.mark.parametrize("law, kw", [
        ("2.2", dict(s=0.5)),
        ("2.3", dict(s1=0.5, s2=0.5)),
        ("2.4", dict(s1=0.5, s2=-0.5)),
        ("2.5", dict(s=0.5)),
        ("corollary", dict(s=0.25, p1=4.0)),
    ])
    def test_smooth_pairs_have_moderate_ratio(self, law, kw, rng):
        g = TorusGrid((32, 32))
        case = ProductLawCase(law, **kw)
        rep = None
        for _ in range(5):
            rep = product_law_check(case, g, smooth_random(g, rng), smooth_random(g, rng), rep)
        assert len(rep.records) == 5
        assert 0 < max(rep.ratios) < 100

    def test_zero_rhs_skipped(self):
        g = TorusGrid((16, 16))
        z = np.zeros(g.shape)
        rep = product_law_check(ProductLawCase("2.2"), g, z, z)
        assert rep.skipped == 1 and not rep.records
