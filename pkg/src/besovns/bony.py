"""
Paraproducts, remainders and the commutator ``[Delta_q, a] d_k``.

The decomposition ``uv = T_u v + T_v u + R(u, v)`` with
``T_u v = sum_q S_{q-1}u Delta_q v`` and
``R(u, v) = sum_q Delta_q u (Delta_{q-1} + Delta_q + Delta_{q+1}) v``
is a regrouping of the double sum ``sum_{q, q'} Delta_q u Delta_{q'} v`` and
therefore holds to round-off for any bilinear product. By default products
are taken on the native grid; ``pad=True`` switches to 3/2-padded products,
which obey the Leibniz rule exactly and are used by the commutator split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .littlewood_paley import (
    DEFAULT_PARTITION,
    DyadicDecomposition,
    PartitionOfUnity,
    besov_from_block_norms,
    besov_norm,
)
from .reports import DegenerateSampleError, InequalityReport
from .spectral import ParameterError, ShapeError, TorusGrid, lp_norm, multiply

__all__ = [
    "paraproduct",
    "remainder",
    "bony_decomposition",
    "commutator",
    "commutator_split",
    "r1_window",
    "commutator_estimate",
    "commutator_kernel_terms",
    "ProductLawCase",
    "product_law_terms",
    "product_law_check",
]


def _dec(grid, u, pou) -> DyadicDecomposition:
    if isinstance(u, DyadicDecomposition):
        if u.grid != grid:
            raise ShapeError("decomposition lives on a different grid")
        return u
    return DyadicDecomposition(grid, u, pou)


def _nonzero(x: np.ndarray) -> bool:
    return bool(np.any(x))


def paraproduct(grid: TorusGrid, u, v, pad: bool = False, pou: PartitionOfUnity = DEFAULT_PARTITION) -> np.ndarray:
    """``T_u v = sum_{q >= 1} S_{q-1} u Delta_q v`` (``S_{q-1} u = 0`` for ``q <= 0``)."""
    du, dv = _dec(grid, u, pou), _dec(grid, v, pou)
    low = du.partial_sums()
    out = None
    for q in range(1, dv.lmax + 1):
        s = low[min(q - 1, du.lmax + 1)]
        b = dv.block(q)
        if not (_nonzero(s) and _nonzero(b)):
            continue
        term = multiply(grid, s, b, pad)
        out = term if out is None else out + term
    if out is None:
        out = multiply(grid, np.zeros(du.coeffs.shape), np.zeros(dv.coeffs.shape))
    return out


def remainder(grid: TorusGrid, u, v, pad: bool = False, pou: PartitionOfUnity = DEFAULT_PARTITION) -> np.ndarray:
    """``R(u, v) = sum_q Delta_q u (Delta_{q-1} v + Delta_q v + Delta_{q+1} v)``."""
    du, dv = _dec(grid, u, pou), _dec(grid, v, pou)
    out = None
    for q in range(-1, du.lmax + 1):
        bu = du.block(q)
        if not _nonzero(bu):
            continue
        near = dv.block(q - 1) + dv.block(q) + dv.block(q + 1)
        if not _nonzero(near):
            continue
        term = multiply(grid, bu, near, pad)
        out = term if out is None else out + term
    if out is None:
        out = multiply(grid, np.zeros(du.coeffs.shape), np.zeros(dv.coeffs.shape))
    return out


def bony_decomposition(grid: TorusGrid, u, v, pad: bool = False, pou: PartitionOfUnity = DEFAULT_PARTITION):
    """``(T_u v, T_v u, R(u, v))``."""
    du, dv = _dec(grid, u, pou), _dec(grid, v, pou)
    return (paraproduct(grid, du, dv, pad, pou), paraproduct(grid, dv, du, pad, pou),
            remainder(grid, du, dv, pad, pou))


# -- commutator ----------------------------------------------------------


def _deriv(grid: TorusGrid, f: np.ndarray, k: int) -> np.ndarray:
    F = grid.fft(f)
    kk = grid.kdiff[k]
    return grid.ifft(1j * kk * F)


def _block(grid: TorusGrid, f: np.ndarray, q: int, pou: PartitionOfUnity) -> np.ndarray:
    return DyadicDecomposition(grid, f, pou).block(q)


def r1_window(pou: PartitionOfUnity = DEFAULT_PARTITION) -> tuple[int, int | None]:
    """Offsets ``(lo, hi)`` such that ``[Delta_q, S_{q'-1}a] Delta_{q'} w`` can be
    nonzero only for ``q + lo <= q' <= q + hi`` (``q >= 0``).

    ``S_{q'-1}a Delta_{q'}w`` has frequencies in
    ``2**q' [1/alpha - alpha/2, 5 alpha/2]`` and ``Delta_q`` keeps
    ``2**q [1/alpha, 2 alpha]``; supports are open so the bounds are strict.
    ``hi`` is ``None`` when the product support reaches the origin.
    """
    al = pou.alpha

    def largest_below(bound: float) -> int:
        d = 0
        while 2.0 ** (d + 1) < bound * (1.0 - 1e-12):
            d += 1
        return d

    lo = -largest_below(2.5 * al * al)  # 2**(q - q') < 5 alpha**2 / 2
    low_edge = 1.0 / al - al / 2.0
    if low_edge <= 0:
        return lo, None
    hi = largest_below(2.0 * al / low_edge)
    return lo, hi


def commutator(grid: TorusGrid, a, w, k: int, q: int, pad: bool = True,
               pou: PartitionOfUnity = DEFAULT_PARTITION) -> np.ndarray:
    """``R_q = Delta_q(a d_k w) - d_k(a Delta_q w)``."""
    if not (0 <= k < grid.dim):
        raise ParameterError(f"axis k must be in [0, {grid.dim}), got {k}")
    if q < -1:
        raise ParameterError(f"block index must be >= -1, got {q}")
    a, w = np.asarray(a, dtype=float), np.asarray(w, dtype=float)
    first = _block(grid, multiply(grid, a, _deriv(grid, w, k), pad), q, pou)
    second = _deriv(grid, multiply(grid, a, _block(grid, w, q, pou), pad), k)
    return first - second


@dataclass
class _CommutatorContext:
    """Block-independent pieces of the five-term split for one ``(a, w, k)``."""

    grid: TorusGrid
    a: np.ndarray
    w: np.ndarray
    k: int
    pad: bool
    pou: PartitionOfUnity

    def __post_init__(self):
        g, pad, pou = self.grid, self.pad, self.pou
        self.da = DyadicDecomposition(g, self.a, pou)
        self.dw = DyadicDecomposition(g, self.w, pou)
        self.dkw = _deriv(g, self.w, self.k)
        self.dka = _deriv(g, self.a, self.k)
        self.t_a_w = DyadicDecomposition(g, paraproduct(g, self.da, self.dw, pad, pou), pou)
        self.t_dka_w = DyadicDecomposition(g, paraproduct(g, self.dka, self.dw, pad, pou), pou)
        self.t_dkw_a = DyadicDecomposition(g, paraproduct(g, self.dkw, self.da, pad, pou), pou)
        self.r_dkw_a = DyadicDecomposition(g, remainder(g, self.dkw, self.da, pad, pou), pou)
        self.a_dkw = DyadicDecomposition(g, multiply(g, self.a, self.dkw, pad), pou)

    def split(self, q: int) -> dict[str, np.ndarray]:
        g, pad, pou, k = self.grid, self.pad, self.pou, self.k
        wq = self.dw.block(q)
        r1 = _deriv(g, self.t_a_w.block(q) - paraproduct(g, self.da, wq, pad, pou), k)
        r2 = self.t_dka_w.block(q)
        r3 = self.t_dkw_a.block(q)
        r4 = self.r_dkw_a.block(q)
        dwq = DyadicDecomposition(g, wq, pou)
        r5 = _deriv(g, paraproduct(g, dwq, self.da, pad, pou) + remainder(g, self.da, dwq, pad, pou), k)
        rq = self.a_dkw.block(q) - _deriv(g, multiply(g, self.a, wq, pad), k)
        return {"R": rq, "R1": r1, "R2": r2, "R3": r3, "R4": r4, "R5": r5}


def commutator_split(grid: TorusGrid, a, w, k: int, q: int, pad: bool = True,
                     pou: PartitionOfUnity = DEFAULT_PARTITION) -> dict[str, np.ndarray]:
    """``R_q`` together with the five pieces of ``R_q = R1 - R2 + R3 + R4 - R5``.

    ::

        R1 = d_k [Delta_q, T_a] w        R2 = Delta_q T_{d_k a} w
        R3 = Delta_q T_{d_k w} a         R4 = Delta_q R(d_k w, a)
        R5 = d_k (T_{Delta_q w} a + R(a, Delta_q w))

    The split needs the Leibniz rule ``d(fg) = df g + f dg`` for the grid
    product, which holds exactly only for padded products; with
    ``pad=False`` aliasing leaves a residual of the size of the aliased modes.
    """
    ctx = _CommutatorContext(grid, np.asarray(a, float), np.asarray(w, float), k, pad, pou)
    return ctx.split(q)


def commutator_estimate(grid: TorusGrid, a, w, sigma: float, alpha: float, p: float = 2.0,
                        p1: float = 2.0, r: float = 2.0, axes=None, pad: bool = True,
                        pou: PartitionOfUnity = DEFAULT_PARTITION, split: bool = False) -> dict:
    """Measure the block-wise commutator estimate for one pair ``(a, w)``.

    For every block ``q`` the ratio
    ``c_q = 2**(q sigma) ||R_q||_{L^p} / (||a||_{B^{N/p1+alpha}_{p1,r}} ||w||_{B^{sigma+1-alpha}_{p,r}})``
    is returned (maximised over the axes ``k``), together with its ``l^r``
    norm and running partial sums. When ``split`` is set the recombination
    error of the five-term split is also reported.
    """
    N = grid.dim
    lo_alpha = 1.0 - N / p
    if not (lo_alpha < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (1 - N/p, 1) = ({lo_alpha}, 1), got {alpha}")
    if not (-N / p1 < sigma <= N / p1 + alpha):
        raise ParameterError(f"sigma must lie in (-N/p1, N/p1 + alpha], got {sigma}")
    a, w = np.asarray(a, float), np.asarray(w, float)
    da = DyadicDecomposition(grid, a, pou)
    dw = DyadicDecomposition(grid, w, pou)
    na = da.besov(N / p1 + alpha, p1, r)
    nw = dw.besov(sigma + 1 - alpha, p, r)
    if na == 0 or nw == 0:
        raise DegenerateSampleError("commutator estimate needs nonzero a and w")
    axes = range(N) if axes is None else axes
    levels = np.arange(-1, dw.lmax + 1)
    lhs_blocks = np.zeros(len(levels))
    split_err = 0.0
    scale = 0.0
    for k in axes:
        if split:
            ctx = _CommutatorContext(grid, a, w, k, pad, pou)
        for i, q in enumerate(levels):
            if split:
                parts = ctx.split(int(q))
                rq = parts["R"]
                comb = parts["R1"] - parts["R2"] + parts["R3"] + parts["R4"] - parts["R5"]
                split_err = max(split_err, float(np.max(np.abs(rq - comb))))
                scale = max(scale, max(float(np.max(np.abs(v))) for v in parts.values()))
            else:
                rq = commutator(grid, a, w, k, int(q), pad, pou)
            lhs_blocks[i] = max(lhs_blocks[i], 2.0 ** (q * sigma) * lp_norm(grid, rq, p))
    c = lhs_blocks / (na * nw)
    if np.isinf(r):
        partial = np.maximum.accumulate(c)
        total = float(c.max())
    else:
        partial = np.cumsum(c**r) ** (1.0 / r)
        total = float(partial[-1])
    out = {
        "levels": levels,
        "c_q": c,
        "partial_sums": partial,
        "lhs": besov_from_block_norms(levels, lhs_blocks * 2.0 ** (-levels * sigma), sigma, r),
        "rhs": na * nw,
        "constant": total,
    }
    if split:
        out["split_error"] = split_err
        out["split_scale"] = scale
    return out


def commutator_kernel_terms(grid: TorusGrid, a, w, q: int, qp: int, p: float = 2.0,
                            pou: PartitionOfUnity = DEFAULT_PARTITION) -> tuple[float, float]:
    """``||[Delta_q, S_{q'-1} a] Delta_{q'} w||_{L^p}`` and
    ``2**-q ||grad S_{q'-1} a||_inf ||Delta_{q'} w||_{L^p}``.

    Products are padded, so the commutator is the exact truncation of the
    continuous one.
    """
    da = DyadicDecomposition(grid, a, pou)
    dw = DyadicDecomposition(grid, w, pou)
    s = da.partial_sum(qp - 1)
    b = dw.block(qp)
    comm = _block(grid, multiply(grid, s, b, True), q, pou) - multiply(grid, s, _block(grid, b, q, pou), True)
    grad = np.stack([_deriv(grid, s, k) for k in range(grid.dim)])
    return lp_norm(grid, comm, p), 2.0 ** (-q) * lp_norm(grid, grad, np.inf) * lp_norm(grid, b, p)


# -- product laws --------------------------------------------------------

_LAWS = ("2.2", "2.3", "2.4", "2.5", "corollary")


def _inv(p: float) -> float:
    return 0.0 if np.isinf(p) else 1.0 / p


@dataclass(frozen=True)
class ProductLawCase:
    """Index set for one product law.

    ``law`` is one of ``"2.2"`` (tame estimate), ``"2.3"`` (general
    product), ``"2.4"`` (limit case ``s1 + s2 = 0``), ``"2.5"`` (multiplier
    in ``B^{N/p}_{p,inf} cap L^inf``) or ``"corollary"`` (multiplier in
    ``B^{N/p1}_{p1,inf} cap L^inf``). Unused indices are ignored.
    """

    law: str
    N: int = 2
    s: float = 0.5
    s1: float = 0.5
    s2: float = 0.5
    p: float = 2.0
    p1: float = 2.0
    p2: float = 2.0
    r: float = 2.0
    lam1: float = math.inf
    lam2: float = math.inf

    def __post_init__(self):
        if self.law not in _LAWS:
            raise ParameterError(f"unknown product law {self.law!r}; expected one of {_LAWS}")
        for name in ("p", "p1", "p2", "r", "lam1", "lam2"):
            if not getattr(self, name) >= 1:
                raise ParameterError(f"index {name} must be >= 1, got {getattr(self, name)}")
        self.validate()

    def _fail(self, what: str):
        raise ParameterError(f"law {self.law}: constraint violated: {what}")

    def validate(self):
        N, p, p1, p2 = self.N, self.p, self.p1, self.p2
        ip, ip1, ip2 = _inv(p), _inv(p1), _inv(p2)
        il1, il2 = _inv(self.lam1), _inv(self.lam2)
        if self.law in ("2.3", "2.4"):
            if ip > ip1 + ip2:
                self._fail("1/p <= 1/p1 + 1/p2")
            if p1 > self.lam2:
                self._fail("p1 <= lambda2")
            if p2 > self.lam1:
                self._fail("p2 <= lambda1")
            if ip > ip1 + il1:
                self._fail("1/p <= 1/p1 + 1/lambda1")
            if ip > ip2 + il2:
                self._fail("1/p <= 1/p2 + 1/lambda2")
        if self.law == "2.3":
            if not self.s1 + self.s2 + N * min(0.0, 1 - ip1 - ip2) > 0:
                self._fail("s1 + s2 + N inf(0, 1 - 1/p1 - 1/p2) > 0")
            if self.s1 + N * il2 > N * ip1:
                self._fail("s1 + N/lambda2 <= N/p1")
            if self.s2 + N * il1 > N * ip2:
                self._fail("s2 + N/lambda1 <= N/p2")
        elif self.law == "2.4":
            if abs(self.s1 + self.s2) > 1e-14:
                self._fail("s1 + s2 = 0")
            if not (N * il1 - N * ip2 < self.s1 <= N * ip1 - N * il2):
                self._fail("s1 in (N/lambda1 - N/p2, N/p1 - N/lambda2]")
            if ip1 + ip2 > 1:
                self._fail("1/p1 + 1/p2 <= 1")
        elif self.law == "2.5":
            if p >= 2:
                if not abs(self.s) < N * ip:
                    self._fail("|s| < N/p for p >= 2")
            elif not (-N * (1 - ip) < self.s < N * ip):
                self._fail("-N/p' < s < N/p for p < 2")
        elif self.law == "corollary":
            if not (1 <= p <= p1):
                self._fail("1 <= p <= p1")
            lo = -N * ip1 + (N * (ip + ip1 - 1) if ip + ip1 > 1 else 0.0)
            if not (lo < self.s < N * ip1):
                self._fail(f"s in ({lo}, N/p1)")

    @property
    def law_id(self) -> str:
        return f"product-{self.law}"

    # indices used when the borderline cases of (2.3) switch norms
    def _borderline(self) -> tuple[bool, bool]:
        N = self.N
        b1 = math.isclose(self.s1 + N * _inv(self.lam2), N * _inv(self.p1))
        b2 = math.isclose(self.s2 + N * _inv(self.lam1), N * _inv(self.p2))
        return b1, b2

    def lhs_index(self) -> tuple[float, float, float]:
        """``(s, p, r)`` of the norm applied to ``uv``."""
        N = self.N
        if self.law == "2.3":
            shift = N * (_inv(self.p1) + _inv(self.p2) - _inv(self.p))
            r = 1.0 if all(self._borderline()) else self.r
            return self.s1 + self.s2 - shift, self.p, r
        if self.law == "2.4":
            return -N * (_inv(self.p1) + _inv(self.p2) - _inv(self.p)), self.p, math.inf
        return self.s, self.p, self.r


def _bl(grid, u, s, p, r, pou):
    return besov_norm(grid, u, s, p, r, pou)


def product_law_terms(case: ProductLawCase, grid: TorusGrid, u, v, pad: bool = True,
                      pou: PartitionOfUnity = DEFAULT_PARTITION) -> tuple[float, float]:
    """``(lhs, rhs)`` of the selected product law for one pair.

    ``lhs`` is the Besov norm of the product ``uv`` (padded by default, so
    that aliased high modes do not leak into the weighted blocks). Norms on
    intersections ``X cap L^inf`` are taken as the sum of the two norms.
    """
    if case.N != grid.dim:
        raise ParameterError(f"case dimension {case.N} does not match grid dimension {grid.dim}")
    u, v = np.asarray(u, float), np.asarray(v, float)
    du, dv = DyadicDecomposition(grid, u, pou), DyadicDecomposition(grid, v, pou)
    s, p, r = case.lhs_index()
    lhs = _bl(grid, multiply(grid, u, v, pad), s, p, r, pou)
    inf_u, inf_v = lp_norm(grid, u, np.inf), lp_norm(grid, v, np.inf)
    N = grid.dim
    if case.law == "2.2":
        rhs = inf_u * dv.besov(s, p, r) + inf_v * du.besov(s, p, r)
    elif case.law == "2.3":
        b1, b2 = case._borderline()
        if b1 and b2:
            rhs = du.besov(case.s1, case.p1, 1.0) * (dv.besov(case.s2, case.p2, math.inf) + inf_v)
        elif b1:
            rhs = du.besov(case.s1, case.p1, 1.0) * dv.besov(case.s2, case.p2, case.r)
        elif b2:
            rhs = du.besov(case.s1, case.p1, case.r) * (dv.besov(case.s2, case.p2, math.inf) + inf_v)
        else:
            rhs = du.besov(case.s1, case.p1, case.r) * dv.besov(case.s2, case.p2, math.inf)
    elif case.law == "2.4":
        rhs = du.besov(case.s1, case.p1, 1.0) * dv.besov(case.s2, case.p2, math.inf)
    elif case.law == "2.5":
        rhs = du.besov(s, p, r) * (dv.besov(N / p, p, math.inf) + inf_v)
    else:
        rhs = du.besov(s, p, r) * (dv.besov(N / case.p1, case.p1, math.inf) + inf_v)
    return lhs, rhs


def product_law_check(case: ProductLawCase, grid: TorusGrid, u, v, report: InequalityReport | None = None,
                      pad: bool = True, pou: PartitionOfUnity = DEFAULT_PARTITION) -> InequalityReport:
    """Append one ``(lhs, rhs)`` sample of ``case`` to ``report``."""
    report = report if report is not None else InequalityReport(case.law_id)
    lhs, rhs = product_law_terms(case, grid, u, v, pad, pou)
    if rhs == 0:
        report.skipped += 1
        return report
    s, p, r = case.lhs_index()
    report.add(lhs, rhs, grid.sizes[0], s=s, p=p, r=r)
    return report
