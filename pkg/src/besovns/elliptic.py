"""
Variable-coefficient pressure equation ``div(b grad Pi) = div F`` with ``b = 1 + a``.

The solver is the fixed point ``Pi <- inv_lap div(F - a grad Pi)``, i.e. the
constant-coefficient inverse Laplacian used as a preconditioner for the
perturbation ``div(a grad .)``. It contracts when ``a`` is small and stalls or
diverges otherwise; both outcomes are reported rather than hidden.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .littlewood_paley import DEFAULT_PARTITION, DyadicDecomposition, PartitionOfUnity
from .reports import DegenerateSampleError, InequalityReport
from .spectral import (
    ParameterError,
    TorusGrid,
    divergence,
    gradient,
    gradient_project,
    inverse_laplacian,
    lp_norm,
)

__all__ = [
    "NonConvergenceError",
    "SolverTimeoutError",
    "CoefficientField",
    "PressureSolution",
    "choose_cutoff",
    "solve_pressure",
    "split_sources",
    "elliptic_estimate_terms",
    "elliptic_estimate_check",
]


class NonConvergenceError(ArithmeticError):
    """The fixed-point residual kept growing."""

    def __init__(self, message: str, contraction: float, history=None):
        super().__init__(message)
        self.contraction = contraction
        self.history = history or []


class SolverTimeoutError(ArithmeticError):
    """``max_iter`` reached before the tolerance."""

    def __init__(self, message: str, residual: float, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


def _tail_sum(dec: DyadicDecomposition, m: int, p1: float) -> float:
    N = dec.grid.dim
    norms = dec.norms(p1)
    w = 2.0 ** (dec.levels * (N / p1 if not np.isinf(p1) else 0.0))
    mask = dec.levels >= m
    return float(np.sum(w[mask] * norms[mask]))


def choose_cutoff(grid: TorusGrid, a: np.ndarray, c: float = 0.05, p1: float = 2.0,
                  pou: PartitionOfUnity = DEFAULT_PARTITION) -> int:
    """Smallest ``m`` with ``2 sum_{l >= m} 2**(l N/p1) ||Delta_l a||_{L^p1} <= c``.

    Returns ``l_max + 1`` when even the last block is too large (then
    ``a - S_m a = 0`` on the grid).
    """
    dec = a if isinstance(a, DyadicDecomposition) else DyadicDecomposition(grid, a, pou)
    for m in range(-1, dec.lmax + 2):
        if 2.0 * _tail_sum(dec, m, p1) <= c:
            return m
    return dec.lmax + 1


class CoefficientField:
    """``b = 1 + a`` with its lower bound and high-frequency cutoff.

    Parameters
    ----------
    grid : TorusGrid
    a : ndarray
        Scalar perturbation of the unit coefficient.
    m : int, optional
        Cutoff index; chosen by :func:`choose_cutoff` when omitted.
    c : float
        Smallness constant of the cutoff rule.
    p1 : float
        Integrability used for the cutoff rule and the tail monitor.
    """

    def __init__(self, grid: TorusGrid, a, m: int | None = None, c: float = 0.05, p1: float = 2.0,
                 pou: PartitionOfUnity = DEFAULT_PARTITION):
        self.grid = grid
        self.a = np.asarray(grid.check(np.asarray(a, dtype=float), ()), dtype=float)
        self.b_lower = float(1.0 + self.a.min())
        if not self.b_lower > 0:
            raise ParameterError(f"coefficient 1 + a must be positive, min is {self.b_lower}")
        self.b_upper = float(1.0 + self.a.max())
        self.c = c
        self.p1 = p1
        self.pou = pou
        self.decomposition = DyadicDecomposition(grid, self.a, pou)
        self.m = choose_cutoff(grid, self.decomposition, c, p1, pou) if m is None else int(m)

    @classmethod
    def bare(cls, grid: TorusGrid, a: np.ndarray) -> "CoefficientField":
        """Coefficient for repeated solves: skips the cutoff and bound bookkeeping."""
        obj = cls.__new__(cls)
        obj.grid, obj.a, obj.pou = grid, a, DEFAULT_PARTITION
        return obj

    @classmethod
    def zero(cls, grid: TorusGrid) -> "CoefficientField":
        return cls(grid, np.zeros(grid.shape), m=-1)

    def high_part(self) -> np.ndarray:
        """``a - S_m a``."""
        return self.a - self.decomposition.partial_sum(self.m)

    def tail_norm(self) -> float:
        """``||a - S_m a||_{B^{N/p1}_{p1,inf} cap L^inf}`` (sum of the two norms)."""
        hp = self.high_part()
        dec = DyadicDecomposition(self.grid, hp, self.pou)
        N = self.grid.dim
        return dec.besov(N / self.p1, self.p1, math.inf) + lp_norm(self.grid, hp, math.inf)

    def smallness_margin(self, mu: float = 1.0, nu_lower: float | None = None) -> float:
        """``c nu_lower / mu - ||a - S_m a||``; positive when the smallness condition holds."""
        nu_lower = self.b_lower * mu if nu_lower is None else nu_lower
        return self.c * nu_lower / mu - self.tail_norm()


@dataclass
class PressureSolution:
    grad_pi: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    pi: np.ndarray | None = None

    @property
    def contraction(self) -> float:
        """Geometric mean of the last few residual ratios."""
        res = [h[1] for h in self.history if h[1] > 0]
        if len(res) < 2:
            return 0.0
        tail = res[-min(6, len(res)):]
        return float((tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1)))

    def log_rows(self):
        """Rows ``(iter, residual, contraction_estimate)`` for the solver log."""
        return list(self.history)


def _l2(X: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(X) ** 2)))


def solve_pressure(coef: CoefficientField, F, tol: float = 1e-10, max_iter: int = 500,
                   pi0=None, diverge_after: int = 5, time_limit: float | None = None) -> PressureSolution:
    """Solve ``div((1 + a) grad Pi) = div F`` and return ``grad Pi``.

    Parameters
    ----------
    coef : CoefficientField
    F : ndarray, shape ``(dim, *sizes)``
        Physical-space vector field; only ``div F`` matters.
    tol : float
        Relative residual ``||div(b grad Pi) - div F||_2 / ||div F||_2`` to reach.
    max_iter : int
    pi0 : ndarray, optional
        Initial guess for the scalar ``Pi`` (physical space).
    diverge_after : int
        Number of consecutive residual increases that signal divergence.

    Returns
    -------
    PressureSolution
        ``grad_pi`` is mean-zero and curl-free.

    Raises
    ------
    NonConvergenceError
        The residual grew ``diverge_after`` times in a row.
    SolverTimeoutError
        ``max_iter`` iterations (or ``time_limit`` seconds) were not enough.
    """
    grid = coef.grid
    F = np.asarray(grid.check(np.asarray(F, dtype=float), (grid.dim,)))
    Fh = grid.fft(F)
    divF = divergence(grid, Fh)
    norm_div = _l2(divF)
    zero = np.zeros((grid.dim,) + grid.shape)
    if norm_div == 0:
        return PressureSolution(zero, 0, 0.0, [(0, 0.0, 0.0)], np.zeros(grid.shape))
    a = coef.a
    if not np.any(a):
        Ph = inverse_laplacian(grid, divF)
        return PressureSolution(grid.ifft(gradient(grid, Ph)), 1, 0.0, [(1, 0.0, 0.0)], grid.ifft(Ph))
    Ph = np.zeros(grid.shape, complex) if pi0 is None else grid.fft(pi0)
    history = []
    prev = math.inf
    grows = 0
    t0 = time.perf_counter()
    for it in range(0, max_iter + 1):
        Gh = gradient(grid, Ph)
        div_aG = divergence(grid, grid.fft(a * grid.ifft(Gh)))
        # residual of div((1 + a) grad Pi) = div F at the current iterate
        res = _l2(divergence(grid, Gh) + div_aG - divF) / norm_div
        ratio = res / prev if math.isfinite(prev) and prev > 0 else 0.0
        history.append((it, res, ratio))
        if res <= tol:
            return PressureSolution(grid.ifft(Gh), it, res, history, grid.ifft(Ph))
        if not math.isfinite(res):
            raise NonConvergenceError("fixed-point residual is not finite", math.inf, history)
        if res > prev:
            grows += 1
            if grows >= diverge_after:
                rate = PressureSolution(None, it, res, history).contraction
                raise NonConvergenceError(
                    f"fixed-point iteration diverges: residual grew {grows} times in a row "
                    f"(contraction factor {rate:.3g} >= 1, ||a||_inf = {np.abs(a).max():.3g})",
                    rate, history)
        else:
            grows = 0
        prev = res
        if it == max_iter:
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            raise SolverTimeoutError(f"pressure solve exceeded {time_limit} s (residual {res:.3g})", res, history)
        Ph = inverse_laplacian(grid, divF - div_aG)
    raise SolverTimeoutError(f"pressure solve did not reach tol {tol:g} in {max_iter} iterations "
                             f"(residual {res:.3g})", res, history)


def split_sources(coef: CoefficientField, f, H, tol: float = 1e-10, max_iter: int = 500):
    """Pressure split ``grad Pi = grad Pi_1 + grad Pi_2`` with
    ``div(b grad Pi_1) = div f`` and ``div(b grad Pi_2) = div H``."""
    s1 = solve_pressure(coef, f, tol, max_iter)
    s2 = solve_pressure(coef, H, tol, max_iter)
    return s1, s2


def _check_estimate_indices(N: int, sigma: float, alpha: float, p1: float):
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    hi = alpha + (0.0 if np.isinf(p1) else N / p1)
    if not (alpha <= sigma <= hi):
        raise ParameterError(f"sigma must lie in [alpha, alpha + N/p1] = [{alpha}, {hi}], got {sigma}")


def elliptic_estimate_terms(coef: CoefficientField, F, grad_pi, sigma: float, alpha: float,
                            p: float = 2.0, p1: float = 2.0, r: float = 2.0) -> tuple[float, float, float]:
    """``(lhs, rhs, A)`` of ``b_lower ||grad Pi||_{B^sigma} <= C A**(|sigma|/min(1,alpha)) ||QF||_{B^sigma}``.

    ``A = 1 + ||grad b||_{B^{N/p1+alpha-1}_{p1,r}} / b_lower``.
    """
    grid = coef.grid
    N = grid.dim
    _check_estimate_indices(N, sigma, alpha, p1)
    QF = grid.ifft(gradient_project(grid, grid.fft(np.asarray(F, float))))
    grad_b = grid.ifft(gradient(grid, grid.fft(coef.a)))
    A = 1.0 + DyadicDecomposition(grid, grad_b, coef.pou).besov(N / p1 + alpha - 1.0, p1, r) / coef.b_lower
    lhs = coef.b_lower * DyadicDecomposition(grid, grad_pi, coef.pou).besov(sigma, p, r)
    qf = DyadicDecomposition(grid, QF, coef.pou).besov(sigma, p, r)
    rhs = A ** (abs(sigma) / min(1.0, alpha)) * qf
    return lhs, rhs, A


def elliptic_estimate_check(coef: CoefficientField, F, sigma: float, alpha: float, p: float = 2.0,
                            p1: float = 2.0, r: float = 2.0, report: InequalityReport | None = None,
                            tol: float = 1e-10) -> InequalityReport:
    """Solve for ``grad Pi`` and append one estimate sample to ``report``.

    Samples with ``|sigma| < 0.25`` are recorded with ``asserted=False``.
    """
    report = report if report is not None else InequalityReport("elliptic-estimate")
    sol = solve_pressure(coef, F, tol)
    lhs, rhs, A = elliptic_estimate_terms(coef, F, sol.grad_pi, sigma, alpha, p, p1, r)
    if rhs == 0:
        report.skipped += 1
        return report
    report.add(lhs, rhs, coef.grid.sizes[0], s=sigma, p=p, r=r, A=A, asserted=abs(sigma) >= 0.25,
               iterations=sol.iterations)
    return report
