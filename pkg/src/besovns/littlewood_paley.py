"""
Littlewood-Paley decomposition on the torus, Besov and Chemin-Lerner norms.

The low-pass profile ``chi`` is radial, equal to one on ``|xi| <= 1/alpha``
and vanishing for ``|xi| >= alpha``; the shell profile is
``phi(xi) = chi(xi / 2) - chi(xi)``. Block ``l >= 0`` has symbol
``phi(2**-l xi)`` and block ``-1`` has symbol ``chi``. Because the symbols
telescope, the sum of all blocks up to ``l_max`` is ``chi(2**-(l_max+1) xi)``,
which is exactly one on every lattice frequency once ``l_max`` is large
enough: the decomposition reconstructs the field to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .reports import DegenerateSampleError, InequalityReport
from .spectral import ParameterError, TorusGrid, lp_norm

__all__ = [
    "PartitionOfUnity",
    "DEFAULT_PARTITION",
    "DyadicDecomposition",
    "BesovParams",
    "StateError",
    "decompose",
    "besov_norm",
    "besov_from_block_norms",
    "CheminLernerAccumulator",
    "chemin_lerner_norm",
    "time_norm",
    "log_interpolation_check",
    "log_interpolation_terms",
    "b_gamma_norm",
    "v_prime",
]


class StateError(RuntimeError):
    """Raised when a norm is requested from an empty accumulator."""


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1) built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Smooth dyadic partition ``chi + sum_l phi(2**-l .) = 1``.

    ``alpha`` must lie in ``(1, sqrt 2]`` so that only adjacent shells overlap.
    The default ``4/3`` gives ``supp chi = {|xi| <= 4/3}`` and
    ``supp phi = {3/4 <= |xi| <= 8/3}``.
    """

    alpha: float = 4.0 / 3.0

    def __post_init__(self):
        if not (1.0 < self.alpha <= math.sqrt(2.0)):
            raise ParameterError(f"shell parameter alpha must lie in (1, sqrt 2], got {self.alpha}")

    @property
    def inner(self) -> float:
        """Radius below which ``chi == 1``; also the inner radius of ``supp phi``."""
        return 1.0 / self.alpha

    @property
    def shell(self) -> tuple[float, float]:
        return (1.0 / self.alpha, 2.0 * self.alpha)

    def chi(self, r):
        return _smoothstep((self.alpha - np.asarray(r, dtype=float)) / (self.alpha - 1.0 / self.alpha))

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r / 2.0) - self.chi(r)

    def block_symbol(self, l: int, r):
        """Symbol of ``Delta_l`` evaluated at radius ``r``."""
        if l < -1:
            return np.zeros_like(np.asarray(r, dtype=float))
        if l == -1:
            return self.chi(r)
        return self.chi(np.asarray(r) * 2.0 ** (-(l + 1))) - self.chi(np.asarray(r) * 2.0 ** (-l))

    def low_symbol(self, l: int, r):
        """Symbol of ``S_l = sum_{k <= l-1} Delta_k``."""
        if l <= -1:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.chi(np.asarray(r) * 2.0 ** (-l))

    def l_max(self, kmax: float) -> int:
        """Last block that can be nonzero when frequencies satisfy ``|xi| <= kmax``."""
        l = -1
        while 2.0 ** (-(l + 1)) * kmax > self.inner:
            l += 1
        return l

    def single_block_band(self, l: int) -> tuple[float, float]:
        """Radii on which block ``l`` has symbol exactly one (and all others zero)."""
        if l == -1:
            return (0.0, self.inner)
        return (self.alpha * 2.0**l, self.inner * 2.0 ** (l + 1))


DEFAULT_PARTITION = PartitionOfUnity()


@lru_cache(maxsize=32)
def _symbols(grid: TorusGrid, pou: PartitionOfUnity) -> tuple[np.ndarray, np.ndarray]:
    lmax = pou.l_max(float(grid.kmag.max()))
    levels = np.arange(-1, lmax + 1)
    r = grid.kmag
    syms = np.stack([pou.block_symbol(int(l), r) for l in levels])
    syms.setflags(write=False)
    levels.setflags(write=False)
    return levels, syms


def block_symbols(grid: TorusGrid, pou: PartitionOfUnity = DEFAULT_PARTITION):
    """``(levels, symbols)`` with ``symbols[i]`` the multiplier of block ``levels[i]``."""
    return _symbols(grid, pou)


class DyadicDecomposition:
    """The blocks ``Delta_l u`` of a (scalar, vector or tensor) field.

    Blocks are computed lazily from the spectral coefficients and cached.
    """

    def __init__(self, grid: TorusGrid, u: np.ndarray, pou: PartitionOfUnity = DEFAULT_PARTITION,
                 spectral: bool = False):
        self.grid = grid
        self.pou = pou
        self.coeffs = grid.check(u) if spectral else grid.fft(u)
        self.levels, self._symbols = block_symbols(grid, pou)
        self._blocks: dict[int, np.ndarray] = {}
        self._norms: dict[float, np.ndarray] = {}

    @property
    def lmax(self) -> int:
        return int(self.levels[-1])

    def _index(self, l: int) -> int | None:
        if l < -1 or l > self.lmax:
            return None
        return l + 1

    def block_coeffs(self, l: int) -> np.ndarray:
        i = self._index(l)
        if i is None:
            return np.zeros_like(self.coeffs)
        return self._symbols[i] * self.coeffs

    def block(self, l: int) -> np.ndarray:
        """Physical-space ``Delta_l u`` (zero outside ``-1..l_max``)."""
        if l not in self._blocks:
            i = self._index(l)
            if i is None:
                return np.zeros(self.coeffs.shape, dtype=float)
            self._blocks[l] = self.grid.ifft(self._symbols[i] * self.coeffs)
        return self._blocks[l]

    def blocks(self) -> list[tuple[int, np.ndarray]]:
        return [(int(l), self.block(int(l))) for l in self.levels]

    def partial_sum(self, l: int) -> np.ndarray:
        """``S_l u = sum_{k <= l-1} Delta_k u``."""
        out = np.zeros(self.coeffs.shape, dtype=float)
        for k in range(-1, min(l - 1, self.lmax) + 1):
            out = out + self.block(k)
        return out

    def partial_sums(self) -> dict[int, np.ndarray]:
        """All ``S_l u`` for ``l = -1 .. l_max + 1`` built by running sums."""
        out = {-1: np.zeros(self.coeffs.shape, dtype=float)}
        acc = out[-1]
        for l in self.levels:
            acc = acc + self.block(int(l))
            out[int(l) + 1] = acc
        return out

    def reconstruct(self) -> np.ndarray:
        return self.partial_sum(self.lmax + 1)

    def norms(self, p: float) -> np.ndarray:
        """``||Delta_l u||_{L^p}`` for every level."""
        key = float(p)
        if key not in self._norms:
            self._norms[key] = np.array([lp_norm(self.grid, self.block(int(l)), p) for l in self.levels])
        return self._norms[key]

    def besov(self, s: float, p: float, r: float) -> float:
        return besov_from_block_norms(self.levels, self.norms(p), s, r)


def decompose(grid: TorusGrid, u: np.ndarray, pou: PartitionOfUnity = DEFAULT_PARTITION) -> DyadicDecomposition:
    return DyadicDecomposition(grid, u, pou)


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    r: float = 2.0

    def __post_init__(self):
        if not (self.p >= 1):
            raise ParameterError(f"Besov integrability p must be >= 1, got {self.p}")
        if not (self.r >= 1):
            raise ParameterError(f"Besov summation index r must be >= 1, got {self.r}")


def _lr(values: np.ndarray, r: float) -> float:
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0
    if np.isinf(r):
        return float(values.max())
    if r == 1:
        return float(values.sum())
    vmax = values.max()
    if vmax == 0:
        return 0.0
    return float(vmax * np.sum((values / vmax) ** r) ** (1.0 / r))


def besov_from_block_norms(levels: Sequence[int], norms: Sequence[float], s: float, r: float) -> float:
    """``|| (2**(l s) norms_l)_l ||_{l^r}``."""
    levels = np.asarray(levels, dtype=float)
    return _lr(2.0 ** (levels * s) * np.asarray(norms, dtype=float), r)


def besov_norm(grid: TorusGrid, u, s: float, p: float = 2.0, r: float = 2.0,
               pou: PartitionOfUnity = DEFAULT_PARTITION) -> float:
    """Nonhomogeneous Besov norm ``||u||_{B^s_{p,r}}``.

    ``u`` may be a physical-space array or an existing decomposition.
    """
    BesovParams(s, p, r)
    dec = u if isinstance(u, DyadicDecomposition) else DyadicDecomposition(grid, u, pou)
    return dec.besov(s, p, r)


def time_norm(times: Sequence[float], values: Sequence[float], rho: float) -> float:
    """``L^rho`` norm in time by the trapezoid rule (``rho = inf`` is the max)."""
    values = np.abs(np.asarray(values, dtype=float))
    times = np.asarray(times, dtype=float)
    if values.size == 0:
        raise StateError("no time samples recorded")
    if np.isinf(rho):
        return float(values.max())
    if values.size == 1:
        return 0.0
    return float(np.trapezoid(values**rho, times) ** (1.0 / rho))


class CheminLernerAccumulator:
    """Time-sampled block norms of one field, for ``L~^rho_T(B^s_{p,r})`` norms.

    The ``L^rho`` time norm is taken block by block before the ``l^r`` sum
    over blocks. Samples are appended by the owner of the time loop.
    """

    def __init__(self, grid: TorusGrid, ps: Sequence[float] = (2.0,),
                 pou: PartitionOfUnity = DEFAULT_PARTITION, name: str = ""):
        self.grid = grid
        self.pou = pou
        self.ps = tuple(float(p) for p in ps)
        self.name = name
        self.levels = block_symbols(grid, pou)[0] if grid is not None else np.array([], dtype=int)
        self.times: list[float] = []
        self._table: dict[float, list[np.ndarray]] = {p: [] for p in self.ps}
        self.sup: list[float] = []

    @classmethod
    def from_block_norms(cls, times, levels, table, p: float = 2.0, sup=None) -> "CheminLernerAccumulator":
        """Build an accumulator from a prescribed ``(ntimes, nlevels)`` norm table."""
        acc = cls(None, (p,))
        acc.levels = np.asarray(levels)
        table = np.atleast_2d(np.asarray(table, dtype=float))
        acc.times = [float(t) for t in times]
        acc._table[float(p)] = [row for row in table]
        acc.sup = list(sup) if sup is not None else [math.nan] * len(acc.times)
        return acc

    def __len__(self):
        return len(self.times)

    def record(self, t: float, u=None, decomposition: DyadicDecomposition | None = None):
        dec = decomposition if decomposition is not None else DyadicDecomposition(self.grid, u, self.pou)
        self.times.append(float(t))
        for p in self.ps:
            self._table[p].append(dec.norms(p).copy())
        self.sup.append(lp_norm(self.grid, dec.reconstruct() if u is None else u, np.inf))
        return dec

    def table(self, p: float) -> np.ndarray:
        if not self.times:
            raise StateError(f"accumulator {self.name!r} is empty")
        if float(p) not in self._table:
            raise ParameterError(f"accumulator {self.name!r} records p in {self.ps}, not {p}")
        return np.array(self._table[float(p)])

    def block_time_norms(self, p: float, rho: float) -> np.ndarray:
        tab = self.table(p)
        return np.array([time_norm(self.times, tab[:, j], rho) for j in range(tab.shape[1])])

    def norm(self, s: float, p: float, r: float, rho: float) -> float:
        """``||u||_{L~^rho_T(B^s_{p,r})}``."""
        return besov_from_block_norms(self.levels, self.block_time_norms(p, rho), s, r)

    def lebesgue_norm(self, s: float, p: float, r: float, rho: float) -> float:
        """The plain ``L^rho_T(B^s_{p,r})`` norm from the same samples."""
        tab = self.table(p)
        per_time = [besov_from_block_norms(self.levels, row, s, r) for row in tab]
        return time_norm(self.times, per_time, rho)

    def sup_norm(self) -> float:
        """``||u||_{L^inf_T(L^inf)}`` over recorded samples."""
        if not self.times:
            raise StateError(f"accumulator {self.name!r} is empty")
        return float(np.max(self.sup))

    def tail_norm(self, s: float, p: float, rho: float, m: int, r: float = 1.0) -> float:
        """``sum_{l >= m} 2**(l s) ||Delta_l u||_{L^rho_T(L^p)}`` (``l^r`` over the tail)."""
        mask = self.levels >= m
        return besov_from_block_norms(self.levels[mask], self.block_time_norms(p, rho)[mask], s, r)


def chemin_lerner_norm(acc: CheminLernerAccumulator, bp: BesovParams, rho: float) -> float:
    return acc.norm(bp.s, bp.p, bp.r, rho)


def log_interpolation_terms(acc: CheminLernerAccumulator, s: float, eps: float, rho: float,
                            p: float | None = None) -> tuple[float, float]:
    """Left and right sides of the logarithmic interpolation inequality.

    ``lhs = ||u||_{L~^rho(B^s_{p,1})}`` and
    ``rhs = (1+eps)/eps * X * (1 + log(Y / X))`` with ``X`` the
    ``L~^rho(B^s_{p,inf})`` norm and ``Y`` the ``L~^rho(B^{s+eps}_{p,inf})`` norm.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    p = acc.ps[0] if p is None else p
    if np.isinf(p):
        raise ParameterError("the logarithmic interpolation inequality needs p < inf")
    lhs = acc.norm(s, p, 1.0, rho)
    x = acc.norm(s, p, np.inf, rho)
    y = acc.norm(s + eps, p, np.inf, rho)
    if x == 0 or y == 0:
        raise DegenerateSampleError("interpolation check needs nonzero B^s_{p,inf} and B^{s+eps}_{p,inf} norms")
    rhs = (1.0 + eps) / eps * x * (1.0 + math.log(y / x))
    return lhs, rhs


def log_interpolation_check(trajectory, s: float, eps: float, rho: float, p: float = 2.0,
                            report: InequalityReport | None = None, resolution: int = 0) -> InequalityReport:
    """Record one sample of the logarithmic interpolation inequality.

    ``trajectory`` is a :class:`CheminLernerAccumulator` or a
    ``(grid, times, fields)`` triple.
    """
    if isinstance(trajectory, CheminLernerAccumulator):
        acc = trajectory
    else:
        grid, times, fields = trajectory
        acc = CheminLernerAccumulator(grid, (p,))
        for t, u in zip(times, fields):
            acc.record(t, u)
        resolution = resolution or grid.sizes[0]
    lhs, rhs = log_interpolation_terms(acc, s, eps, rho, p)
    report = report if report is not None else InequalityReport("log-interpolation")
    report.add(lhs, rhs, resolution, s=s, p=p, r=1.0, eps=eps, rho=rho)
    return report


def _grad_low_norms(grid: TorusGrid, v: np.ndarray, p: float, pou: PartitionOfUnity, js) -> np.ndarray:
    """``||grad S_j v||_{L^p}`` for the requested ``j``."""
    V = grid.fft(v)
    out = []
    ncomp = V.ndim - grid.dim
    k = grid.kdiff.reshape((grid.dim,) + (1,) * ncomp + grid.shape)
    for j in js:
        sym = pou.low_symbol(int(j), grid.kmag)
        G = grid.ifft(1j * k * (sym * V))
        out.append(lp_norm(grid, G, p))
    return np.array(out)


def _dyadic_range(grid: TorusGrid, pou: PartitionOfUnity) -> np.ndarray:
    lmax = block_symbols(grid, pou)[0][-1]
    return np.arange(0, lmax + 2)


def b_gamma_norm(grid: TorusGrid, u: np.ndarray, gamma: Callable[[float], float],
                 pou: PartitionOfUnity = DEFAULT_PARTITION) -> float:
    """``||u||_inf + sup_{j >= 0} ||grad S_j u||_inf / Gamma(2**j)``.

    Beyond ``l_max + 1`` the partial sums no longer change, so the supremum
    over the finite range is the supremum over all ``j`` when ``Gamma`` is
    nondecreasing.
    """
    js = _dyadic_range(grid, pou)
    g = np.array([float(gamma(2.0 ** int(j))) for j in js])
    if np.any(g <= 0):
        raise ParameterError("Gamma must be positive on dyadic arguments")
    grads = _grad_low_norms(grid, u, np.inf, pou, js)
    return lp_norm(grid, u, np.inf) + float(np.max(grads / g))


def v_prime(grid: TorusGrid, v: np.ndarray, p1: float, alpha: float,
            pou: PartitionOfUnity = DEFAULT_PARTITION) -> float:
    """``sup_{j >= 0} 2**(j N / p1) ||grad S_j v||_{L^p1} / (j+1)**alpha``."""
    if not (0.0 <= alpha <= 1.0):
        raise ParameterError(f"V' exponent alpha must lie in [0, 1], got {alpha}")
    js = _dyadic_range(grid, pou)
    grads = _grad_low_norms(grid, v, p1, pou, js)
    scale = 2.0 ** (js * grid.dim / p1) if not np.isinf(p1) else np.ones(len(js))
    return float(np.max(scale * grads / (js + 1.0) ** alpha))
