"""
Grids, discrete Fourier transforms and differential operators on the torus.

Fields are plain numpy arrays. A scalar field on a grid of shape ``sizes``
has shape ``sizes``; a vector field has shape ``(dim, *sizes)`` and a tensor
field ``(dim, dim, *sizes)``. Component axes always come first, grid axes
last. Spectral coefficients use the same layout with complex dtype and the
``numpy.fft`` index ordering.

The transform is normalised so that ``F[k] = mean(f * exp(-i k.x))``: a
constant field maps to its value at ``k = 0`` and Parseval reads
``mean(|f|**2) == sum(|F|**2)``.

Differential operators use the wavevector with the Nyquist component
zeroed, so that ``div(grad f) == laplacian(f)`` and the Leray projector is
an exact orthogonal projector on the discrete lattice.
"""
from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "ParameterError",
    "TorusGrid",
    "transform",
    "inverse_transform",
    "gradient",
    "divergence",
    "laplacian",
    "inverse_laplacian",
    "leray_project",
    "gradient_project",
    "strain_tensor",
    "lp_norm",
    "multiply",
    "dealias",
]


class ShapeError(ValueError):
    """Raised when an array does not match the grid it is used with."""


class ParameterError(ValueError):
    """Raised for out-of-range numerical parameters (p < 1, bad indices...)."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class TorusGrid:
    """Uniform grid on the periodic box ``prod_i [0, a_i)``.

    Parameters
    ----------
    sizes : sequence of int
        Points per axis. Each must be a power of two and at least 8.
    periods : sequence of float, optional
        Box lengths ``a_i``; defaults to ``2*pi`` on every axis.
    """

    def __init__(self, sizes: Sequence[int], periods: Sequence[float] | None = None):
        sizes = tuple(int(n) for n in sizes)
        if len(sizes) not in (2, 3):
            raise ParameterError(f"dimension must be 2 or 3, got {len(sizes)}")
        for n in sizes:
            if n < 8 or not _is_pow2(n):
                raise ParameterError(f"grid sizes must be powers of two >= 8, got {sizes}")
        if periods is None:
            periods = (2 * np.pi,) * len(sizes)
        periods = tuple(float(a) for a in periods)
        if len(periods) != len(sizes) or any(a <= 0 for a in periods):
            raise ParameterError(f"periods must be {len(sizes)} positive lengths, got {periods}")
        self.sizes = sizes
        self.periods = periods

    @classmethod
    def square(cls, n: int, dim: int = 2, period: float = 2 * np.pi) -> "TorusGrid":
        return cls((n,) * dim, (period,) * dim)

    def __repr__(self):
        return f"TorusGrid(sizes={self.sizes}, periods={self.periods})"

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and self.sizes == other.sizes
            and self.periods == other.periods
        )

    def __hash__(self):
        return hash((self.sizes, self.periods))

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(a / n for a, n in zip(self.periods, self.sizes))

    def rescaled(self, factor: float) -> "TorusGrid":
        """Same point counts on the box shrunk by ``factor``."""
        return TorusGrid(self.sizes, tuple(a / factor for a in self.periods))

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(tuple(n * factor for n in self.sizes), self.periods)

    # -- lattice ---------------------------------------------------------

    @cached_property
    def indices(self) -> tuple[np.ndarray, ...]:
        """Integer frequencies ``n`` per axis, broadcastable, in fft order."""
        out = []
        for i, n in enumerate(self.sizes):
            shape = [1] * self.dim
            shape[i] = n
            out.append((np.fft.fftfreq(n) * n).round().astype(np.int64).reshape(shape))
        return tuple(out)

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Boolean mask of modes carrying a Nyquist index on some axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for n_i, n in zip(self.indices, self.sizes):
            mask = mask | (n_i == -n // 2)
        return mask

    @cached_property
    def wavevector(self) -> np.ndarray:
        """Full wavevector ``k_i = 2 pi n_i / a_i``, shape ``(dim, *sizes)``."""
        k = np.zeros((self.dim,) + self.shape)
        for i, (n_i, a) in enumerate(zip(self.indices, self.periods)):
            k[i] = (2 * np.pi / a) * n_i
        return k

    @cached_property
    def kmag(self) -> np.ndarray:
        """``|k|`` on the full lattice (Nyquist included)."""
        return np.sqrt(np.sum(self.wavevector**2, axis=0))

    @cached_property
    def kdiff(self) -> np.ndarray:
        """Wavevector used for differentiation (Nyquist component zeroed)."""
        k = self.wavevector.copy()
        for i, (n_i, n) in enumerate(zip(self.indices, self.sizes)):
            k[i] = np.where(n_i == -n // 2, 0.0, k[i])
        return k

    @cached_property
    def ksq(self) -> np.ndarray:
        """``|k|^2`` of the differentiation wavevector (symbol of ``-Laplacian``)."""
        return np.sum(self.kdiff**2, axis=0)

    @cached_property
    def _inv_ksq(self) -> np.ndarray:
        ksq = self.ksq
        out = np.zeros_like(ksq)
        np.divide(1.0, ksq, out=out, where=ksq > 0)
        return out

    @property
    def kmax(self) -> float:
        """Largest ``|k|`` on the lattice."""
        return float(np.sqrt(sum((np.pi * n / a) ** 2 for n, a in zip(self.sizes, self.periods))))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with ``|n_i| < size_i / 3`` on every axis."""
        mask = np.ones(self.shape, dtype=bool)
        for n_i, n in zip(self.indices, self.sizes):
            mask = mask & (np.abs(n_i) < n / 3.0)
        return mask

    def nodes(self) -> tuple[np.ndarray, ...]:
        """Coordinates ``x_i = j a_i / n_i`` as broadcastable arrays."""
        out = []
        for i, (n, a) in enumerate(zip(self.sizes, self.periods)):
            shape = [1] * self.dim
            shape[i] = n
            out.append((np.arange(n) * (a / n)).reshape(shape))
        return tuple(out)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.broadcast_to(x, self.shape) for x in self.nodes())

    # -- shape checks ----------------------------------------------------

    def check(self, f: np.ndarray, components: tuple[int, ...] | None = None) -> np.ndarray:
        """Validate that the trailing axes of ``f`` match the grid."""
        f = np.asarray(f)
        if f.shape[f.ndim - self.dim:] != self.shape or f.ndim < self.dim:
            raise ShapeError(f"field of shape {f.shape} does not match grid {self.shape}")
        if components is not None and f.shape[: f.ndim - self.dim] != tuple(components):
            raise ShapeError(
                f"expected component shape {tuple(components)}, got {f.shape[: f.ndim - self.dim]}"
            )
        return f

    def component_shape(self, f: np.ndarray) -> tuple[int, ...]:
        return tuple(np.shape(f)[: np.ndim(f) - self.dim])

    @property
    def _axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    # -- transforms ------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(self.check(f), axes=self._axes, norm="forward")

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(self.check(F), axes=self._axes, norm="forward").real


def transform(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Forward transform of a real field (unitary mean normalisation)."""
    return grid.fft(f)


def inverse_transform(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    """Inverse transform, returning the real part."""
    return grid.ifft(F)


def gradient(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    """Spectral gradient; adds a leading axis of length ``dim``."""
    F = grid.check(F)
    return 1j * grid.kdiff.reshape((grid.dim,) + (1,) * (F.ndim - grid.dim) + grid.shape) * F


def divergence(grid: TorusGrid, U: np.ndarray) -> np.ndarray:
    """Spectral divergence, contracting the first component axis."""
    U = grid.check(U)
    if U.shape[0] != grid.dim:
        raise ShapeError(f"divergence needs a leading axis of length {grid.dim}, got {U.shape}")
    k = grid.kdiff.reshape((grid.dim,) + (1,) * (U.ndim - 1 - grid.dim) + grid.shape)
    return np.sum(1j * k * U, axis=0)


def laplacian(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    return -grid.ksq * grid.check(F)


def inverse_laplacian(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    """Mean-zero solution of ``Laplacian(phi) = F`` (the mean of F is ignored)."""
    return -grid._inv_ksq * grid.check(F)


def gradient_project(grid: TorusGrid, U: np.ndarray) -> np.ndarray:
    """``Q = Id - P``: projection onto gradients. The mean mode maps to zero."""
    U = grid.check(U, (grid.dim,))
    k = grid.kdiff
    return k * (np.sum(k * U, axis=0) * grid._inv_ksq)


def leray_project(grid: TorusGrid, U: np.ndarray) -> np.ndarray:
    """Leray projector onto divergence-free fields; the mean flow is untouched."""
    return grid.check(U, (grid.dim,)) - gradient_project(grid, U)


def strain_tensor(grid: TorusGrid, U: np.ndarray) -> np.ndarray:
    """``Du = (grad u + grad u^T) / 2`` in spectral form, shape ``(dim, dim, ...)``.

    Entry ``[i, j]`` is ``(d_j u_i + d_i u_j) / 2``.
    """
    U = grid.check(U, (grid.dim,))
    G = gradient(grid, U)  # G[j, i] = d_j u_i
    return 0.5 * (G + np.swapaxes(G, 0, 1))


def lp_norm(grid: TorusGrid, f: np.ndarray, p: float) -> float:
    """``L^p`` norm over the box by uniform quadrature.

    Vector and tensor fields use the pointwise Euclidean (Frobenius) norm.
    ``p = inf`` gives the maximum modulus over grid nodes.
    """
    if not (p >= 1):
        raise ParameterError(f"L^p norm needs p >= 1, got {p}")
    f = grid.check(f)
    ncomp = f.ndim - grid.dim
    mod = np.abs(f) if ncomp == 0 else np.sqrt(np.sum(f.reshape((-1,) + grid.shape) ** 2, axis=0))
    if np.isinf(p):
        return float(mod.max())
    if p == 2:
        return float(np.sqrt(np.mean(mod**2) * grid.volume))
    if p == 1:
        return float(np.mean(mod) * grid.volume)
    return float((np.mean(mod**p) * grid.volume) ** (1.0 / p))


def _pad(grid: TorusGrid, F: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Embed spectral coefficients into a larger lattice (Nyquist dropped)."""
    lead = F.shape[: F.ndim - grid.dim]
    out = np.zeros(lead + shape, dtype=complex)
    sl_src, sl_dst = [], []
    for n, m in zip(grid.sizes, shape):
        h = n // 2
        sl_src.append((np.r_[0:h, n - h + 1: n]))
        sl_dst.append((np.r_[0:h, m - h + 1: m]))
    idx_src = np.ix_(*sl_src)
    idx_dst = np.ix_(*sl_dst)
    out[(Ellipsis,) + idx_dst] = F[(Ellipsis,) + idx_src]
    return out


def _truncate(grid: TorusGrid, G: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = G.shape[: G.ndim - len(shape)]
    out = np.zeros(lead + grid.shape, dtype=complex)
    sl_src, sl_dst = [], []
    for n, m in zip(grid.sizes, shape):
        h = n // 2
        sl_dst.append((np.r_[0:h, n - h + 1: n]))
        sl_src.append((np.r_[0:h, m - h + 1: m]))
    out[(Ellipsis,) + np.ix_(*sl_dst)] = G[(Ellipsis,) + np.ix_(*sl_src)]
    return out


def multiply(grid: TorusGrid, f: np.ndarray, g: np.ndarray, pad: bool = False) -> np.ndarray:
    """Pointwise product of two real fields.

    With ``pad=False`` this is the plain grid product (aliasing included).
    With ``pad=True`` both factors are stripped of their Nyquist modes, the
    product is formed on a 3/2-padded grid and truncated back, which gives
    the exact Fourier truncation of the continuous product. The padded
    product obeys the Leibniz rule exactly under spectral differentiation.
    Broadcasting over leading component axes follows numpy rules.
    """
    if not pad:
        return np.asarray(f) * np.asarray(g)
    shape = tuple(3 * n // 2 for n in grid.sizes)
    axes = tuple(range(-grid.dim, 0))
    fp = np.fft.ifftn(_pad(grid, grid.fft(f), shape), axes=axes, norm="forward").real
    gp = np.fft.ifftn(_pad(grid, grid.fft(g), shape), axes=axes, norm="forward").real
    H = np.fft.fftn(fp * gp, axes=axes, norm="forward")
    return grid.ifft(_truncate(grid, H, shape))


def dealias(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    """Apply the two-thirds truncation to spectral coefficients."""
    return np.where(grid.dealias_mask, grid.check(F), 0.0)
