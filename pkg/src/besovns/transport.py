"""
Transport ``d_t a + v . grad a = g`` by a dealiased pseudo-spectral SSP-RK3
scheme, and the loss-of-regularity reports built on its trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .littlewood_paley import (
    DEFAULT_PARTITION,
    CheminLernerAccumulator,
    DyadicDecomposition,
    PartitionOfUnity,
    besov_from_block_norms,
    v_prime,
)
from .reports import InequalityReport
from .spectral import ParameterError, TorusGrid, divergence, gradient, lp_norm

__all__ = [
    "CFLError",
    "ScheduleExhaustedError",
    "TransportResult",
    "advect",
    "ssp_rk3_step",
    "LossSchedule",
    "limited_loss_report",
    "limited_loss_tail_report",
    "linear_loss_report",
    "transport_index_check",
]


class CFLError(ArithmeticError):
    """``max|v| dt / h`` exceeds the configured limit."""


class ScheduleExhaustedError(ArithmeticError):
    """The drifting index ``sigma_t`` fell below the floor ``s1``."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


def _as_callable(x, default=None):
    if x is None:
        return default
    if callable(x):
        return x
    arr = np.asarray(x, dtype=float)
    return lambda t, *args: arr


def _check_div_free(grid: TorusGrid, v: np.ndarray, tol: float):
    V = grid.fft(v)
    div = float(np.abs(grid.ifft(divergence(grid, V))).max())
    scale = max(lp_norm(grid, v, math.inf) * grid.kmax, 1e-300)
    if div > tol * scale:
        raise ParameterError(f"velocity is not divergence-free: ||div v||_inf = {div:.3g}")


def cfl_number(grid: TorusGrid, v: np.ndarray, dt: float) -> float:
    return float(lp_norm(grid, v, math.inf) * dt / min(grid.spacing))


def advection_rhs(grid: TorusGrid, a_hat: np.ndarray, v: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Spectral ``-v . grad a`` with the two-thirds rule on both factors and the product."""
    mask = grid.dealias_mask if dealias else 1.0
    grad_a = grid.ifft(gradient(grid, a_hat * mask))
    vm = grid.ifft(grid.fft(v) * mask) if dealias else v
    return -grid.fft(np.sum(vm * grad_a, axis=0)) * mask


def ssp_rk3_step(grid: TorusGrid, a_hat: np.ndarray, t: float, dt: float, v: Callable, g: Callable | None,
                 dealias: bool = True) -> np.ndarray:
    """One Shu-Osher SSP-RK3 step in spectral space."""
    def rhs(tt, ah):
        out = advection_rhs(grid, ah, v(tt), dealias)
        if g is not None:
            out = out + grid.fft(g(tt, grid.ifft(ah)))
        return out

    a1 = a_hat + dt * rhs(t, a_hat)
    a2 = 0.75 * a_hat + 0.25 * (a1 + dt * rhs(t + dt, a1))
    return a_hat / 3.0 + 2.0 / 3.0 * (a2 + dt * rhs(t + 0.5 * dt, a2))


@dataclass
class TransportResult:
    """Trajectory of a transport solve.

    ``accumulator`` holds block norms of ``a`` at every recorded time;
    ``g_accumulator`` those of the source (when one is given);
    ``vprime`` maps ``(p1, alpha)`` to the sampled ``V'`` values.
    """

    grid: TorusGrid
    times: list
    a0: np.ndarray
    a: np.ndarray
    accumulator: CheminLernerAccumulator
    g_accumulator: CheminLernerAccumulator | None = None
    vprime: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    lp_history: dict = field(default_factory=dict)
    dt: float = 0.0

    def vprime_integral(self, p1: float, alpha: float, upto: float | None = None) -> float:
        t = np.asarray(self.accumulator.times)
        vals = np.asarray(self.vprime[(float(p1), float(alpha))])
        if upto is not None:
            keep = t <= upto + 1e-14
            t, vals = t[keep], vals[keep]
        return float(np.trapezoid(vals, t)) if len(t) > 1 else 0.0


def advect(grid: TorusGrid, a0, v, T: float, dt: float, g=None, cfl: float = 0.5, dealias: bool = True,
           record_every: int = 1, ps=(2.0,), vprime_params=(), keep_every: int = 0,
           lp_track=(), div_tol: float = 1e-10, pou: PartitionOfUnity = DEFAULT_PARTITION) -> TransportResult:
    """Solve ``d_t a + v . grad a = g`` on ``[0, T]``.

    Parameters
    ----------
    grid : TorusGrid
    a0 : ndarray
        Initial scalar field.
    v : ndarray or callable
        Divergence-free velocity ``(dim, *sizes)``, or ``v(t)`` returning one.
    T, dt : float
        Horizon and step; the last step is shortened to land on ``T``.
    g : ndarray or callable, optional
        Source, constant or ``g(t, a)``.
    cfl : float
        Largest admissible ``max|v| dt / h``.
    record_every : int
        Cadence of accumulator samples (in steps).
    ps : sequence of float
        Integrabilities recorded by the accumulator.
    vprime_params : sequence of (p1, alpha)
        ``V'_{p1,alpha}(t)`` is sampled at recorded times for each pair.
    keep_every : int
        Keep a physical snapshot every so many steps (0 keeps none).
    lp_track : sequence of float
        ``L^p`` norms of ``a`` recorded at every step.

    Raises
    ------
    CFLError
        The CFL number exceeds ``cfl`` at some step.
    ParameterError
        The velocity is not divergence-free.
    """
    if dt <= 0 or T < 0:
        raise ParameterError("need dt > 0 and T >= 0")
    a0 = np.asarray(grid.check(np.asarray(a0, dtype=float), ()), dtype=float)
    vf = _as_callable(v)
    gf = _as_callable(g)
    frozen_v = not callable(v)
    acc = CheminLernerAccumulator(grid, ps, pou, name="a")
    gacc = CheminLernerAccumulator(grid, ps, pou, name="g") if g is not None else None
    vp = {(float(p1), float(al)): [] for p1, al in vprime_params}
    track = {float(p): [] for p in lp_track}

    def record(t, a, step):
        acc.record(t, a)
        if gacc is not None:
            gacc.record(t, gf(t, a))
        vt = vf(t)
        for (p1, al) in vp:
            vp[(p1, al)].append(v_prime(grid, vt, p1, al, pou))

    def check_v(t, vt):
        _check_div_free(grid, vt, div_tol)
        c = cfl_number(grid, vt, dt)
        if c > cfl * (1 + 1e-12):
            raise CFLError(f"CFL number {c:.3g} exceeds limit {cfl} at t = {t:.6g} (dt = {dt:g})")

    check_v(0.0, vf(0.0))
    a_hat = grid.fft(a0)
    t = 0.0
    times = [0.0]
    snaps = [(0.0, a0.copy())] if keep_every else []
    record(0.0, a0, 0)
    for p in track:
        track[p].append(lp_norm(grid, a0, p))
    nsteps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    for n in range(1, nsteps + 1):
        h = min(dt, T - t)
        if not frozen_v:
            check_v(t, vf(t))
        a_hat = ssp_rk3_step(grid, a_hat, t, h, vf, gf, dealias)
        t = T if n == nsteps else t + h
        times.append(t)
        if (n % record_every == 0) or n == nsteps or track or (keep_every and n % keep_every == 0):
            a = grid.ifft(a_hat)
            if n % record_every == 0 or n == nsteps:
                record(t, a, n)
            for p in track:
                track[p].append(lp_norm(grid, a, p))
            if keep_every and (n % keep_every == 0 or n == nsteps):
                snaps.append((t, a.copy()))
    return TransportResult(grid, times, a0, grid.ifft(a_hat), acc, gacc, vp, snaps, track, dt)


# -- loss schedules and reports -------------------------------------------


@dataclass
class LossSchedule:
    """``sigma_t = sigma - lam int_0^t (V'_{p1,1} + W) dt'`` with floor ``s1``."""

    sigma: float
    lam: float
    s1: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(1))
    rate: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"slope lambda must be positive, got {self.lam}")
        if not self.sigma > self.s1:
            raise ParameterError(f"need sigma > s1, got sigma={self.sigma}, s1={self.s1}")
        self.times = np.asarray(self.times, dtype=float)
        self.rate = np.asarray(self.rate, dtype=float)
        if np.any(self.rate < 0):
            raise ParameterError("V' + W must be nonnegative")

    @classmethod
    def from_result(cls, result: TransportResult, sigma: float, lam: float, s1: float,
                    p1: float = math.inf, W=None) -> "LossSchedule":
        t = np.asarray(result.accumulator.times)
        rate = np.asarray(result.vprime[(float(p1), 1.0)], dtype=float)
        if W is not None:
            rate = rate + (np.asarray([W(tt) for tt in t]) if callable(W) else np.asarray(W, float))
        return cls(sigma, lam, s1, t, rate)

    @property
    def sigma_t(self) -> np.ndarray:
        if len(self.times) < 2:
            return np.full(len(self.times), self.sigma)
        dt = np.diff(self.times)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (self.rate[1:] + self.rate[:-1]))])
        return self.sigma - self.lam * cum

    def breach_time(self) -> float | None:
        st = self.sigma_t
        bad = np.nonzero(st < self.s1)[0]
        return float(self.times[bad[0]]) if len(bad) else None

    def require_valid(self):
        tb = self.breach_time()
        if tb is not None:
            raise ScheduleExhaustedError(
                f"loss schedule exhausted: sigma_t fell below s1 = {self.s1} at t = {tb:.6g}", tb)


def transport_index_check(sigma: float, p: float, p1: float, N: int):
    """Constraints ``1 <= p <= p1`` and ``-1 - N min(1/p1, 1/p') < sigma < 1 + N/p1``."""
    ip1 = 0.0 if np.isinf(p1) else 1.0 / p1
    ipp = 1.0 - (0.0 if np.isinf(p) else 1.0 / p)
    if not (1 <= p <= p1):
        raise ParameterError(f"need 1 <= p <= p1, got p={p}, p1={p1}")
    lo = -1.0 - N * min(ip1, ipp)
    hi = 1.0 + N * ip1
    if not (lo < sigma < hi):
        raise ParameterError(f"sigma must lie in ({lo}, {hi}), got {sigma}")


def _loss_factor(V: float, eps: float, alpha: float, c_exp: float) -> float:
    return math.exp(c_exp * eps ** (-alpha / (1.0 - alpha)) * V ** (1.0 / (1.0 - alpha)))


def _source_norm(result: TransportResult, sigma: float, p: float) -> float:
    if result.g_accumulator is None:
        return 0.0
    return result.g_accumulator.norm(sigma, p, math.inf, 1.0)


def limited_loss_report(result: TransportResult, sigma: float, eps: float, p: float = 2.0,
                        p1: float = math.inf, alpha: float = 0.5, c_exp: float = 1.0,
                        report: InequalityReport | None = None, **extra) -> InequalityReport:
    """One sample of the limited-loss transport estimate.

    ``lhs = ||a||_{L~^inf_T(B^{sigma-eps}_{p,inf})}`` and
    ``rhs = (||a0||_{B^sigma_{p,inf}} + ||g||_{L~^1_T(B^sigma_{p,inf})}) exp(c_exp eps**(-alpha/(1-alpha)) V**(1/(1-alpha)))``
    with ``V = int_0^T V'_{p1,alpha}``.
    """
    grid = result.grid
    transport_index_check(sigma, p, p1, grid.dim)
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    acc = result.accumulator
    lhs = acc.norm(sigma - eps, p, math.inf, math.inf)
    a0n = besov_from_block_norms(acc.levels, acc.table(p)[0], sigma, math.inf)
    V = result.vprime_integral(p1, alpha)
    rhs = (a0n + _source_norm(result, sigma, p)) * _loss_factor(V, eps, alpha, c_exp)
    report = report if report is not None else InequalityReport("transport-limited-loss")
    report.add(lhs, rhs, grid.sizes[0], s=sigma, p=p, r=math.inf, eps=eps, V=V, **extra)
    return report


def limited_loss_tail_report(result: TransportResult, sigma: float, eps: float, m: int, eta: float = 1.0,
                             p: float = 2.0, p1: float = math.inf, alpha: float = 0.5, c_exp: float = 1.0,
                             report: InequalityReport | None = None) -> InequalityReport:
    """High-frequency variant: tail sums over ``l >= m``.

    ``lhs = sum_{l >= m} 2**((sigma-eps) l) ||Delta_l a||_{L^inf_t(L^p)}`` and
    ``rhs = sum_{l >= m} 2**(sigma l) ||Delta_l a0||_{L^p}
    + eta**(alpha/(1-alpha)) int_0^T V'(t) (||a0||_{B^sigma_{p,inf}} + ||g||) exp(...V(t)...) dt``.
    ``eta`` is a free parameter of the bound.
    """
    grid = result.grid
    transport_index_check(sigma, p, p1, grid.dim)
    acc = result.accumulator
    lhs = acc.tail_norm(sigma - eps, p, math.inf, m)
    levels = acc.levels
    tail = levels >= m
    a0_blocks = acc.table(p)[0]
    first = besov_from_block_norms(levels[tail], a0_blocks[tail], sigma, 1.0)
    a0n = besov_from_block_norms(levels, a0_blocks, sigma, math.inf)
    t = np.asarray(acc.times)
    vp = np.asarray(result.vprime[(float(p1), float(alpha))])
    Vt = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (vp[1:] + vp[:-1]))])
    integrand = vp * np.array([_loss_factor(V, eps, alpha, c_exp) for V in Vt])
    integral = float(np.trapezoid(integrand, t)) if len(t) > 1 else 0.0
    rhs = first + eta ** (alpha / (1 - alpha)) * (a0n + _source_norm(result, sigma, p)) * integral
    report = report if report is not None else InequalityReport("transport-limited-loss-tail")
    report.add(lhs, rhs, grid.sizes[0], s=sigma, p=p, r=1.0, eps=eps, m=m, eta=eta)
    return report


def linear_loss_report(result: TransportResult, schedule: LossSchedule, p: float = 2.0, p1: float = math.inf,
                       m: int | None = None, g1: CheminLernerAccumulator | None = None,
                       report: InequalityReport | None = None) -> InequalityReport:
    """Drifting-index estimate ``sup_t ||a(t)||_{B^{sigma_t}_{p,inf}} <= lam/(lam - C) (||a0||_{B^sigma} + int ||g1||)``.

    The recorded ratio ``lhs / rhs`` equals ``lam / (lam - C)``, so the
    implied constant ``C = lam (1 - rhs / lhs)`` is stored with the sample
    (zero when the ratio is at most one). With ``m`` set, the tail version
    ``sup_t sum_{l >= m} 2**(l sigma_t) ||Delta_l a(t)||_{L^p}`` is used.

    Raises
    ------
    ScheduleExhaustedError
        ``sigma_t`` falls below ``s1`` within the trajectory.
    """
    grid = result.grid
    N = grid.dim
    ip1 = 0.0 if np.isinf(p1) else 1.0 / p1
    ipp = 1.0 - (0.0 if np.isinf(p) else 1.0 / p)
    if not (1 <= p <= p1):
        raise ParameterError(f"need 1 <= p <= p1, got p={p}, p1={p1}")
    if not (schedule.sigma < 1 + N * ip1):
        raise ParameterError(f"sigma must be < 1 + N/p1 = {1 + N * ip1}")
    if not (schedule.sigma > -N * min(ip1, ipp)):
        raise ParameterError(f"sigma must be > -N min(1/p1, 1/p') = {-N * min(ip1, ipp)}")
    schedule.require_valid()
    acc = result.accumulator
    tab = acc.table(p)
    st = schedule.sigma_t
    if len(st) != tab.shape[0]:
        raise ParameterError("schedule times do not match the recorded trajectory")
    levels = acc.levels
    if m is None:
        per_t = [besov_from_block_norms(levels, row, s, math.inf) for row, s in zip(tab, st)]
    else:
        tail = levels >= m
        per_t = [besov_from_block_norms(levels[tail], row[tail], s, 1.0) for row, s in zip(tab, st)]
    lhs = float(np.max(per_t))
    rhs = besov_from_block_norms(levels, tab[0], schedule.sigma, math.inf)
    if g1 is not None:
        rhs += g1.lebesgue_norm(schedule.sigma, p, math.inf, 1.0)
    ratio = lhs / rhs if rhs > 0 else math.inf
    implied = schedule.lam * (1.0 - 1.0 / ratio) if ratio > 1 else 0.0
    law = "transport-linear-loss" if m is None else "transport-linear-loss-tail"
    report = report if report is not None else InequalityReport(law)
    report.add(lhs, rhs, grid.sizes[0], s=schedule.sigma, p=p, r=math.inf if m is None else 1.0,
               lam=schedule.lam, implied_C=implied, sigma_T=float(st[-1]), m=m)
    return report
