"""
Random fields with prescribed Besov regularity and the inequality sweep driver.

Sampling law
------------
Lattice points are grouped in cubic annuli ``A_j = {n : 2**(j-1) <= |n|_inf < 2**j}``
(``A_0 = {0}``). On ``A_j`` the raw coefficients are complex Gaussians drawn
from ``default_rng((seed, component, j))`` over the box ``[-2**j, 2**j)**N``
and made Hermitian by ``c(n) = (G(n) + conj G(-n)) / sqrt 2``. The annulus
part is divided by its ``L^p`` norm, measured on a fixed grid of
``max(4 * 2**j, 8)`` points per axis, then multiplied by ``eps_j`` and by the block weight
``sum_l phi_l(|k|) 2**(-l s)``.
Block ``j`` thus has ``L^p`` size close to ``2**(-j s) eps_j`` and the design
norm is ``||(eps_j)||_{l^r}``.

Because draws depend only on ``(seed, component, j)``, two grids share
their low annuli coefficient by coefficient. Annuli touching the Nyquist
frequency are dropped.
"""
from __future__ import annotations

import json
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .bony import ProductLawCase, bony_decomposition, commutator_estimate, product_law_check
from .elliptic import CoefficientField, elliptic_estimate_check
from .littlewood_paley import (
    DEFAULT_PARTITION,
    CheminLernerAccumulator,
    DyadicDecomposition,
    log_interpolation_check,
    v_prime,
)
from .reports import DegenerateSampleError, InequalityReport, write_reports_csv
from .spectral import ParameterError, TorusGrid, gradient, leray_project, lp_norm
from .transport import advect, limited_loss_report

log = logging.getLogger(__name__)

__all__ = [
    "SampleSpec",
    "generate_sample",
    "design_norm",
    "Law",
    "LAWS",
    "SuiteConfig",
    "SuiteResult",
    "run_suite",
    "write_suite",
]

ENVELOPES = ("flat", "decay", "lr", "single")


@dataclass(frozen=True)
class SampleSpec:
    """Recipe for one random field.

    Parameters
    ----------
    s : float
        Target regularity.
    p, r : float
        Integrability and summation index of the design norm.
    envelope : str
        Block weights ``eps_j``: ``"flat"`` (all ones), ``"decay"``
        (``2**(-j excess)``), ``"lr"`` (``(j+1)**(-2/r)``, barely in
        ``l^r``) or ``"single"`` (only annulus ``level``).
    seed : int
    sizes : tuple of int
    excess : float
        Extra decay rate for ``"decay"``.
    level : int
        Annulus of a ``"single"`` field.
    components : int
        0 for a scalar, ``N`` for a vector field.
    solenoidal : bool
        Apply the Leray projector to a vector field.
    mean : bool
        Keep the zero mode (annulus 0).
    amplitude : float
        Overall factor applied after the envelope.
    """

    s: float = 1.0
    p: float = 2.0
    r: float = 2.0
    envelope: str = "lr"
    seed: int = 0
    sizes: tuple = (64, 64)
    excess: float = 0.5
    level: int = 2
    components: int = 0
    solenoidal: bool = False
    mean: bool = True
    amplitude: float = 1.0
    periods: tuple | None = None

    def __post_init__(self):
        if self.envelope not in ENVELOPES:
            raise ParameterError(f"unknown envelope {self.envelope!r}; expected one of {ENVELOPES}")
        if not (self.p >= 1 and self.r >= 1):
            raise ParameterError("need p >= 1 and r >= 1")
        if self.solenoidal and self.components != len(self.sizes):
            raise ParameterError("a solenoidal sample needs one component per dimension")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(tuple(self.sizes), self.periods)

    def annuli(self) -> range:
        """Annulus indices that fit strictly below the Nyquist frequency."""
        jmax = int(math.floor(math.log2(min(self.sizes) // 2)))
        return range(0 if self.mean else 1, jmax + 1)

    def weight(self, j: int) -> float:
        if self.envelope == "flat":
            return 1.0
        if self.envelope == "decay":
            return 2.0 ** (-j * self.excess)
        if self.envelope == "lr":
            return 1.0 if np.isinf(self.r) else (j + 1.0) ** (-2.0 / self.r)
        return 1.0 if j == self.level else 0.0

    def replace(self, **kw) -> "SampleSpec":
        return SampleSpec(**{**asdict(self), **kw})


def design_norm(spec: SampleSpec) -> float:
    """``||(eps_j)||_{l^r}`` over the annuli present on the grid."""
    w = np.array([spec.weight(j) for j in spec.annuli()])
    if np.isinf(spec.r):
        return float(w.max()) if len(w) else 0.0
    return float(np.sum(w**spec.r) ** (1.0 / spec.r))


def _annulus_coeffs(N: int, j: int, key) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian Gaussian coefficients on ``A_j`` as ``(indices (k, N), values (k,))``."""
    if j == 0:
        rng = np.random.default_rng(key)
        return np.zeros((1, N), dtype=int), np.array([rng.standard_normal()], dtype=complex)
    L = 2**j
    rng = np.random.default_rng(key)
    shape = (2 * L,) * N
    G = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    idx = np.stack(np.meshgrid(*[np.arange(-L, L)] * N, indexing="ij"), axis=-1).reshape(-1, N)
    sup = np.abs(idx).max(axis=1)
    idx = idx[(sup >= L // 2) & (sup < L)]
    vals = (G[tuple((idx + L).T)] + np.conj(G[tuple((L - idx).T)])) / math.sqrt(2.0)
    return idx, vals


def _place(grid: TorusGrid, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    F = np.zeros(grid.shape, dtype=complex)
    pos = tuple((idx[:, d] % n) for d, n in enumerate(grid.sizes))
    F[pos] = vals
    return F


def _block_weight(periods, idx: np.ndarray, s: float) -> np.ndarray:
    """``sum_l phi_l(|k|) 2**(-l s)``: the block weight ``2**(-l s)`` smoothed by the partition."""
    k = idx * (2 * np.pi / np.asarray(periods))
    kmag = np.sqrt(np.sum(k * k, axis=1))
    pou = DEFAULT_PARTITION
    top = pou.l_max(max(float(kmag.max()), 1.0)) + 1
    return sum(pou.block_symbol(l, kmag) * 2.0 ** (-l * s) for l in range(-1, top + 1))


def generate_sample(spec: SampleSpec) -> np.ndarray:
    """Deterministic random field following the documented amplitude law.

    Returns
    -------
    ndarray
        Shape ``sizes`` for scalars, ``(components, *sizes)`` for vectors.
    """
    grid = spec.grid
    N = grid.dim
    ncomp = max(spec.components, 1)
    out = np.zeros((ncomp,) + grid.shape, dtype=complex)
    for c in range(ncomp):
        for j in spec.annuli():
            w = spec.weight(j)
            if w == 0:
                continue
            idx, vals = _annulus_coeffs(N, j, (spec.seed, c, j))
            # normalise on a resolution-independent grid
            ref = TorusGrid((max(4 * 2**j, 8),) * N, grid.periods)
            nrm = lp_norm(ref, ref.ifft(_place(ref, idx, vals)), spec.p)
            if nrm == 0:
                continue
            weight = _block_weight(grid.periods, idx, spec.s)
            out[c] += _place(grid, idx, vals * weight * (w * spec.amplitude / nrm))
    if spec.solenoidal:
        out = leray_project(grid, out)
    u = grid.ifft(out)
    return u[0] if spec.components == 0 else u


# -- laws ---------------------------------------------------------------------

LawFn = Callable[[TorusGrid, int, dict], list]


@dataclass
class Law:
    """One checkable inequality.

    ``fn(grid, seed, params)`` returns a list of ``(lhs, rhs, s, p, r, extra)``
    tuples or raises :class:`DegenerateSampleError`. ``exact`` laws are
    identities whose ratios are round-off; their resolution stability is not
    asserted. ``lower`` is an optional lower bound on every ratio (two-sided
    laws).
    """

    law_id: str
    fn: LawFn
    ceiling: float = 1e3
    exact: bool = False
    lower: float | None = None
    min_samples: int = 20
    defaults: dict = field(default_factory=dict)
    description: str = ""


def _spec(grid, seed, **kw) -> SampleSpec:
    return SampleSpec(sizes=grid.sizes, periods=grid.periods, seed=seed, **kw)


def _law_bony(grid, seed, params):
    u = generate_sample(_spec(grid, seed, s=params.get("s", 0.5)))
    v = generate_sample(_spec(grid, seed + 7919, s=params.get("s", 0.5)))
    tu, tv, rem = bony_decomposition(grid, u, v)
    err = float(np.abs(u * v - tu - tv - rem).max())
    scale = lp_norm(grid, u, math.inf) * lp_norm(grid, v, math.inf)
    if scale == 0:
        raise DegenerateSampleError("zero sample")
    return [(err, scale, math.nan, math.inf, math.nan, {})]


def _product_law(law: str, **fixed):
    def fn(grid, seed, params):
        kw = {**fixed, **{k: v for k, v in params.items() if k in ProductLawCase.__dataclass_fields__}}
        case = ProductLawCase(law, N=grid.dim, **kw)
        su = params.get("su", 1.5)
        sv = params.get("sv", 1.5)
        u = generate_sample(_spec(grid, seed, s=su))
        v = generate_sample(_spec(grid, seed + 7919, s=sv))
        rep = product_law_check(case, grid, u, v)
        if not rep.records:
            raise DegenerateSampleError("zero right-hand side")
        rec = rep.records[0]
        return [(rec.lhs, rec.rhs, rec.s, rec.p, rec.r, {})]
    return fn


def _law_commutator(grid, seed, params):
    sigma = params.get("sigma", 0.5)
    alpha = params.get("alpha", 0.5)
    p = params.get("p", 2.0)
    p1 = params.get("p1", 2.0)
    r = params.get("r", 2.0)
    N = grid.dim
    a = generate_sample(_spec(grid, seed, s=N / p1 + alpha, r=r))
    w = generate_sample(_spec(grid, seed + 7919, s=sigma + 1 - alpha, r=r))
    out = commutator_estimate(grid, a, w, sigma, alpha, p, p1, r, axes=params.get("axes"))
    extra = {"partial_max": float(np.max(out["partial_sums"]))}
    return [(out["lhs"], out["rhs"], sigma, p, r, extra)]


def _heat_trajectory(grid, u, nu=0.05, T=1.0, steps=10):
    """``exp(nu t Lap) u`` sampled at ``steps + 1`` times."""
    U = grid.fft(u)
    times = np.linspace(0.0, T, steps + 1)
    return times, [grid.ifft(np.exp(-nu * grid.ksq * t) * U) for t in times]


def _law_log_interp(grid, seed, params):
    s = params.get("s", 0.5)
    rho = params.get("rho", 2.0)
    p = params.get("p", 2.0)
    eps_list = params.get("eps", (0.4, 0.2, 0.1, 0.05))
    eps_list = [eps_list] if np.isscalar(eps_list) else list(eps_list)
    u = generate_sample(_spec(grid, seed, s=s, envelope=params.get("envelope", "lr"), r=1.0))
    times, fields = _heat_trajectory(grid, u)
    acc = CheminLernerAccumulator(grid, (p,))
    for t, f in zip(times, fields):
        acc.record(t, f)
    rows = []
    for eps in eps_list:
        rep = log_interpolation_check(acc, s, eps, rho, p, resolution=grid.sizes[0])
        rec = rep.records[0]
        rows.append((rec.lhs, rec.rhs, s, p, 1.0, {"eps": eps}))
    return rows


def _law_derivative(direction: str):
    def fn(grid, seed, params):
        s = params.get("s", 0.5)
        p = params.get("p", 2.0)
        r = params.get("r", 2.0)
        u = generate_sample(_spec(grid, seed, s=s + params.get("excess", 0.5), mean=False))
        nu = DyadicDecomposition(grid, u).besov(s, p, r)
        ng = DyadicDecomposition(grid, grid.ifft(gradient(grid, grid.fft(u)))).besov(s - 1, p, r)
        if nu == 0 or ng == 0:
            raise DegenerateSampleError("zero sample")
        pair = (ng, nu) if direction == "upper" else (nu, ng)
        return [(*pair, s, p, r, {})]
    return fn


def _law_embedding(grid, seed, params):
    s = params.get("s", 1.0)
    p1 = params.get("p1", 2.0)
    p2 = params.get("p2", 4.0)
    r1 = params.get("r1", 2.0)
    r2 = params.get("r2", 2.0)
    if not (p1 <= p2 and r1 <= r2):
        raise ParameterError("embedding needs p1 <= p2 and r1 <= r2")
    N = grid.dim
    u = generate_sample(_spec(grid, seed, s=s, r=r1))
    d = DyadicDecomposition(grid, u)
    shift = N * ((1 / p1) - (0.0 if np.isinf(p2) else 1 / p2))
    return [(d.besov(s - shift, p2, r2), d.besov(s, p1, r1), s, p2, r2, {})]


def _law_bernstein(grid, seed, params):
    """Single-block fields: ``2**-l ||grad Delta_l u||_p / ||Delta_l u||_p``."""
    p = params.get("p", 2.0)
    pou = DEFAULT_PARTITION
    rng = np.random.default_rng((seed, 101))
    lmax = pou.l_max(grid.kmax)
    l = int(rng.integers(0, lmax))
    lo, hi = pou.single_block_band(l)
    Z = grid.fft(rng.standard_normal(grid.shape))
    Z = Z * ((grid.kmag >= lo) & (grid.kmag <= hi))
    u = grid.ifft(Z)
    b = DyadicDecomposition(grid, u).block(l)
    nb = lp_norm(grid, b, p)
    if nb == 0:
        raise DegenerateSampleError("empty shell")
    ng = lp_norm(grid, grid.ifft(gradient(grid, grid.fft(b))), p)
    return [(2.0 ** (-l) * ng, nb, math.nan, p, math.nan, {"level": l})]


def _law_elliptic(grid, seed, params):
    sigma = params.get("sigma", 0.75)
    alpha = params.get("alpha", 0.5)
    amp = params.get("a_max", 0.1)
    a = generate_sample(_spec(grid, seed, s=2.0, mean=False))
    a *= amp / max(np.abs(a).max(), 1e-300)
    F = generate_sample(_spec(grid, seed + 7919, s=sigma, components=grid.dim))
    coef = CoefficientField(grid, a)
    rep = elliptic_estimate_check(coef, F, sigma, alpha)
    if not rep.records:
        raise DegenerateSampleError("zero source")
    rec = rep.records[0]
    return [(rec.lhs, rec.rhs, sigma, rec.p, rec.r, {"A": rec.extra["A"]})]


def _law_transport(grid, seed, params):
    sigma = params.get("sigma", 0.5)
    eps = params.get("eps", 0.25)
    T = params.get("T", 0.25)
    vamp = params.get("v_max", 1.0)
    a0 = generate_sample(_spec(grid, seed, s=sigma + 0.5))
    v = generate_sample(_spec(grid, seed + 7919, s=3.0, components=grid.dim, solenoidal=True, mean=False))
    v *= vamp / max(np.sqrt(np.sum(v * v, axis=0)).max(), 1e-300)
    dt = 0.4 * min(grid.spacing) / vamp
    res = advect(grid, a0, v, T, dt, vprime_params=[(math.inf, 0.5)])
    rec = limited_loss_report(res, sigma, eps, p=2.0, p1=math.inf, alpha=0.5).records[0]
    return [(rec.lhs, rec.rhs, sigma, 2.0, math.inf, {"V": rec.extra["V"]})]


def _law_vprime(grid, seed, params):
    r = params.get("r", 2.0)
    p2 = params.get("p2", 2.0)
    N = grid.dim
    v = generate_sample(_spec(grid, seed, s=N / p2 + 1, r=r, components=N, solenoidal=True, mean=False))
    lhs = v_prime(grid, v, math.inf, 1.0 - (0.0 if np.isinf(r) else 1.0 / r))
    rhs = DyadicDecomposition(grid, v).besov(N / p2 + 1, p2, r)
    return [(lhs, rhs, N / p2 + 1, p2, r, {})]


LAWS: dict[str, Law] = {
    "bony-identity": Law("bony-identity", _law_bony, ceiling=1e-12, exact=True, min_samples=1,
                         description="uv = T_u v + T_v u + R(u, v), relative to |u|_inf |v|_inf"),
    "product-2.2": Law("product-2.2", _product_law("2.2", s=0.5),
                       description="tame estimate, s > 0"),
    "product-2.3": Law("product-2.3", _product_law("2.3", s1=0.5, s2=0.75)),
    "product-2.4": Law("product-2.4", _product_law("2.4", s1=0.5, s2=-0.5), defaults={"sv": 0.5}),
    "product-2.5": Law("product-2.5", _product_law("2.5", s=0.5)),
    "product-corollary": Law("product-corollary", _product_law("corollary", s=0.25, p1=4.0)),
    "commutator": Law("commutator", _law_commutator),
    "log-interpolation": Law("log-interpolation", _law_log_interp),
    "derivative-upper": Law("derivative-upper", _law_derivative("upper"),
                            description="||grad u||_{B^{s-1}} <= C ||u||_{B^s}, mean-zero u"),
    "derivative-lower": Law("derivative-lower", _law_derivative("lower"),
                            description="||u||_{B^s} <= C ||grad u||_{B^{s-1}}, mean-zero u"),
    "embedding": Law("embedding", _law_embedding),
    "bernstein": Law("bernstein", _law_bernstein, min_samples=1,
                     description="single-block gradient ratio inside the shell bracket"),
    "elliptic-estimate": Law("elliptic-estimate", _law_elliptic),
    "transport-limited-loss": Law("transport-limited-loss", _law_transport),
    "vprime": Law("vprime", _law_vprime),
}


def _bernstein_bracket(p: float) -> tuple[float, float]:
    """Bracket for the single-block gradient ratio.

    At ``p = 2`` the ratio lies between the radii of the single-block band,
    ``[alpha, 2/alpha]``; otherwise the looser ``[1/(2 alpha), 2 alpha]`` is used.
    Both are in wavenumber units, so the box size does not enter.
    """
    al = DEFAULT_PARTITION.alpha
    if p == 2:
        return al, 2.0 / al
    return 1.0 / (2 * al), 2 * al


@dataclass
class SuiteConfig:
    """Suite description; loadable from JSON with the same keys."""

    laws: list = field(default_factory=lambda: ["bony-identity"])
    samples: int = 20
    resolutions: list = field(default_factory=lambda: [64, 128])
    dim: int = 2
    seed: int = 0
    ceiling: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    skip_quota: float = 0.1
    stability_limit: float = 2.0

    def __post_init__(self):
        unknown = [k for k in self.laws if k not in LAWS]
        if unknown:
            raise ParameterError(f"unknown law(s) {unknown}; known: {sorted(LAWS)}")
        if self.samples < 1:
            raise ParameterError("need at least one sample")
        for k in self.laws:
            if self.samples < LAWS[k].min_samples:
                raise ParameterError(f"law {k} estimates a constant and needs at least "
                                     f"{LAWS[k].min_samples} samples, got {self.samples}")

    @classmethod
    def from_json(cls, path) -> "SuiteConfig":
        data = json.loads(Path(path).read_text())
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuiteResult:
    reports: list
    verdicts: dict
    passed: bool
    elapsed: float

    def summary(self) -> dict:
        return {"passed": self.passed, "elapsed": self.elapsed, "laws": self.verdicts}


def _law_seed(base: int, law_id: str, i: int) -> int:
    return int(base) * 1_000_003 + zlib.crc32(law_id.encode()) % 100_003 * 1009 + i


def _judge(law: Law, rep: InequalityReport, cfg: SuiteConfig, ceiling: float, lower) -> dict:
    total = len(rep.records) + rep.skipped
    skipped_frac = rep.skipped / total if total else 0.0
    ratios = rep.ratios
    reasons = []
    if not rep.all_finite():
        reasons.append("non-finite ratio")
    if ratios and max(ratios) > ceiling:
        reasons.append(f"ratio {max(ratios):.4g} exceeds ceiling {ceiling:.4g}")
    if lower is not None and ratios and min(ratios) < lower:
        reasons.append(f"ratio {min(ratios):.4g} below lower bound {lower:.4g}")
    stab = rep.stability()
    if not law.exact and stab > cfg.stability_limit:
        reasons.append(f"stability factor {stab:.4g} exceeds {cfg.stability_limit}")
    invalid = skipped_frac > cfg.skip_quota
    if invalid:
        reasons.append(f"{rep.skipped} of {total} samples degenerate (quota {cfg.skip_quota:.0%})")
    return {
        **rep.summary(),
        "min_ratio": min(ratios) if ratios else math.nan,
        "ceiling": ceiling,
        "lower": lower,
        "exact": law.exact,
        "invalid": invalid,
        "passed": not reasons,
        "reasons": reasons,
    }


def run_suite(laws, M: int = 20, resolutions=(64, 128), config: SuiteConfig | None = None,
              **overrides) -> SuiteResult:
    """Run every law on ``M`` samples at each resolution.

    The same sample seeds are used at every resolution, so the coarse and
    fine samples share their low annuli. A law FAILS when a ratio exceeds
    its ceiling (or drops below its lower bound), when the resolution
    stability factor exceeds ``stability_limit`` (non-exact laws), or when
    more than ``skip_quota`` of its samples are degenerate.
    """
    if config is None:
        laws = [laws] if isinstance(laws, str) else list(laws)
        config = SuiteConfig(laws=laws, samples=M, resolutions=list(resolutions), **overrides)
    cfg = config
    t0 = time.perf_counter()
    reports, verdicts = [], {}
    for law_id in cfg.laws:
        law = LAWS[law_id]
        params = {**law.defaults, **cfg.params.get(law_id, {})}
        rep = InequalityReport(law_id)
        for n in cfg.resolutions:
            grid = TorusGrid((int(n),) * cfg.dim)
            for i in range(cfg.samples):
                try:
                    rows = law.fn(grid, _law_seed(cfg.seed, law_id, i), params)
                except DegenerateSampleError as exc:
                    log.debug("%s sample %d skipped: %s", law_id, i, exc)
                    rep.skipped += 1
                    continue
                for lhs, rhs, s, p, r, extra in rows:
                    if rhs == 0:
                        rep.skipped += 1
                        continue
                    rep.add(lhs, rhs, grid.sizes[0], s=s, p=p, r=r, **extra)
        lower = law.lower
        ceiling = float(cfg.ceiling.get(law_id, law.ceiling))
        if law_id == "bernstein":
            lo, hi = _bernstein_bracket(params.get("p", 2.0))
            lower, ceiling = lo, min(ceiling, hi)
        verdicts[law_id] = _judge(law, rep, cfg, ceiling, lower)
        reports.append(rep)
    passed = all(v["passed"] for v in verdicts.values())
    return SuiteResult(reports, verdicts, passed, time.perf_counter() - t0)


def write_suite(result: SuiteResult, outdir) -> tuple[Path, Path]:
    """Write ``reports.csv`` and ``summary.json`` into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = write_reports_csv(outdir / "reports.csv", result.reports)
    js = outdir / "summary.json"
    js.write_text(json.dumps(result.summary(), indent=2, default=_json_default))
    return csv_path, js


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)
