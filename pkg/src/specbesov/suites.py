"""Check suites: each turns a family of module-level properties into certificates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .d1_calculus import alt_pairing_defects
from .grid_core import CoefficientField, constant_coefficient, make_grid, named_coefficient, rescale_coefficient
from .heat_calculus import heat_apply
from .homogenization import (
    block_convergence_rate,
    cluster_eigenvalues,
    discrete_theta,
    eigen_convergence_report,
    green_bound_checks,
    heat_kernel,
    homogenized_matrix,
    multiplicity_groups,
    operator_pairs,
    oscillation_certificate,
    projection_gap_certificate,
    solve_corrector,
    weyl_fit,
)
from .lp_blocks import besov_norm, block, block_table, phi
from .operator_spectral import SpectralDecomposition, decompose_cached
from .paracalculus import ParaContext, bony_parts, commutator_com, commutator_com_oracle, commutator_com_via_R
from .rate_lab import (
    REGISTRY,
    BoundCertificate,
    censored_decay_fit,
    fit_rate,
    measure_inequality,
    random_band_limited,
)

log = logging.getLogger(__name__)

PARTITION_TOL = 1e-14
RECONSTRUCTION_TOL = 1e-10
BONY_TOL = 1e-10
COM_PATH_TOL = 1e-12
ORACLE_TOL = 1e-9
CANCELLATION_TOL = 1e-10
DECOUPLING_SLOPE = -1.7
HOLDER_SPREAD = 10.0
ABAR_TOL = 1e-6
MEAN_GAP_MIN = 0.2
WEYL_TOL = 0.1
KLS_MIN = 0.9
BLOCK_RATE_MIN = 0.35
HEAT_SLOPE_TOL = 0.1
THETA_TOL = 1e-8
D1_SPREAD = 10.0


@dataclass
class RunConfig:
    """Parameters shared by every suite; ``None`` picks the suite's reference value."""

    N: int | None = None
    eps: list[float] | None = None
    seed: int = 0
    delta: float = 2.0**-5
    T: float = 0.05
    steps: int = 50
    mc: int = 32
    samples: int = 50
    cache_dir: str | None = None
    tol_scale: float = 1.0
    profile: str = "sin"
    extra: dict = field(default_factory=dict)

    def n(self, default: int) -> int:
        return int(self.N) if self.N else default

    def eps_list(self, default) -> list[float]:
        return [float(e) for e in (self.eps or default)]


class DecCache:
    """In-memory (and optional on-disk) cache of decompositions per coefficient."""

    def __init__(self, cache_dir: str | None = None):
        self.cache_dir = cache_dir
        self._store: dict[str, SpectralDecomposition] = {}

    def get(self, A: CoefficientField) -> SpectralDecomposition:
        key = A.fingerprint()
        if key not in self._store:
            self._store[key] = decompose_cached(A, self.cache_dir)
        return self._store[key]


def _coef(cfg: RunConfig, dim: int, N: int, eps: float = 1.0) -> CoefficientField:
    return named_coefficient(make_grid(dim, N), cfg.profile, eps)


def _decs_for(cfg: RunConfig, cache: DecCache, A_unit: CoefficientField, eps_list) -> dict:
    out = {e: cache.get(rescale_coefficient(A_unit, e)) for e in eps_list}
    out[0.0] = cache.get(constant_coefficient(A_unit.grid, homogenized_matrix(A_unit)))
    return out


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def suite_partition(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    x = np.linspace(0.0, 1e3, 10_000)
    total = sum(phi(j, x) for j in range(-1, 14))
    err = float(np.max(np.abs(total - 1.0)))
    out = [BoundCertificate("partition_of_unity", err, PARTITION_TOL * cfg.tol_scale, err <= PARTITION_TOL * cfg.tol_scale,
                            {"samples": x.size, "range": [0.0, 1e3]})]
    N = cfg.n(256)
    rng = np.random.default_rng(cfg.seed)
    for e in cfg.eps_list([0.5, 0.25, 0.125, 0.0625]):
        dec = cache.get(_coef(cfg, 1, N, e))
        tab = block_table(dec)
        f = rng.standard_normal((20, N))
        worst = float(np.max(np.abs(tab.all_blocks(f).sum(axis=0) - f)))
        out.append(BoundCertificate(f"block_reconstruction[eps={e:g}]", worst, RECONSTRUCTION_TOL * cfg.tol_scale,
                                    worst <= RECONSTRUCTION_TOL * cfg.tol_scale, {"N": N, "eps": e, "functions": 20}))
        w = tab.weights
        overlap = w @ w.T
        far = np.triu(np.abs(overlap), k=2)
        out.append(BoundCertificate(f"block_orthogonality[eps={e:g}]", float(far.max()), 0.0, float(far.max()) == 0.0,
                                    {"N": N, "eps": e}))
    return out


def _dealiased(dec: SpectralDecomposition, rng, top: float) -> np.ndarray:
    return random_band_limited(dec, -1.0, top, rng)


def suite_bony(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(128)
    rng = np.random.default_rng(cfg.seed)
    A = _coef(cfg, 1, N, 0.25)
    ctx = ParaContext(cache.get(A), A)
    worst_bony = worst_com = 0.0
    for _ in range(10):
        f, g, h = (_dealiased(ctx.dec, rng, np.log2(ctx.dec.lambda_max) - 2) for _ in range(3))
        lo, res, hi = bony_parts(ctx, f, g)
        worst_bony = max(worst_bony, float(np.max(np.abs(lo + res + hi - f * g))))
        worst_com = max(worst_com, float(np.max(np.abs(commutator_com(ctx, f, g, h) - commutator_com_via_R(ctx, f, g, h)))))
    A32 = _coef(cfg, 1, 32, 0.5)
    ctx32 = ParaContext(cache.get(A32), A32)
    worst_or = 0.0
    for _ in range(3):
        f, g, h = (rng.standard_normal(32) for _ in range(3))
        worst_or = max(worst_or, float(np.max(np.abs(commutator_com_oracle(ctx32, f, g, h) - commutator_com(ctx32, f, g, h)))))
    s = cfg.tol_scale
    return [
        BoundCertificate("bony_decomposition", worst_bony, BONY_TOL * s, worst_bony <= BONY_TOL * s, {"N": N}),
        BoundCertificate("com_two_paths", worst_com, COM_PATH_TOL * s, worst_com <= COM_PATH_TOL * s, {"N": N}),
        BoundCertificate("com_triple_oracle", worst_or, ORACLE_TOL * s, worst_or <= ORACLE_TOL * s, {"N": 32}),
    ]


def suite_cancellation(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(256)
    rng = np.random.default_rng(cfg.seed)
    dec = cache.get(constant_coefficient(make_grid(1, N), [[1.0]]))
    tab = block_table(dec)
    worst = 0.0
    for i in range(-1, 4):
        for j in range(-1, 4):
            f = block(dec, i, rng.standard_normal(N))
            g = block(dec, j, rng.standard_normal(N))
            for k in range(max(i, j) + 4, tab.j_max + 1):
                worst = max(worst, float(np.max(np.abs(block(dec, k, f * g)))))
    tol = CANCELLATION_TOL * cfg.tol_scale
    return [BoundCertificate("cancellation_constant_coefficient", worst, tol, worst <= tol, {"N": N})]


def suite_decoupling(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(512)
    rng = np.random.default_rng(cfg.seed)
    out = []
    i = j = 3
    for e in cfg.eps_list([0.25, 0.125, 0.0625]):
        dec = cache.get(_coef(cfg, 1, N, e))
        tab = block_table(dec)
        ks = np.arange(max(i, j) + 5, tab.j_max + 1)
        vals = np.zeros(ks.size)
        for _ in range(5):
            f = block(dec, i, rng.standard_normal(N))
            g = block(dec, j, rng.standard_normal(N))
            f, g = f / np.max(np.abs(f)), g / np.max(np.abs(g))
            vals = np.maximum(vals, [np.max(np.abs(block(dec, int(k), f * g))) for k in ks])
        fit = censored_decay_fit(2.0**ks, vals)
        out.append(BoundCertificate(f"decoupling_slope[eps={e:g}]", fit.slope, DECOUPLING_SLOPE,
                                    fit.slope <= DECOUPLING_SLOPE, {"i": i, "j": j, "N": N, "eps": e},
                                    {"k": ks.tolist(), "values": vals.tolist(), "fit": fit.as_dict()}))
    return out


def suite_holder(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(256)
    rng = np.random.default_rng(cfg.seed)
    flat = cache.get(constant_coefficient(make_grid(1, N), [[1.0]]))
    decs = [cache.get(_coef(cfg, 1, N, e)) for e in cfg.eps_list([0.5, 0.25, 0.125, 0.0625])]
    fs = [random_band_limited(flat, -1.0, np.log2(flat.lambda_max) + 1, rng) for _ in range(20)]
    out = []
    for a in (0.5, -0.5):
        r = np.array([besov_norm(d, a, f) / besov_norm(flat, a, f) for d in decs for f in fs])
        spread = float(r.max() / r.min())
        out.append(BoundCertificate(f"holder_equivalence[alpha={a:g}]", spread, HOLDER_SPREAD * cfg.tol_scale,
                                    spread <= HOLDER_SPREAD * cfg.tol_scale, {"N": N, "alpha": a},
                                    {"min_ratio": float(r.min()), "max_ratio": float(r.max())}))
    return out


def suite_homogenization(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(512)
    A = _coef(cfg, 1, N)
    chi = solve_corrector(A, cache.get(A))
    abar = float(homogenized_matrix(A, chi)[0, 0])
    out = []
    if cfg.profile == "sin":
        err = abs(abar - np.sqrt(3.0))
        out.append(BoundCertificate("abar_harmonic_mean", err, ABAR_TOL * cfg.tol_scale, err <= ABAR_TOL * cfg.tol_scale,
                                    {"N": N}, {"abar": abar}))
    scale = float(np.max(np.abs(A.cell_entries)))
    res = float(np.max(chi.residuals))
    out.append(BoundCertificate("corrector_residual", res, 1e-8 * scale, chi.ok, {"N": N}))
    gap = abs(float(np.mean(A.scalar())) - abar)
    out.append(BoundCertificate("abar_differs_from_mean", gap, MEAN_GAP_MIN, gap >= MEAN_GAP_MIN, {"N": N}))
    return out


def suite_eigen(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(512)
    eps = cfg.eps_list([0.25, 0.125, 0.0625])
    A = _coef(cfg, 1, N)
    rep = eigen_convergence_report(A, eps, decs=_decs_for(cfg, cache, A, eps))
    out = rep.certificates(WEYL_TOL, KLS_MIN)
    if not cfg.extra.get("skip_2d"):
        A2 = _coef(cfg, 2, 48)
        for e, d in _decs_for(cfg, cache, A2, [1.0, 0.5]).items():
            fit = weyl_fit(d)
            out.append(BoundCertificate(f"weyl_slope_2d[{e:g}]", fit.slope, 0.5, abs(fit.slope - 0.5) <= WEYL_TOL,
                                        {"N": 48, "tol": WEYL_TOL}, {"fit": fit.as_dict()}))
    return out


def suite_clusters(cfg: RunConfig, cache: DecCache, j: int = 3, eps: float = 0.125) -> list[BoundCertificate]:
    N = cfg.n(512)
    A = _coef(cfg, 1, N)
    sweep = cfg.eps_list([0.25, 0.125, 0.0625])
    if eps not in sweep:
        sweep = sorted(set(sweep) | {eps}, reverse=True)
    decs = _decs_for(cfg, cache, A, sweep)
    rep = eigen_convergence_report(A, sweep, decs=decs)
    cl = cluster_eigenvalues(decs[0.0], j, eps, rep.C_KLS)
    c1 = projection_gap_certificate(decs[eps], decs[0.0], cl)
    c1.name = "riesz_projection[clusters]"
    c1.details["C_KLS"] = rep.C_KLS
    c2 = projection_gap_certificate(decs[eps], decs[0.0], multiplicity_groups(decs[0.0], j))
    c2.name = "riesz_projection[multiplicity]"
    return [c1, c2]


def suite_block_convergence(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(512)
    eps = cfg.eps_list([0.25, 0.125, 0.0625])
    A = _coef(cfg, 1, N)
    fits = block_convergence_rate(A, range(-1, 5), eps, decs=_decs_for(cfg, cache, A, eps), seed=cfg.seed)
    out = []
    for j, fit in fits.items():
        exact = float(np.max(fit.ordinates)) <= 1e-12
        ok = exact or fit.slope >= BLOCK_RATE_MIN
        out.append(BoundCertificate(f"block_convergence[j={j}]", fit.slope, BLOCK_RATE_MIN, ok, {"j": j, "N": N},
                                    {"fit": fit.as_dict(), "exact": exact}))
    return out


def suite_oscillation(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    alpha = 0.5
    fit = oscillation_certificate(lambda y: np.sin(2 * np.pi * y), alpha, [0.25, 0.125, 0.0625, 0.03125],
                                  N=cfg.n(512))
    return [BoundCertificate("oscillation_exponent", fit.slope, alpha - 0.1, fit.slope >= alpha - 0.1,
                             {"alpha": alpha}, {"fit": fit.as_dict()})]


def saturating_input(dec: SpectralDecomposition, alpha: float, rng) -> np.ndarray:
    """Sum of sup-normalized random blocks weighted by ``2^{-alpha j}`` (every block saturates ``C^alpha``)."""
    tab = block_table(dec)
    blocks = tab.all_blocks(rng.standard_normal(dec.grid.size))
    f = np.zeros(dec.grid.size)
    for j, b in zip(tab.js, blocks):
        m = np.max(np.abs(b))
        if m > 0:
            f += 2.0 ** (-alpha * j) * b / m
    return f


def suite_heat(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(256)
    rng = np.random.default_rng(cfg.seed)
    A = _coef(cfg, 1, N, 0.25)
    dec = cache.get(A)
    alpha = -0.5
    f = saturating_input(dec, alpha, rng)
    ts = np.geomspace(4.0 / dec.lambda_max**2, 1e-2, 12)
    out = []
    for sigma in (1.0, 2.0):
        fit = fit_rate(ts, [besov_norm(dec, alpha + sigma, heat_apply(dec, t, f)) for t in ts])
        dev = abs(fit.slope + sigma / 2)
        out.append(BoundCertificate(f"heat_smoothing_slope[sigma={sigma:g}]", fit.slope, -sigma / 2,
                                    dev <= HEAT_SLOPE_TOL * cfg.tol_scale, {"alpha": alpha, "sigma": sigma, "N": N},
                                    {"fit": fit.as_dict()}))
    Ag = _coef(cfg, 1, 64, 0.25)
    out.extend(green_bound_checks(Ag, dec=cache.get(Ag)))
    flat = constant_coefficient(make_grid(1, 64), [[1.0]])
    dflat = cache.get(flat)
    z = np.arange(64) / 64
    worst = max(float(np.max(np.abs(heat_kernel(dflat, t)[0] - discrete_theta(64, t, z)))) for t in (1e-3, 1e-2, 1e-1))
    out.append(BoundCertificate("theta_oracle", worst, THETA_TOL * cfg.tol_scale, worst <= THETA_TOL * cfg.tol_scale,
                                {"N": 64}))
    return out


def suite_d1(cfg: RunConfig, cache: DecCache) -> list[BoundCertificate]:
    N = cfg.n(256)
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.eps_list([0.25, 0.125, 0.0625])
    A_unit = _coef(cfg, 1, N)
    pairs = operator_pairs(A_unit, eps, decs=_decs_for(cfg, cache, A_unit, eps))
    d0 = pairs[0].ctx0.dec
    fs = [(random_band_limited(d0, -1, 4.5, rng), random_band_limited(d0, -1, 4.5, rng)) for _ in range(10)]
    out = []
    for idx, label in ((0, "P"), (1, "Pi")):
        vals = np.array([max(float(besov_norm(p.ctx.dec, 0.4 + 0.4 - 1 - 0.05, alt_pairing_defects(p.ctx, f, g)[idx]))
                             for f, g in fs) for p in pairs])
        finite = bool(np.all(np.isfinite(vals)))
        spread = float(vals.max() / vals.min()) if finite and vals.min() > 0 else (1.0 if finite else np.inf)
        out.append(BoundCertificate(f"alt_pairing_defect[{label}]", spread, D1_SPREAD, finite and spread <= D1_SPREAD,
                                    {"alpha": 0.4, "beta": 0.4}, {"norms": vals.tolist(), "eps": eps}))
    return out


def suite_registry(cfg: RunConfig, cache: DecCache, names: list[str] | None = None) -> list[BoundCertificate]:
    N = cfg.n(512)
    eps = cfg.eps_list([0.125, 0.0625, 0.03125])
    A_unit = _coef(cfg, 1, N)
    pairs = operator_pairs(A_unit, eps, decs=_decs_for(cfg, cache, A_unit, eps))
    names = list(REGISTRY) if names is None else names
    return [measure_inequality(REGISTRY[n], pairs, cfg.samples, cfg.seed, cfg.tol_scale) for n in names]


Suite = Callable[[RunConfig, DecCache], list[BoundCertificate]]

SUITES: dict[str, Suite] = {
    "partition": suite_partition,
    "bony": suite_bony,
    "cancellation": suite_cancellation,
    "decoupling": suite_decoupling,
    "holder": suite_holder,
    "homogenization": suite_homogenization,
    "eigen": suite_eigen,
    "clusters": suite_clusters,
    "blocks": suite_block_convergence,
    "oscillation": suite_oscillation,
    "heat": suite_heat,
    "d1": suite_d1,
    "registry": suite_registry,
}
