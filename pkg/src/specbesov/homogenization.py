"""Correctors, homogenized matrices, eigenvalue diagnostics, eigenvalue clusters and kernel checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid_core import CoefficientField, TorusGrid, constant_coefficient, make_grid, rescale_coefficient
from .lp_blocks import DyadicPartition, besov_norm, phi
from .operator_spectral import (
    SpectralDecomposition,
    assemble,
    decompose,
    invert_mean_zero,
    multiplier_kernel,
    operator_matrix,
)
from .heat_calculus import TimeGrid
from .paracalculus import ParaContext
from .rate_lab import BoundCertificate, OperatorPair, RateFit, fit_rate, operator_norm

CORRECTOR_TOL = 1e-8
# fitted constants of kernel bounds are plausibility certificates, not proofs
KERNEL_CONSTANT_TOL = 100.0
SHELL_R_LOW = 0.75
SHELL_R_HIGH = 2.0
KLS_SAFETY = 1.5


# ---------------------------------------------------------------------------
# correctors and the homogenized matrix
# ---------------------------------------------------------------------------

def _grad_edges(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Forward differences ``(D_l f)`` stacked on axis -2, matching the assembly."""
    return np.stack([(grid.shift(f, l, 1) - f) / grid.h for l in range(grid.dim)], axis=-2)


def _div_edges(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    """``-sum_l D_l^T F_l``: the discrete divergence adjoint to :func:`_grad_edges`."""
    return sum((F[..., l, :] - grid.shift(F[..., l, :], l, -1)) / grid.h for l in range(grid.dim))


@dataclass
class Corrector:
    """Mean-zero cell solutions ``chi_k`` of ``div(A (e_k + grad chi_k)) = 0``."""

    A: CoefficientField
    chi: np.ndarray          # (dim, size)
    residuals: np.ndarray    # (dim,)

    @property
    def ok(self) -> bool:
        scale = float(np.max(np.abs(self.A.cell_entries)))
        return bool(np.all(self.residuals <= CORRECTOR_TOL * scale))

    def gradient(self) -> np.ndarray:
        """``D_l chi_k`` at the cell edges, shape ``(dim_k, dim_l, size)``."""
        return _grad_edges(self.A.grid, self.chi)


def solve_corrector(A: CoefficientField, dec: SpectralDecomposition | None = None) -> Corrector:
    """Discrete cell problem with the same flux discretisation as the operator."""
    grid = A.grid
    dec = dec or decompose(assemble(A))
    B = A.cell_entries  # (size, d, d)
    chi = np.zeros((grid.dim, grid.size))
    res = np.zeros(grid.dim)
    for k in range(grid.dim):
        flux0 = B[:, :, k].T  # (d, size): column k of B
        rhs = _div_edges(grid, flux0)
        rhs = rhs - rhs.mean()
        chi[k] = invert_mean_zero(dec, rhs)
        flux = flux0 + np.einsum("nlm,mn->ln", B, _grad_edges(grid, chi[k]))
        res[k] = float(np.max(np.abs(_div_edges(grid, flux))))
    return Corrector(A, chi, res)


def homogenized_matrix(A: CoefficientField, corrector: Corrector | None = None) -> np.ndarray:
    """``Abar = h^d sum A (Id + grad chi)``, symmetrized."""
    corrector = corrector or solve_corrector(A)
    B = A.cell_entries
    G = corrector.gradient()  # (k, l, size)
    ident = np.eye(A.grid.dim)[:, :, None]
    integrand = np.einsum("iln,lkn->ikn", B.transpose(1, 2, 0), ident + G.transpose(1, 0, 2))
    Abar = integrand.mean(axis=-1)
    return 0.5 * (Abar + Abar.T)


def homogenized_coefficient(A: CoefficientField) -> CoefficientField:
    """Constant field ``Abar`` computed from the unit-cell version of ``A`` on the same grid."""
    unit = rescale_coefficient(A, 1.0 / A.eps)
    return constant_coefficient(A.grid, homogenized_matrix(unit))


# ---------------------------------------------------------------------------
# eigenvalue diagnostics
# ---------------------------------------------------------------------------

@dataclass
class EigenReport:
    eps: list[float]
    weyl: dict[str, RateFit]
    kls_max_ratio: list[float]       # max |l_eps - l_0| / l_0^2
    kls_ratio_over_eps: list[float]  # the same divided by eps
    kls_fit: RateFit
    C_KLS: float
    n_range: tuple[int, int]

    def certificates(self, weyl_tol: float = 0.1, kls_min: float = 0.9) -> list[BoundCertificate]:
        d = 1.0 / self.weyl["0"].slope if self.weyl["0"].slope else np.nan
        out = []
        for key, fit in self.weyl.items():
            dim_guess = round(d) if np.isfinite(d) else 1
            target = 1.0 / dim_guess
            out.append(BoundCertificate(f"weyl_slope[{key}]", fit.slope, target,
                                        abs(fit.slope - target) <= weyl_tol, {"tol": weyl_tol}))
        out.append(BoundCertificate("kls_exponent", self.kls_fit.slope, kls_min, self.kls_fit.slope >= kls_min,
                                    {"eps": self.eps}, {"C_KLS": self.C_KLS}))
        return out


def weyl_fit(dec: SpectralDecomposition, n_lo: int = 8, n_hi: int | None = None) -> RateFit:
    n_hi = n_hi or dec.grid.size // 8
    n = np.arange(n_lo, n_hi + 1)
    return fit_rate(n, dec.lambdas[n])


def eigen_convergence_report(A_unit: CoefficientField, eps_list, n_max: int | None = None,
                             decs: dict | None = None) -> EigenReport:
    """Weyl slopes for every operator and KLS ratios against the homogenized operator."""
    grid = A_unit.grid
    decs = decs if decs is not None else {}
    A0 = homogenized_coefficient(A_unit)
    d0 = decs.get(0.0) or decompose(assemble(A0))
    n_max = n_max or grid.size // 8
    n = np.arange(1, n_max + 1)
    weyl = {"0": weyl_fit(d0)}
    ratios, over = [], []
    for eps in eps_list:
        d = decs.get(eps) or decompose(assemble(rescale_coefficient(A_unit, eps)))
        weyl[f"{eps:g}"] = weyl_fit(d)
        r = np.abs(d.lambdas[n] - d0.lambdas[n]) / d0.lambdas[n] ** 2
        ratios.append(float(r.max()))
        over.append(float(r.max() / eps))
    fit = fit_rate(eps_list, ratios)
    C = KLS_SAFETY * over[int(np.argmin(eps_list))]
    return EigenReport(list(eps_list), weyl, ratios, over, fit, C, (1, n_max))


# ---------------------------------------------------------------------------
# clustering and Riesz certificates
# ---------------------------------------------------------------------------

@dataclass
class EigenvalueClusters:
    j: int
    eps: float
    threshold: float
    classes: list[tuple[int, int]]              # inclusive index ranges
    intervals: list[tuple[float, float]]        # I_alpha = [a, b] in the mu variable
    shell: tuple[int, int] | None
    q: float
    constraint_value: float
    constraint_ok: bool
    lambdas: np.ndarray = field(repr=False)


def _inv_sq(lam: np.ndarray) -> np.ndarray:
    """``lambda^{-2}`` on nonzero eigenvalues, 0 on the kernel."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    np.divide(1.0, lam**2, out=out, where=lam > 0)
    return out


def _mu(lam: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + lam**2)


def cluster_eigenvalues(dec0: SpectralDecomposition, j: int, eps: float, C_KLS: float,
                        threshold: float | None = None) -> EigenvalueClusters:
    """Group consecutive eigenvalues of ``sqrt(-L_0)`` whose gaps do not exceed the threshold.

    Only classes meeting the shell ``r 2^{j-1} < lambda < R 2^{j+1}`` are kept.
    Interval endpoints use the mu-midpoints to the neighbouring eigenvalues, with
    the conventions ``mu_{-1} = 2`` and ``mu_{N} = 0`` at the ends of the spectrum.
    """
    if j < 0:
        raise ValueError("cluster_eigenvalues needs j >= 0")
    lam = dec0.lambdas
    d = dec0.grid.dim
    q = 2.0 * (6.0 + d)
    cval = C_KLS * eps * 2.0 ** (q * j)
    g = threshold if threshold is not None else 10.0 * np.sqrt(C_KLS * eps) * 4.0**j
    in_shell = np.flatnonzero((lam > SHELL_R_LOW * 2.0 ** (j - 1)) & (lam < SHELL_R_HIGH * 2.0 ** (j + 1)))
    if in_shell.size == 0:
        return EigenvalueClusters(j, eps, g, [], [], None, q, cval, cval <= 1, lam)
    # class boundaries: positions where the next gap exceeds g
    gaps = np.diff(lam)
    breaks = np.flatnonzero(gaps > g)  # class ends at k when gap(k, k+1) > g
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [lam.size - 1]])
    mu = _mu(lam)
    classes, intervals = [], []
    for s, e in zip(starts, ends):
        if e < in_shell[0] or s > in_shell[-1]:
            continue
        mu_below = mu[e + 1] if e + 1 < lam.size else 0.0
        mu_above = mu[s - 1] if s >= 1 else 2.0
        classes.append((int(s), int(e)))
        intervals.append((0.5 * (mu_below + mu[e]), 0.5 * (mu[s] + mu_above)))
    return EigenvalueClusters(j, eps, g, classes, intervals, (int(in_shell[0]), int(in_shell[-1])), q, cval,
                              cval <= 1, lam)


def multiplicity_groups(dec0: SpectralDecomposition, j: int, rel_tol: float = 1e-8) -> EigenvalueClusters:
    """Groups of (numerically) equal eigenvalues in the shell, as clusters with zero threshold."""
    scale = max(dec0.lambda_max, 1.0)
    return cluster_eigenvalues(dec0, j, 0.0, 0.0, threshold=rel_tol * scale)


def spectral_projection(dec: SpectralDecomposition, interval: tuple[float, float]) -> np.ndarray:
    """Orthogonal projection (orthonormal nodal representation) onto ``mu in interval``."""
    a, b = interval
    mu = _mu(dec.lambdas)
    sel = (mu >= a) & (mu <= b)
    U = dec.psi[:, sel] * np.sqrt(dec.grid.cell_volume)
    return U @ U.T


def resolvent_matrix(dec: SpectralDecomposition) -> np.ndarray:
    """``T = (1 - L)^{-1}`` in the orthonormal nodal representation."""
    return operator_matrix(dec, _mu)


def _sym_norm(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(M)))) if M.size else 0.0


def projection_gap_certificate(dec_eps: SpectralDecomposition, dec0: SpectralDecomposition,
                               clusters: EigenvalueClusters) -> BoundCertificate:
    """Check ``||P_eps - P_0|| < (1/omega + |I|/pi) ||T_eps - T_0||`` for every cluster interval."""
    T_gap = _sym_norm(resolvent_matrix(dec_eps) - resolvent_matrix(dec0))
    spec = np.concatenate([_mu(dec_eps.lambdas), _mu(dec0.lambdas)])
    rows = []
    ok = True
    worst = 0.0
    for (s, e), (a, b) in zip(clusters.classes, clusters.intervals):
        gap = _sym_norm(spectral_projection(dec_eps, (a, b)) - spectral_projection(dec0, (a, b)))
        omega = float(np.min(np.minimum(np.abs(spec - a), np.abs(spec - b))))
        bound = (1.0 / omega + (b - a) / np.pi) * T_gap if omega > 0 else np.inf
        holds = gap < bound
        ok &= bool(holds)
        worst = max(worst, gap / bound if np.isfinite(bound) and bound > 0 else 0.0)
        rows.append({"class": [s, e], "interval": [a, b], "gap": gap, "omega": omega, "bound": bound,
                     "holds": bool(holds)})
    return BoundCertificate("riesz_projection", worst, 1.0, ok,
                            {"j": clusters.j, "eps": clusters.eps, "threshold": clusters.threshold},
                            {"T_gap": T_gap, "clusters": rows, "constraint_ok": clusters.constraint_ok,
                             "constraint_value": clusters.constraint_value, "q": clusters.q})


# ---------------------------------------------------------------------------
# block convergence, oscillation, operator gaps
# ---------------------------------------------------------------------------

def block_difference_norm(dec_eps: SpectralDecomposition, dec0: SpectralDecomposition, j: int,
                          rng: np.random.Generator | None = None) -> float:
    """``||Delta_{j,eps} - Delta_{j,0}||_{L^2 -> L^2}`` by power iteration."""
    F = lambda x: phi(j, x)
    M = operator_matrix(dec_eps, F) - operator_matrix(dec0, F)
    return operator_norm(M, rng)


def block_linf_difference_norm(dec_eps: SpectralDecomposition, dec0: SpectralDecomposition, j: int) -> float:
    """``L^inf -> L^inf`` variant: max row sum of the kernel difference times h^d."""
    F = lambda x: phi(j, x)
    K = multiplier_kernel(dec_eps, F) - multiplier_kernel(dec0, F)
    return float(np.max(np.sum(np.abs(K), axis=1)) * dec0.grid.cell_volume)


def block_convergence_rate(A_unit: CoefficientField, js, eps_list, decs: dict | None = None,
                           seed: int = 0) -> dict[int, RateFit]:
    decs = decs if decs is not None else {}
    d0 = decs.get(0.0) or decompose(assemble(homogenized_coefficient(A_unit)))
    de = [decs.get(e) or decompose(assemble(rescale_coefficient(A_unit, e))) for e in eps_list]
    out = {}
    for j in js:
        vals = [block_difference_norm(d, d0, j, np.random.default_rng([seed, int(j) + 1, k])) for k, d in enumerate(de)]
        out[int(j)] = fit_rate(eps_list, vals)
    return out


def oscillation_certificate(f: Callable[[np.ndarray], np.ndarray], alpha: float, eps_list,
                            N: int = 512) -> RateFit:
    """``||f(./eps)||_{C^{-alpha}}`` with the blocks of the flat Laplacian, fitted against eps."""
    grid = make_grid(1, N)
    y = grid.coords()[:, 0]
    probe = np.asarray(f(y), dtype=float)
    if abs(probe.mean()) > 1e-10 * max(1.0, np.max(np.abs(probe))):
        raise ValueError("oscillation_certificate needs a mean-zero profile")
    dec = decompose(assemble(constant_coefficient(grid, [[1.0]])))
    vals = [float(besov_norm(dec, -alpha, np.asarray(f(np.mod(y / e, 1.0)), dtype=float))) for e in eps_list]
    return fit_rate(eps_list, vals)


def homo_operator_gap(A_unit: CoefficientField, eps_list, g: np.ndarray | None = None,
                      decs: dict | None = None) -> dict[str, RateFit]:
    """Inverse, resolvent and two-scale gradient gaps against the homogenized operator."""
    grid = A_unit.grid
    decs = decs if decs is not None else {}
    d0 = decs.get(0.0) or decompose(assemble(homogenized_coefficient(A_unit)))
    inv = _inv_sq
    K0, R0 = operator_matrix(d0, inv), resolvent_matrix(d0)
    if g is None:
        x = grid.coords()
        g = np.prod(np.cos(2 * np.pi * x), axis=1) + np.sin(2 * np.pi * x[:, 0])
    g = g - g.mean()
    u0 = invert_mean_zero(d0, g)
    grad0 = _grad_edges(grid, u0)  # (d, size)
    inv_gaps, res_gaps, grad_gaps = [], [], []
    for e in eps_list:
        Ae = rescale_coefficient(A_unit, e)
        de = decs.get(e) or decompose(assemble(Ae))
        inv_gaps.append(_sym_norm(operator_matrix(de, inv) - K0))
        res_gaps.append(_sym_norm(resolvent_matrix(de) - R0))
        chi = solve_corrector(Ae, de)
        G = chi.gradient()  # (k, l, size): D_l chi_k
        two_scale = grad0 + np.einsum("kln,kn->ln", G, grad0)
        ue = invert_mean_zero(de, g)
        diff = _grad_edges(grid, ue) - two_scale
        grad_gaps.append(float(np.sqrt(grid.cell_volume * np.sum(diff**2))))
    return {"inverse": fit_rate(eps_list, inv_gaps), "resolvent": fit_rate(eps_list, res_gaps),
            "gradient": fit_rate(eps_list, grad_gaps)}


def operator_pairs(A_unit: CoefficientField, eps_list, T: float = 0.05, M: int = 16,
                   decs: dict | None = None, L: int = 1) -> list[OperatorPair]:
    """Pairs ``(L_eps, L_0)`` with shared homogenized context for the inequality registry."""
    decs = decs if decs is not None else {}
    A0 = homogenized_coefficient(A_unit)
    d0 = decs.get(0.0) or decompose(assemble(A0))
    part = DyadicPartition(L)
    ctx0 = ParaContext(d0, A0, part)
    tg = TimeGrid(T, M)
    out = []
    for e in eps_list:
        Ae = rescale_coefficient(A_unit, e)
        de = decs.get(e) or decompose(assemble(Ae))
        out.append(OperatorPair(float(e), ParaContext(de, Ae, part), ctx0, tg))
    return out


# ---------------------------------------------------------------------------
# heat and Green kernels
# ---------------------------------------------------------------------------

def heat_kernel(dec: SpectralDecomposition, t: float) -> np.ndarray:
    """``Q(t; x, y)`` as a dense matrix."""
    return multiplier_kernel(dec, lambda x: np.exp(-t * x**2))


def periodic_distance(grid: TorusGrid) -> np.ndarray:
    x = grid.coords()
    diff = np.abs(x[:, None, :] - x[None, :, :])
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff**2, axis=-1))


def discrete_theta(N: int, t: float, z: np.ndarray, diffusivity: float = 1.0) -> np.ndarray:
    """Heat kernel of the flat 3-point Laplacian on N nodes, by its Fourier series."""
    k = np.arange(1, N // 2 + 1)
    mu = diffusivity * (2 * N * np.sin(np.pi * k / N)) ** 2
    w = np.exp(-t * mu)
    terms = 2 * w[:-1, None] * np.cos(2 * np.pi * k[:-1, None] * np.asarray(z)[None, :])
    nyq = w[-1] * np.cos(np.pi * N * np.asarray(z))
    return 1.0 + terms.sum(axis=0) + nyq


def green_bound_checks(A: CoefficientField, times=(1e-3, 1e-2, 1e-1), large_times=(0.05, 0.1, 0.2, 0.4),
                       dec: SpectralDecomposition | None = None) -> list[BoundCertificate]:
    """Mass conservation, Gaussian domination, convergence to 1, ``L Q`` decay and the elliptic Green function."""
    grid = A.grid
    dec = dec or decompose(assemble(A))
    d = grid.dim
    dist = periodic_distance(grid)
    out = []
    mass_err = max(float(np.max(np.abs(heat_kernel(dec, t).sum(axis=1) * grid.cell_volume - 1.0)))
                   for t in times + large_times)
    out.append(BoundCertificate("heat_row_mass", mass_err, 1e-10, mass_err <= 1e-10))
    # Gaussian domination: smallest C for a fixed c (chosen from the ellipticity window)
    c = 1.0 / (8.0 * A.ellipticity)
    C = 0.0
    for t in times:
        Q = heat_kernel(dec, t)
        env = (t ** (-d / 2) + 1.0) * np.exp(-c * dist**2 / t)
        C = max(C, float(np.max(Q / env)))
    out.append(BoundCertificate("heat_gaussian_domination", C, KERNEL_CONSTANT_TOL, C <= KERNEL_CONSTANT_TOL, {"c": c}))
    # |Q - 1| <= C e^{-c t}: fitted rate against the spectral gap
    lam1 = float(dec.lambdas[1])
    dev = [float(np.max(np.abs(heat_kernel(dec, t) - 1.0))) for t in large_times]
    slope = float(np.polyfit(large_times, np.log(dev), 1)[0])
    out.append(BoundCertificate("heat_convergence_to_mean", -slope, lam1**2,
                                abs(-slope / lam1**2 - 1.0) <= 0.1, {"times": list(large_times)}))
    # L Q decay: |L Q| <= C e^{-c t} (sqrt t + |x-y|)^{-2-d}
    CL = 0.0
    for t in times + large_times:
        LQ = multiplier_kernel(dec, lambda x: -x**2 * np.exp(-t * x**2))
        env = np.exp(-0.5 * lam1**2 * t) * (np.sqrt(t) + dist) ** (-2.0 - d)
        CL = max(CL, float(np.max(np.abs(LQ) / env)))
    out.append(BoundCertificate("heat_generator_decay", CL, KERNEL_CONSTANT_TOL, CL <= KERNEL_CONSTANT_TOL, {"c": 0.5 * lam1**2}))
    # elliptic Green function: bounded in d=1, logarithmic in d=2, |x-y|^{2-d} above
    Gk = multiplier_kernel(dec, _inv_sq)
    off = dist > 0
    if d == 1:
        env = np.ones_like(dist)
    elif d == 2:
        env = 1.0 + np.abs(np.log(np.where(off, dist, grid.h)))
    else:
        env = np.where(off, dist, grid.h) ** (2.0 - d)
    CG = float(np.max(np.abs(Gk) / env))
    out.append(BoundCertificate("elliptic_green_bound", CG, KERNEL_CONSTANT_TOL, CG <= KERNEL_CONSTANT_TOL))
    return out
