"""Stochastic enhancements and para-controlled fixed-point solvers (1-D KPZ and Phi^4 shape).

Conventions
-----------
* Space-time arrays have shape ``(M+1, size)`` on a :class:`TimeGrid`.
* Stationary objects are simulated on an extended grid ``[-T_burn, T]`` with the
  same step and restricted to the window ``[0, T]``.  On the window every
  stationary integral satisfies ``I(f)(t) = e^{tL} I(f)(0) + I_0^t(f)`` exactly
  at the discrete level, which is what makes the reconstruction identities exact.
* ``u_sharp(0)`` defaults to zero, so that ``u = e^{tL}(u(0)-u_sharp(0)) + (para term) + u_sharp``.
* Noise: i.i.d. standard normals per node and time step, keyed by ``(seed, sample)``
  and projected onto each operator's eigenbasis (common-noise coupling across eps).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .d1_calculus import a_dx, dx
from .grid_core import CoefficientField, rescale_coefficient
from .heat_calculus import (TimeGrid, duhamel, duhamel_modal, heat_orbit, ou_modal, parabolic_holder_norm,
                            project_normals, weighted_norm)
from .homogenization import homogenized_coefficient
from .lp_blocks import apply_L, besov_norm
from .operator_spectral import SpectralDecomposition, assemble, decompose, invert_mean_zero
from .paracalculus import ParaContext, bony_parts, commutator_com, para_lo_hi, resonance
from .rate_lab import RateFit, fit_rate

log = logging.getLogger(__name__)

ETA = 1.0 / 1024
MAX_PICARD = 64
PICARD_TOL = 1e-8
REALIZATION_KEY = 1_000_003


class NonContraction(RuntimeError):
    """Picard iterates grew for three consecutive iterations."""


@dataclass(frozen=True)
class NoiseModel:
    delta: float
    seed: int = 0
    damping: float = 0.0
    burn_in: float = 0.15
    reference: SpectralDecomposition | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def extended_grid(tg: TimeGrid, burn_in: float) -> tuple[TimeGrid, int]:
    nb = int(np.ceil(burn_in / tg.dt))
    return TimeGrid(tg.T + nb * tg.dt, tg.M + nb), nb


def grid_normals(noise: NoiseModel, sample: int, steps: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """``(Z0, Z)``: standard normals on the nodes, identical for every operator."""
    rng = np.random.default_rng([noise.seed, sample])
    return rng.standard_normal(size), rng.standard_normal((steps, size))


def _stationary_integral(ctx: ParaContext, tg_ext: TimeGrid, F: np.ndarray, damping: float,
                         keep_mean: bool) -> np.ndarray:
    """Integral from the start of the extended window (approximately from -infinity)."""
    dec = ctx.dec
    c = dec.coeffs(F)
    if not keep_mean:
        c[:, 0] = 0.0
    return dec.synth(duhamel_modal(dec, tg_ext, c, damping))


def _mean_zero(F: np.ndarray) -> np.ndarray:
    """Fluctuation part; rows that are constant up to rounding map to exact zeros."""
    fl = F - np.mean(F, axis=-1, keepdims=True)
    scale = np.max(np.abs(F), axis=-1, keepdims=True)
    return np.where(np.max(np.abs(fl), axis=-1, keepdims=True) <= 1e-13 * scale, 0.0, fl)


# ---------------------------------------------------------------------------
# KPZ
# ---------------------------------------------------------------------------

@dataclass
class KpzConstants:
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    Ct: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return self.C1 + 4 * self.C2 + self.C3


@dataclass
class KpzEnhancement:
    """One realization of the KPZ tree objects on the window ``[0, T]``.

    Names: ``g``/``b``/``r`` suffixes are the integrated object, its derivative
    and its flux (``A`` times derivative).
    """

    tg: TimeGrid
    consts: KpzConstants
    lin_g: np.ndarray        # <1g>
    lin_b: np.ndarray        # <1b>
    lin_r: np.ndarray        # <1r>
    sq_int_g: np.ndarray     # <20g>
    sq_int_b: np.ndarray     # <20b>
    sq_int_r: np.ndarray     # <20r>
    cherry_g: np.ndarray     # <10g>
    cherry_r: np.ndarray     # <10r>
    cherry: np.ndarray       # <101>
    dbl_g: np.ndarray        # <210g>
    dbl_r: np.ndarray        # <210r>
    L_applied_double_int: np.ndarray  # L<210g>
    cherry2: np.ndarray      # <211>
    sq_sq: np.ndarray        # <22>
    sq: np.ndarray           # <2>
    sq_lin: np.ndarray       # <21>
    mean_noise: np.ndarray   # int_0^t Pi_0 xi
    mean_sq: np.ndarray      # Pi_0 <2>(t)
    mean_sq_lin: np.ndarray  # Pi_0 <21>(t)
    samples: int = 0

    def collection(self) -> dict[str, np.ndarray]:
        return {
            "lin_b": self.lin_b,
            "sq_int_b": self.sq_int_b,
            "cherry": self.cherry,
            "L_applied_double_int": self.L_applied_double_int,
            "cherry2": self.cherry2,
            "sq_sq": self.sq_sq,
        }

    @classmethod
    def zero(cls, ctx: ParaContext, tg: TimeGrid) -> "KpzEnhancement":
        z = np.zeros((tg.M + 1, ctx.grid.size))
        zc = np.zeros(ctx.grid.size)
        consts = KpzConstants(zc, zc.copy(), zc.copy(), zc.copy())
        zt = np.zeros(tg.M + 1)
        return cls(tg, consts, *([z] * 16), mean_noise=zt, mean_sq=zt, mean_sq_lin=zt)


def _kpz_first_layer(ctx: ParaContext, tg_ext: TimeGrid, nb: int, noise: NoiseModel, sample: int):
    dec = ctx.dec
    Z0, Z = grid_normals(noise, sample, tg_ext.M, ctx.grid.size)
    g1 = dec.synth(ou_modal(dec, tg_ext, noise.delta, Z0, Z, noise.damping,
                                reference=noise.reference))
    b1 = dx(ctx, g1)
    r1 = ctx.A.scalar() * b1
    g10 = _stationary_integral(ctx, tg_ext, b1, noise.damping, keep_mean=False)
    z_mean = project_normals(dec, Z)[:, 0]
    w0 = np.concatenate([[0.0], np.cumsum(np.sqrt(tg_ext.dt) * z_mean)])
    return g1, b1, r1, g10, w0


def _kpz_second_layer(ctx, tg_ext, noise, b1, r1, C1):
    s2 = r1 * b1 - C1
    g20 = _stationary_integral(ctx, tg_ext, s2, noise.damping, keep_mean=False)
    b20 = dx(ctx, g20)
    r20 = ctx.A.scalar() * b20
    return s2, g20, b20, r20


def _kpz_third_layer(ctx, tg_ext, noise, b1, r1, r20, Ct):
    s21 = r20 * b1 - 2 * Ct * r1
    g210 = _stationary_integral(ctx, tg_ext, s21, noise.damping, keep_mean=False)
    return s21, g210


def estimate_kpz_constants(ctx: ParaContext, tg: TimeGrid, noise: NoiseModel, mc_samples: int) -> KpzConstants:
    """Pointwise Monte-Carlo means over samples and window nodes."""
    if mc_samples < 8:
        raise ValueError("mc_samples must be at least 8")
    tg_ext, nb = extended_grid(tg, noise.burn_in)
    w = slice(nb, None)
    acc = {k: np.zeros(ctx.grid.size) for k in ("C1", "Ct", "C2", "C3")}
    first = []
    for s in range(mc_samples):
        g1, b1, r1, g10, _ = _kpz_first_layer(ctx, tg_ext, nb, noise, s)
        r10 = a_dx(ctx, g10[w])
        acc["C1"] += np.mean(r1[w] * b1[w], axis=0)
        acc["Ct"] += np.mean(resonance(ctx, r10, b1[w]), axis=0)
    C1 = acc["C1"] / mc_samples
    Ct = acc["Ct"] / mc_samples
    for s in range(mc_samples):
        g1, b1, r1, g10, _ = _kpz_first_layer(ctx, tg_ext, nb, noise, s)
        s2, g20, b20, r20 = _kpz_second_layer(ctx, tg_ext, noise, b1, r1, C1)
        s21, g210 = _kpz_third_layer(ctx, tg_ext, noise, b1, r1, r20, Ct)
        r210 = a_dx(ctx, g210[w])
        acc["C3"] += np.mean(r20[w] * b20[w], axis=0)
        acc["C2"] += np.mean(resonance(ctx, r210, b1[w]), axis=0)
    return KpzConstants(C1, acc["C2"] / mc_samples, acc["C3"] / mc_samples, Ct)


def kpz_realization(ctx: ParaContext, tg: TimeGrid, noise: NoiseModel, consts: KpzConstants,
                    sample: int = REALIZATION_KEY) -> KpzEnhancement:
    """Assemble all renormalized objects for one noise sample with fixed constants."""
    tg_ext, nb = extended_grid(tg, noise.burn_in)
    w = slice(nb, None)
    g1, b1, r1, g10, w0 = _kpz_first_layer(ctx, tg_ext, nb, noise, sample)
    s2, g20, b20, r20 = _kpz_second_layer(ctx, tg_ext, noise, b1, r1, consts.C1)
    s21, g210 = _kpz_third_layer(ctx, tg_ext, noise, b1, r1, r20, consts.Ct)
    b1w, r1w = b1[w], r1[w]
    r10 = a_dx(ctx, g10[w])
    r210 = a_dx(ctx, g210[w])
    s101 = resonance(ctx, r10, b1w) - consts.Ct
    s211 = resonance(ctx, r210, b1w) - consts.Ct * r20[w] - consts.C2
    s22 = r20[w] * b20[w] - consts.C3
    L210 = apply_L(ctx.dec, g210[w])
    return KpzEnhancement(
        tg=tg, consts=consts,
        lin_g=g1[w], lin_b=b1w, lin_r=r1w,
        sq_int_g=g20[w], sq_int_b=b20[w], sq_int_r=r20[w],
        cherry_g=g10[w], cherry_r=r10, cherry=s101,
        dbl_g=g210[w], dbl_r=r210, L_applied_double_int=L210,
        cherry2=s211, sq_sq=s22, sq=s2[w], sq_lin=s21[w],
        mean_noise=w0[w] - w0[nb],
        mean_sq=np.mean(s2[w], axis=-1), mean_sq_lin=np.mean(s21[w], axis=-1),
    )


def build_kpz_enhancement(ctx: ParaContext, tg: TimeGrid, noise: NoiseModel, mc_samples: int) -> KpzEnhancement:
    if ctx.grid.dim != 1:
        raise ValueError("KPZ enhancement is implemented in dimension one")
    consts = estimate_kpz_constants(ctx, tg, noise, mc_samples)
    enh = kpz_realization(ctx, tg, noise, consts)
    enh.samples = mc_samples
    return enh


@dataclass
class FixedPointState:
    u: np.ndarray
    u_sharp: np.ndarray
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


def _picard(step, u, us, norm, tol=PICARD_TOL, max_iter=MAX_PICARD) -> FixedPointState:
    hist: list[float] = []
    growth = 0
    for it in range(1, max_iter + 1):
        nu, nus = step(u, us)
        res = norm(nu - u) + norm(nus - us)
        hist.append(res)
        u, us = nu, nus
        if not np.isfinite(res):
            raise NonContraction(f"non-finite Picard residual after {it} iterations")
        if len(hist) > 1 and res > hist[-2]:
            growth += 1
            if growth >= 3:
                raise NonContraction(f"Picard residual grew three times in a row: {hist[-4:]}")
        else:
            growth = 0
        if res < tol:
            return FixedPointState(u, us, it, res, hist)
    log.warning("Picard iteration stopped at %d iterations, residual %.3e", max_iter, hist[-1])
    return FixedPointState(u, us, max_iter, hist[-1], hist)


def kpz_Lambda(ctx: ParaContext, enh: KpzEnhancement, u: np.ndarray) -> np.ndarray:
    return 2 * a_dx(ctx, u) + 4 * enh.dbl_r


def kpz_map(ctx: ParaContext, enh: KpzEnhancement, u0: np.ndarray, u0_sharp: np.ndarray):
    """Return the two-component mild map of the KPZ system."""
    tg = enh.tg
    dec = ctx.dec
    A = ctx.A.scalar()
    heat_u0 = heat_orbit(dec, tg, u0)
    heat_us0 = heat_orbit(dec, tg, u0_sharp)
    heat_diff = heat_u0 - heat_us0
    heat_g10 = heat_orbit(dec, tg, enh.cherry_g[0])
    I_b1 = duhamel(dec, tg, enh.lin_b)

    def step(u, us):
        lam = kpz_Lambda(ctx, enh, u)
        lo_hi, _, hi_lo = bony_parts(ctx, lam, enh.lin_b)
        I_lohi = duhamel(dec, tg, lo_hi)
        comm_I = I_lohi - para_lo_hi(ctx, lam, I_b1)
        comm_aD = a_dx(ctx, para_lo_hi(ctx, lam, enh.cherry_g)) - para_lo_hi(ctx, lam, enh.cherry_r)
        inner = heat_diff + us + comm_I - para_lo_hi(ctx, lam, heat_g10)
        W = (lam * enh.cherry
             + commutator_com(ctx, lam, enh.cherry_r, enh.lin_b)
             + resonance(ctx, comm_aD, enh.lin_b)
             + resonance(ctx, enh.lin_b, a_dx(ctx, inner)))
        K = hi_lo + 4 * enh.cherry2 + enh.sq_sq + enh.sq_int_b * lam + lam**2 / (4 * A) + 2 * W
        I_K = duhamel(dec, tg, K)
        return heat_u0 + I_lohi + I_K, heat_us0 + I_K

    return step


def sup_besov(ctx: ParaContext, alpha: float, F: np.ndarray) -> float:
    return float(np.max(besov_norm(ctx.dec, alpha, F, partition=ctx.partition)))


def solve_fixed_point_kpz(ctx: ParaContext, enh: KpzEnhancement, u0: np.ndarray,
                          u0_sharp: np.ndarray | None = None, tol: float = PICARD_TOL) -> FixedPointState:
    if ctx.grid.dim != 1:
        raise ValueError("KPZ solver is implemented in dimension one")
    u0_sharp = np.zeros_like(u0) if u0_sharp is None else u0_sharp
    step = kpz_map(ctx, enh, u0, u0_sharp)
    u = heat_orbit(ctx.dec, enh.tg, u0)
    us = heat_orbit(ctx.dec, enh.tg, u0_sharp)
    sigma = 0.5 - ETA
    return _picard(step, u, us, lambda d: sup_besov(ctx, sigma, d), tol)


def kpz_reconstruct(ctx: ParaContext, enh: KpzEnhancement, state: FixedPointState) -> np.ndarray:
    """``h = u + <1g> + <20g> + 2<210g> + int Pi_0(xi + <2> + 2<21>)``."""
    tg = enh.tg
    mean_track = np.concatenate([[0.0], np.cumsum(
        0.5 * tg.dt * ((enh.mean_sq[1:] + enh.mean_sq[:-1]) + 2 * (enh.mean_sq_lin[1:] + enh.mean_sq_lin[:-1])))])
    m = enh.mean_noise + mean_track
    return state.u + enh.lin_g + enh.sq_int_g + 2 * enh.dbl_g + m[:, None]


def kpz_mild_residual(ctx: ParaContext, enh: KpzEnhancement, h: np.ndarray) -> float:
    """Sup-norm defect of the mild form of the renormalized equation for ``h``."""
    tg = enh.tg
    A = ctx.A.scalar()
    dh = dx(ctx, h)
    N = A * dh**2 - enh.consts.C - 4 * enh.consts.Ct * A * dh
    v = h - enh.lin_g - enh.mean_noise[:, None]
    pred = heat_orbit(ctx.dec, tg, v[0]) + duhamel(ctx.dec, tg, N)
    return float(np.max(np.abs(v - pred)))


def x_norm(ctx: ParaContext, tg: TimeGrid, F: np.ndarray, alpha_sup: float, sigma: float, beta: float,
           alpha_hol: float) -> float:
    """``L^inf C^{alpha_sup} + C^{beta}_{sigma} C^{alpha_hol; eps}`` (eps-blocks)."""
    sup = sup_besov(ctx, alpha_sup, F)
    hol = weighted_norm(tg, F, sigma, beta,
                        lambda x: np.atleast_1d(besov_norm(ctx.dec, alpha_hol, x, partition=ctx.partition)))
    return sup + hol["total"]


def kpz_solution_norm(ctx: ParaContext, tg: TimeGrid, state: FixedPointState) -> float:
    e = ETA
    n1 = x_norm(ctx, tg, state.u, 0.5 - e, 0.5 + 7 * e, e / 2, 1 + 4 * e)
    n2 = x_norm(ctx, tg, state.u_sharp, 0.5 - e, 1 + 4 * e, e / 2, 1.5 + e)
    return n1 + n2


# ---------------------------------------------------------------------------
# Phi^4 shape (one space dimension)
# ---------------------------------------------------------------------------

@dataclass
class Phi4Enhancement:
    tg: TimeGrid
    C1: np.ndarray
    C2: np.ndarray
    one: np.ndarray
    two: np.ndarray
    three: np.ndarray
    g20: np.ndarray
    g30: np.ndarray
    p31: np.ndarray
    p22: np.ndarray
    p32: np.ndarray
    I_two: np.ndarray
    samples: int = 0

    def collection(self, ctx: ParaContext) -> dict[str, np.ndarray]:
        fl = _mean_zero(self.two)
        return {
            "one": self.one,
            "mean_two": self.two.mean(axis=-1),
            "inv_two": -invert_mean_zero(ctx.dec, fl),
            "g30": self.g30,
            "p31": self.p31,
            "p22": self.p22,
            "p32": self.p32,
        }

    def flux(self, ctx: ParaContext) -> dict[str, np.ndarray]:
        return {"one": a_dx(ctx, self.one), "g20": a_dx(ctx, self.g20), "g30": a_dx(ctx, self.g30)}

    @classmethod
    def zero(cls, ctx: ParaContext, tg: TimeGrid) -> "Phi4Enhancement":
        z = np.zeros((tg.M + 1, ctx.grid.size))
        zc = np.zeros(ctx.grid.size)
        return cls(tg, zc, zc.copy(), *([z] * 9))


def _phi4_one(ctx, tg_ext, noise, sample):
    dec = ctx.dec
    Z0, Z = grid_normals(noise, sample, tg_ext.M, ctx.grid.size)
    c = ou_modal(dec, tg_ext, noise.delta, Z0, Z, noise.damping, include_mean=True,
                 reference=noise.reference)
    return dec.synth(c)


def build_phi4_enhancement_1d(ctx: ParaContext, tg: TimeGrid, noise: NoiseModel, mc_samples: int,
                              sample: int = REALIZATION_KEY) -> Phi4Enhancement:
    if ctx.grid.dim != 1:
        raise ValueError("the Phi^4 enhancement is built in dimension one")
    if mc_samples < 8:
        raise ValueError("mc_samples must be at least 8")
    if noise.damping <= 0:
        raise ValueError("the Phi^4 objects need a positive damping")
    tg_ext, nb = extended_grid(tg, noise.burn_in)
    w = slice(nb, None)
    C1 = np.zeros(ctx.grid.size)
    for s in range(mc_samples):
        one = _phi4_one(ctx, tg_ext, noise, s)
        C1 += np.mean(one[w] ** 2, axis=0)
    C1 /= mc_samples
    C2 = np.zeros(ctx.grid.size)
    for s in range(mc_samples):
        one = _phi4_one(ctx, tg_ext, noise, s)
        two = one**2 - C1
        g20 = _stationary_integral(ctx, tg_ext, two, noise.damping, keep_mean=True)
        C2 += np.mean(resonance(ctx, g20[w], two[w]), axis=0)
    C2 /= mc_samples
    one = _phi4_one(ctx, tg_ext, noise, sample)
    two = one**2 - C1
    three = one**3 - 3 * C1 * one
    g20 = _stationary_integral(ctx, tg_ext, two, noise.damping, keep_mean=True)
    g30 = _stationary_integral(ctx, tg_ext, three, noise.damping, keep_mean=True)
    one, two, three, g20, g30 = one[w], two[w], three[w], g20[w], g30[w]
    return Phi4Enhancement(
        tg=tg, C1=C1, C2=C2, one=one, two=two, three=three, g20=g20, g30=g30,
        p31=resonance(ctx, g30, one),
        p22=resonance(ctx, g20, two) - C2,
        p32=resonance(ctx, g30, two) - 3 * C2 * one,
        I_two=duhamel(ctx.dec, tg, two, noise.damping),
        samples=mc_samples,
    )


PHI4_DAMPING = 1.0


def phi4_map(ctx: ParaContext, enh: Phi4Enhancement, u0: np.ndarray, u0_sharp: np.ndarray):
    tg, dec, damp = enh.tg, ctx.dec, PHI4_DAMPING
    heat_u0 = heat_orbit(dec, tg, u0, damp)
    heat_us0 = heat_orbit(dec, tg, u0_sharp, damp)
    heat_diff = heat_u0 - heat_us0
    I2_minus_20 = enh.I_two - enh.g20

    def step(u, us):
        v = u - enh.g30
        vv_lo, vv_res, _ = bony_parts(ctx, v, v)
        S1 = (vv_res * enh.one
              + 2 * para_lo_hi(ctx, vv_lo, enh.one)
              + 2 * para_lo_hi(ctx, enh.one, vv_lo)
              + 2 * commutator_com(ctx, v, v, enh.one)
              + 2 * v * (resonance(ctx, u, enh.one) - enh.p31))
        lo_hi, _, hi_lo = bony_parts(ctx, v, enh.two)
        I_lohi = duhamel(dec, tg, lo_hi, damp)
        comm_I = I_lohi - para_lo_hi(ctx, v, enh.I_two)
        S2 = (resonance(ctx, heat_diff + us - 3 * comm_I, enh.two) - enh.p32
              - 3 * commutator_com(ctx, v, enh.I_two, enh.two)
              - 3 * v * (enh.p22 + resonance(ctx, I2_minus_20, enh.two)))
        K = v**3 + 3 * hi_lo + 3 * (S1 + S2)
        I_K = duhamel(dec, tg, K, damp)
        return heat_u0 - 3 * I_lohi - I_K, heat_us0 - I_K

    return step


def solve_fixed_point_phi4(ctx: ParaContext, enh: Phi4Enhancement, u0: np.ndarray,
                           u0_sharp: np.ndarray | None = None, tol: float = PICARD_TOL) -> FixedPointState:
    u0_sharp = np.zeros_like(u0) if u0_sharp is None else u0_sharp
    step = phi4_map(ctx, enh, u0, u0_sharp)
    u = heat_orbit(ctx.dec, enh.tg, u0, PHI4_DAMPING)
    us = heat_orbit(ctx.dec, enh.tg, u0_sharp, PHI4_DAMPING)
    sigma = 0.5 + ETA
    return _picard(step, u, us, lambda d: sup_besov(ctx, -sigma, d), tol)


def phi4_reconstruct(enh: Phi4Enhancement, state: FixedPointState) -> np.ndarray:
    """``Phi = <1> - <30> + u``."""
    return enh.one - enh.g30 + state.u


def phi4_mild_residual(ctx: ParaContext, enh: Phi4Enhancement, Phi: np.ndarray) -> float:
    """Defect of ``Phi - <1> = e^{t(L-1)}(.)(0) + I(-Phi^3 + C Phi)`` with ``C = 3C1 - 9C2``."""
    C = 3 * enh.C1 - 9 * enh.C2
    w = Phi - enh.one
    pred = heat_orbit(ctx.dec, enh.tg, w[0], PHI4_DAMPING) + duhamel(ctx.dec, enh.tg, -Phi**3 + C * Phi, PHI4_DAMPING)
    return float(np.max(np.abs(w - pred)))


def phi4_solution_norm(ctx: ParaContext, tg: TimeGrid, state: FixedPointState) -> float:
    e = ETA
    s = 0.5 + e
    n1 = x_norm(ctx, tg, state.u, -s, 2 * (s + 3 * e), e, s + 2 * e)
    n2 = x_norm(ctx, tg, state.u_sharp, -s, 3 * (s + e), e / 2, 2 * s)
    return n1 + n2


# ---------------------------------------------------------------------------
# Independent reference stepper
# ---------------------------------------------------------------------------

def semi_implicit_reference(ctx: ParaContext, u0: np.ndarray, T: float, steps: int, nonlinearity: str,
                            damping: float = 0.0) -> np.ndarray:
    """Crank-Nicolson / Adams-Bashforth-2 stepper on the assembled matrix.

    ``nonlinearity`` is ``"kpz"`` (``+ A (d_x u)^2``) or ``"phi4"`` (``- u^3``).
    Returns the state at time ``T``.  Uses no spectral data.
    """
    grid = ctx.grid
    Mneg = assemble(ctx.A).matrix + damping * np.eye(grid.size)
    A = ctx.A.scalar()
    h = grid.h

    def N(u):
        if nonlinearity == "kpz":
            d = (np.roll(u, -1) - np.roll(u, 1)) / (2 * h)
            return A * d**2
        if nonlinearity == "phi4":
            return -u**3
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")

    dt = T / steps
    I = np.eye(grid.size)
    lhs = sla.lu_factor(I + 0.5 * dt * Mneg)
    rhs_op = I - 0.5 * dt * Mneg
    u = np.array(u0, dtype=float)
    # first step: Heun predictor for the explicit part
    n0 = N(u)
    pred = sla.lu_solve(lhs, rhs_op @ u + dt * n0)
    u_prev, u = u, sla.lu_solve(lhs, rhs_op @ u + 0.5 * dt * (n0 + N(pred)))
    for _ in range(steps - 1):
        n1, n_old = N(u), N(u_prev)
        u_prev, u = u, sla.lu_solve(lhs, rhs_op @ u + dt * (1.5 * n1 - 0.5 * n_old))
    return u


# ---------------------------------------------------------------------------
# eps-convergence experiments
# ---------------------------------------------------------------------------

FLUX_KAPPA = 0.05
MAX_HALVINGS = 2
EXPERIMENTS = ("kpz", "phi4_1d")

# regularity exponents of the enhancement components used in the gap norms
KPZ_REGULARITY = {"lin_b": -0.5 - ETA, "sq_int_b": -2 * ETA, "cherry": -2 * ETA,
                  "L_applied_double_int": -0.5 - ETA, "cherry2": -0.5 - ETA, "sq_sq": -2 * ETA}
PHI4_REGULARITY = {"one": -0.5 - ETA, "inv_two": 1 - 2 * ETA, "g30": 1.5 - 3 * ETA,
                   "p31": -2 * ETA, "p22": -2 * ETA, "p32": -0.5 - ETA}


@dataclass
class ConvergenceReport:
    """Gaps against the homogenized problem, averaged over seeds, with fitted rates."""

    which: str
    eps: list[float]
    delta: float
    seeds: list[int]
    T: float
    M: int
    mc_samples: int
    solution_gap: list[float] = field(default_factory=list)
    sharp_gap: list[float] = field(default_factory=list)
    flux_gap: list[float] = field(default_factory=list)
    enhancement_gap: list[float] = field(default_factory=list)
    x_norms: list[float] = field(default_factory=list)
    x_norm_homogenized: float = float("nan")
    per_seed: dict = field(default_factory=dict)
    fits: dict[str, RateFit] = field(default_factory=dict)
    shape_constant: float = float("nan")
    halvings: int = 0
    partial: bool = False
    failures: list[str] = field(default_factory=list)

    @property
    def uniform_ratio(self) -> float:
        x = np.asarray(self.x_norms, dtype=float)
        return float(x.max() / x.min()) if x.size and x.min() > 0 else float("inf")

    def strictly_decreasing(self, key: str) -> bool:
        v = np.asarray(getattr(self, key), dtype=float)
        return bool(v.size == len(self.eps) and np.all(np.diff(v) < 0))

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("which", "eps", "delta", "seeds", "T", "M", "mc_samples",
                                              "solution_gap", "sharp_gap", "flux_gap", "enhancement_gap",
                                              "x_norms", "x_norm_homogenized", "per_seed", "shape_constant",
                                              "halvings", "partial", "failures")}
        out["fits"] = {k: v.as_dict() for k, v in self.fits.items()}
        out["uniform_ratio"] = self.uniform_ratio
        return out


@dataclass
class _Run:
    ctx: ParaContext
    state: FixedPointState
    field: np.ndarray          # reconstructed solution
    collection: dict[str, np.ndarray]
    x_norm: float


def _run_one(which: str, ctx: ParaContext, tg: TimeGrid, noise: NoiseModel, mc: int, u0: np.ndarray) -> _Run:
    if which == "kpz":
        enh = build_kpz_enhancement(ctx, tg, noise, mc)
        st = solve_fixed_point_kpz(ctx, enh, u0)
        return _Run(ctx, st, kpz_reconstruct(ctx, enh, st), enh.collection(), kpz_solution_norm(ctx, tg, st))
    enh = build_phi4_enhancement_1d(ctx, tg, noise, mc)
    st = solve_fixed_point_phi4(ctx, enh, u0)
    return _Run(ctx, st, phi4_reconstruct(enh, st), enh.collection(ctx), phi4_solution_norm(ctx, tg, st))


def _enhancement_gap(ctx0: ParaContext, coll: dict, coll0: dict, reg: dict[str, float]) -> float:
    total = 0.0
    for key, a in reg.items():
        total += sup_besov(ctx0, a, coll[key] - coll0[key])
    if "mean_two" in coll:
        total += float(np.max(np.abs(coll["mean_two"] - coll0["mean_two"])))
    return total


def _sweep(which, eps_list, delta, seeds, tg, mc, u0, ctxs):
    ctx0 = ctxs[0.0]
    reg = KPZ_REGULARITY if which == "kpz" else PHI4_REGULARITY
    sol_reg = 0.5 - ETA if which == "kpz" else -(0.5 + ETA)
    sharp_reg = -1 + 4 * ETA if which == "kpz" else -1 + 2 * ETA
    flux_reg = sol_reg - 1 - FLUX_KAPPA if which == "kpz" else -0.5 - ETA - 1 - FLUX_KAPPA
    damping = 0.0 if which == "kpz" else PHI4_DAMPING
    per_seed = {}
    for seed in seeds:
        noise = NoiseModel(delta, seed, damping=damping, reference=ctx0.dec)
        r0 = _run_one(which, ctx0, tg, noise, mc, u0)
        f0 = a_dx(ctx0, r0.field)
        Lus0 = apply_L(ctx0.dec, r0.state.u_sharp)
        rows = {"solution_gap": [], "sharp_gap": [], "flux_gap": [], "enhancement_gap": [], "x_norms": [],
                "x_norm_homogenized": r0.x_norm}
        for e in eps_list:
            r = _run_one(which, ctxs[e], tg, noise, mc, u0)
            rows["solution_gap"].append(sup_besov(ctx0, sol_reg, r.state.u - r0.state.u))
            rows["sharp_gap"].append(sup_besov(ctx0, sharp_reg, apply_L(r.ctx.dec, r.state.u_sharp) - Lus0))
            rows["flux_gap"].append(parabolic_holder_norm(ctx0.grid, tg, a_dx(r.ctx, r.field) - f0, flux_reg))
            rows["enhancement_gap"].append(_enhancement_gap(ctx0, r.collection, r0.collection, reg))
            rows["x_norms"].append(r.x_norm)
        per_seed[int(seed)] = rows
    return per_seed


def epsilon_convergence_experiment(A_unit: CoefficientField, eps_list, delta: float, seeds=(7,),
                                   which: str = "kpz", T: float = 0.05, M: int = 50, mc_samples: int = 32,
                                   u0: np.ndarray | None = None, decs: dict | None = None) -> ConvergenceReport:
    """Solve for each eps and for the homogenized operator under common noise; report gaps and rates.

    The mollified noise is the projection onto the homogenized modes with
    ``lambda <= 1/delta``, expanded in each eps eigenbasis, so the regularized
    noise is the same field for every eps.  ``u0`` defaults to zero.  On
    non-contraction the whole sweep restarts with ``T`` halved (at most twice);
    an eps whose solve still fails is dropped and the report flagged partial.
    """
    if which not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {which!r}; choose from {EXPERIMENTS}")
    if A_unit.grid.dim != 1:
        raise ValueError("the eps-convergence experiments run in dimension one")
    eps_list = [float(e) for e in eps_list]
    grid = A_unit.grid
    decs = dict(decs or {})
    A0 = homogenized_coefficient(A_unit)
    ctxs = {0.0: ParaContext(decs.get(0.0) or decompose(assemble(A0)), A0)}
    for e in eps_list:
        Ae = rescale_coefficient(A_unit, e)
        ctxs[e] = ParaContext(decs.get(e) or decompose(assemble(Ae)), Ae)
    u0 = np.zeros(grid.size) if u0 is None else np.asarray(u0, dtype=float)
    rep = ConvergenceReport(which, eps_list, float(delta), [int(s) for s in seeds], T, M, mc_samples)
    tg = TimeGrid(T, M)
    for halving in range(MAX_HALVINGS + 1):
        try:
            per_seed = _sweep(which, eps_list, delta, seeds, tg, mc_samples, u0, ctxs)
            break
        except NonContraction as exc:
            rep.failures.append(f"T={tg.T:g}: {exc}")
            if halving == MAX_HALVINGS:
                rep.partial = True
                return rep
            tg = TimeGrid(tg.T / 2, tg.M)
            rep.halvings += 1
    rep.T = tg.T
    rep.per_seed = per_seed
    for key in ("solution_gap", "sharp_gap", "flux_gap", "enhancement_gap", "x_norms"):
        setattr(rep, key, [float(v) for v in np.mean([r[key] for r in per_seed.values()], axis=0)])
    rep.x_norm_homogenized = float(np.mean([r["x_norm_homogenized"] for r in per_seed.values()]))
    if len(eps_list) >= 3:
        for key in ("solution_gap", "sharp_gap", "flux_gap", "enhancement_gap"):
            rep.fits[key] = fit_rate(eps_list, getattr(rep, key))
        theta = max(rep.fits["solution_gap"].slope, 0.0)
        e = np.asarray(eps_list)
        rep.shape_constant = float(np.max(np.asarray(rep.solution_gap) / (e**theta + np.asarray(rep.enhancement_gap))))
    return rep
