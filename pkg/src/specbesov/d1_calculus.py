"""One-dimensional derivative calculus: ``a d_x`` and its para-product commutators."""

from __future__ import annotations

import numpy as np

from .lp_blocks import besov_norm
from .operator_spectral import invert_mean_zero
from .paracalculus import ParaContext, gradient_pairing_Pi, gradient_para_P, para_lo_hi, resonance


def _require_1d(ctx: ParaContext) -> None:
    if ctx.grid.dim != 1:
        raise ValueError("d1_calculus operates in dimension one only")


def dx(ctx: ParaContext, f: np.ndarray) -> np.ndarray:
    """Centered difference along the single axis."""
    _require_1d(ctx)
    return ctx.grid.centered_gradient(f)[..., 0, :]


def a_dx(ctx: ParaContext, f: np.ndarray) -> np.ndarray:
    """``a d_x f`` with the nodal coefficient."""
    return ctx.A.scalar() * dx(ctx, f)


def edge_flux(ctx: ParaContext, f: np.ndarray) -> np.ndarray:
    """Operator-consistent ``a d_x f``: edge fluxes ``a(x+h/2)(f(x+h)-f(x))/h`` averaged onto the nodes.

    Its discrete divergence is exactly ``L f``, so it carries no ``(h/eps)^2`` sampling error.
    """
    _require_1d(ctx)
    g = ctx.grid
    J = ctx.A.cell_entries[:, 0, 0] * (g.shift(f, 0, 1) - f) / g.h
    return 0.5 * (J + g.shift(J, 0, -1))


def deriv_para_comm(ctx: ParaContext, f: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``[a d_x, f prec] G = a d_x (f prec G) - f prec (a d_x G)``, subtracted literally (edge flux)."""
    return edge_flux(ctx, para_lo_hi(ctx, f, G)) - para_lo_hi(ctx, f, edge_flux(ctx, G))


def alt_pairing_defects(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``P_a(f, g) - (a f') prec g'`` and ``Pi_a(f, g) - (a f') o g'``."""
    af, dg = a_dx(ctx, f), dx(ctx, g)
    d1 = gradient_para_P(ctx, f, g) - para_lo_hi(ctx, af, dg)
    d2 = gradient_pairing_Pi(ctx, f, g) - resonance(ctx, af, dg)
    return d1, d2


def flux_of_inverse(ctx: ParaContext, g: np.ndarray) -> np.ndarray:
    """``a d_x L^{-1} g`` for mean-zero ``g`` through the edge flux."""
    return edge_flux(ctx, -invert_mean_zero(ctx.dec, g))


def flux_convergence_gap(ctx_eps: ParaContext, ctx_0: ParaContext, g_eps: np.ndarray, g_0: np.ndarray,
                         alpha: float, kappa: float = 0.05) -> float:
    """``|| A_eps d_x L_eps^{-1} g_eps - Abar d_x L_0^{-1} g_0 ||_{alpha+1-kappa}`` (blocks of L_0)."""
    if not -1.0 < alpha < 0.0:
        raise ValueError("flux_convergence_gap needs alpha in (-1, 0)")
    diff = flux_of_inverse(ctx_eps, g_eps) - flux_of_inverse(ctx_0, g_0)
    return float(besov_norm(ctx_0.dec, alpha + 1 - kappa, diff, partition=ctx_0.partition))
