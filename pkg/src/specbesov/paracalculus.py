"""Operator-adapted para-products, resonant products, gradient pairings and commutators.

All operations act on the last axis and broadcast over leading batch axes, so a
whole time stack ``(M+1, size)`` can be processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_core import CoefficientField
from .lp_blocks import BlockTable, DyadicPartition, block_table
from .operator_spectral import SpectralDecomposition

TRIPLE_ORACLE_MAX = 32


@dataclass
class ParaContext:
    """The triple (coefficient, spectral decomposition, dyadic partition)."""

    dec: SpectralDecomposition
    A: CoefficientField
    partition: DyadicPartition = field(default_factory=DyadicPartition)

    def __post_init__(self) -> None:
        if self.dec.grid != self.A.grid:
            raise ValueError("decomposition and coefficient live on different grids")
        self.table: BlockTable = block_table(self.dec, self.partition)

    @property
    def grid(self):
        return self.dec.grid

    @property
    def L(self) -> int:
        return self.partition.L

    @property
    def js(self) -> np.ndarray:
        return self.table.js

    def blocks(self, f: np.ndarray) -> np.ndarray:
        return self.table.all_blocks(f)

    def block(self, j: int, f: np.ndarray) -> np.ndarray:
        return self.dec.synth(self.dec.coeffs(f) * self.table.row(j))

    def low_pass_blocks(self, fb: np.ndarray) -> np.ndarray:
        """``S_j f`` for every j from the block stack of ``f``."""
        csum = np.cumsum(fb, axis=0)
        out = np.zeros_like(fb)
        for idx, j in enumerate(self.js):
            top = j - self.L - 1
            if top >= -1:
                out[idx] = csum[min(top, self.js[-1]) + 1]
        return out

    def band_sums(self, fb: np.ndarray) -> np.ndarray:
        """``sum_{|i-j| <= L} Delta_i f`` for every j."""
        csum = np.concatenate([np.zeros_like(fb[:1]), np.cumsum(fb, axis=0)])
        n = fb.shape[0]
        out = np.empty_like(fb)
        for idx in range(n):
            lo, hi = max(0, idx - self.L), min(n, idx + self.L + 1)
            out[idx] = csum[hi] - csum[lo]
        return out

    def a_times(self, vec: np.ndarray) -> np.ndarray:
        """Apply the nodal matrix field to a gradient-shaped array ``(..., dim, size)``."""
        a = self.A.entries  # (size, dim, dim)
        return np.einsum("nkl,...ln->...kn", a, vec)


def para_lo_hi(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``f prec g = sum_j S_j f * Delta_j g``."""
    fb, gb = ctx.blocks(f), ctx.blocks(g)
    return np.sum(ctx.low_pass_blocks(fb) * gb, axis=0)


def para_hi_lo(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``f succ g = g prec f``."""
    return para_lo_hi(ctx, g, f)


def resonance(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``f o g = sum_{|i-j| <= L} Delta_i f * Delta_j g``."""
    fb, gb = ctx.blocks(f), ctx.blocks(g)
    return np.sum(ctx.band_sums(fb) * gb, axis=0)


def bony_parts(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(f prec g, f o g, f succ g)`` sharing one block computation."""
    fb, gb = ctx.blocks(f), ctx.blocks(g)
    lo_hi = np.sum(ctx.low_pass_blocks(fb) * gb, axis=0)
    hi_lo = np.sum(ctx.low_pass_blocks(gb) * fb, axis=0)
    res = np.sum(ctx.band_sums(fb) * gb, axis=0)
    return lo_hi, res, hi_lo


def gradient_pairing_Pi(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``Pi_a(f, g) = sum_{|i-j| <= L} (a grad Delta_i f) . grad Delta_j g``."""
    fb, gb = ctx.blocks(f), ctx.blocks(g)
    grad_f = ctx.grid.centered_gradient(ctx.band_sums(fb))
    grad_g = ctx.grid.centered_gradient(gb)
    return np.sum(np.sum(ctx.a_times(grad_f) * grad_g, axis=-2), axis=0)


def gradient_para_P(ctx: ParaContext, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``P_a(f, g) = sum_j (a grad S_j f) . grad Delta_j g``."""
    fb, gb = ctx.blocks(f), ctx.blocks(g)
    grad_f = ctx.grid.centered_gradient(ctx.low_pass_blocks(fb))
    grad_g = ctx.grid.centered_gradient(gb)
    return np.sum(np.sum(ctx.a_times(grad_f) * grad_g, axis=-2), axis=0)


def block_remainder_R(ctx: ParaContext, j: int, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``R_j(f, g) = Delta_j(f prec g) - f Delta_j g``."""
    return ctx.block(j, para_lo_hi(ctx, f, g)) - f * ctx.block(j, g)


def commutator_com(ctx: ParaContext, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``Com(f; g; h) = (f prec g) o h - f (g o h)``."""
    return resonance(ctx, para_lo_hi(ctx, f, g), h) - f * resonance(ctx, g, h)


def commutator_com_via_R(ctx: ParaContext, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Second route: ``sum_{|i-j| <= L} R_j(f, g) Delta_i h``."""
    pb = ctx.blocks(para_lo_hi(ctx, f, g))
    gb = ctx.blocks(g)
    R = pb - f[None] * gb
    hb = ctx.band_sums(ctx.blocks(h))
    return np.sum(R * hb, axis=0)


def block_mult_comm(ctx: ParaContext, j: int, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``[Delta_j, f] g = Delta_j(f g) - f Delta_j g``."""
    return ctx.block(j, f * g) - f * ctx.block(j, g)


def triple_tensor(dec: SpectralDecomposition) -> np.ndarray:
    """``T[p, q, r] = <psi_p, psi_q psi_r>``; gated to small grids."""
    if dec.grid.dim != 1 or dec.grid.N > TRIPLE_ORACLE_MAX:
        raise ValueError(f"triple tensor is gated to d=1 and N <= {TRIPLE_ORACLE_MAX}")
    psi = dec.psi
    return dec.grid.cell_volume * np.einsum("xp,xq,xr->pqr", psi, psi, psi)


def commutator_com_oracle(ctx: ParaContext, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Com computed entirely in modal space through the eigen-triple expansion.

    Products of modes are expanded with ``T[p, q, r]`` instead of being formed on the grid.
    """
    dec = ctx.dec
    T = triple_tensor(dec)
    W = ctx.table.weights  # (J, n): phi_j(lambda_n)
    J = W.shape[0]
    fc, gc, hc = dec.coeffs(f), dec.coeffs(g), dec.coeffs(h)
    # sigma_j(lambda_q): low-pass weights for S_j
    sig = np.zeros_like(W)
    for idx, j in enumerate(ctx.js):
        top = j - ctx.L - 1
        if top >= -1:
            sig[idx] = W[: top + 2].sum(axis=0)
    # modal coefficients of f prec g: sum_{q,r} s(q,r) f_q g_r T[p,q,r]
    s_qr = np.einsum("jq,jr->qr", sig, W)
    prec = np.einsum("pqr,qr,q,r->p", T, s_qr, fc, gc)
    band = np.zeros((J, J))
    for i in range(J):
        band[i, max(0, i - ctx.L): i + ctx.L + 1] = 1.0
    hb_w = band @ W  # row j: sum_{|i-j|<=L} phi_i
    total = np.zeros_like(fc)
    for j in range(J):
        rj_first = W[j] * prec
        rj_second = np.einsum("pqr,q,r->p", T, fc, W[j] * gc)
        rj = rj_first - rj_second
        total += np.einsum("mps,p,s->m", T, rj, hb_w[j] * hc)
    return dec.synth(total)


def three_block_expansion(ctx: ParaContext, k: int, i: int, j: int, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``Delta_k(Delta_i f * Delta_j g)`` through the triple tensor."""
    dec = ctx.dec
    T = triple_tensor(dec)
    ci = dec.coeffs(f) * ctx.table.row(i)
    cj = dec.coeffs(g) * ctx.table.row(j)
    return dec.synth(ctx.table.row(k) * np.einsum("pqr,q,r->p", T, ci, cj))
