"""Heat semigroup, Duhamel integration, stationary Ornstein-Uhlenbeck modes and space-time norms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid_core import TorusGrid
from .lp_blocks import block_table, DyadicPartition
from .operator_spectral import SpectralDecomposition

PHI_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self) -> None:
        if self.M < 8:
            raise ValueError("TimeGrid needs at least 8 steps")
        if self.T <= 0:
            raise ValueError("TimeGrid needs T > 0")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


def phi1(z: np.ndarray) -> np.ndarray:
    """``(e^z - 1) / z`` with a series for small ``|z|``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < PHI_SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    series = 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0
    return np.where(small, series, out)


def phi2(z: np.ndarray) -> np.ndarray:
    """``(e^z - 1 - z) / z^2`` with a series for small ``|z|``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < PHI_SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    out = (np.expm1(zs) - zs) / zs**2
    series = 0.5 + z / 6.0 + z**2 / 24.0 + z**3 / 120.0
    return np.where(small, series, out)


def rates(dec: SpectralDecomposition, damping: float = 0.0) -> np.ndarray:
    return dec.lambdas**2 + damping


def heat_apply(dec: SpectralDecomposition, t: float, f: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """``e^{t(L - damping)} f``."""
    if t < 0:
        raise ValueError("heat_apply needs t >= 0")
    return dec.synth(dec.coeffs(f) * np.exp(-t * rates(dec, damping)))


def heat_orbit(dec: SpectralDecomposition, tg: TimeGrid, f: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """``e^{t(L - damping)} f`` at every node, shape ``(M+1, size)``."""
    c = dec.coeffs(f)
    decay = np.exp(-np.outer(tg.nodes, rates(dec, damping)))
    return dec.synth(decay * c)


def duhamel_modal(dec: SpectralDecomposition, tg: TimeGrid, Fc: np.ndarray, damping: float = 0.0,
                  c0: np.ndarray | None = None) -> np.ndarray:
    """Exponential integrator on modal data ``Fc`` of shape ``(M+1, n)``.

    Returns coefficients of ``e^{tL} c0 + int_0^t e^{(t-s)L} F(s) ds`` with ``F``
    linear between nodes (exact for such data).
    """
    r = rates(dec, damping)
    z = -r * tg.dt
    e, p1, p2 = np.exp(z), tg.dt * phi1(z), tg.dt * phi2(z)
    out = np.empty_like(Fc)
    out[0] = 0.0 if c0 is None else c0
    for k in range(tg.M):
        out[k + 1] = e * out[k] + p1 * Fc[k] + p2 * (Fc[k + 1] - Fc[k])
    return out


def duhamel(dec: SpectralDecomposition, tg: TimeGrid, F: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """``I_a F`` at every node for nodal data ``F`` of shape ``(M+1, size)``."""
    return dec.synth(duhamel_modal(dec, tg, dec.coeffs(F), damping))


def project_normals(dec: SpectralDecomposition, Z: np.ndarray) -> np.ndarray:
    """Map i.i.d. standard normals on the nodes to i.i.d. standard normals per mode."""
    return np.sqrt(dec.grid.cell_volume) * (Z @ dec.psi)


def reference_drive(dec: SpectralDecomposition, reference: SpectralDecomposition, delta: float,
                    Z: np.ndarray) -> np.ndarray:
    """Modal normals of ``dec`` for noise mollified in a fixed reference basis.

    The grid normals ``Z`` are projected on the reference modes with
    ``lambda_ref <= 1/delta`` (mean mode excluded) and the projected noise is
    expanded in the eigenbasis of ``dec``.  Every operator sharing the reference
    therefore sees the same mollified noise.
    """
    active = reference.lambdas <= 1.0 / delta
    active[0] = False
    G = dec.grid.cell_volume * (dec.psi.T @ reference.psi[:, active])
    return project_normals(reference, Z)[..., active] @ G.T


def ou_modal(dec: SpectralDecomposition, tg: TimeGrid, delta: float, Z0: np.ndarray, Z: np.ndarray,
             damping: float = 0.0, include_mean: bool = False,
             reference: SpectralDecomposition | None = None) -> np.ndarray:
    """Stationary OU coefficients per mode driven by grid normals.

    ``Z0`` (size,) seeds the stationary initial law, ``Z`` (M, size) drives the
    steps.  Without ``reference`` the noise is cut off at ``lambda > 1/delta`` in
    the basis of ``dec``; with it the cutoff is taken in the reference basis (see
    :func:`reference_drive`) and the per-mode step variances are the exact ones.
    Mode 0 is zero unless ``include_mean`` is set (which needs a positive damping).
    """
    if include_mean and damping <= 0:
        raise ValueError("the mean mode has no stationary law without damping")
    r = rates(dec, damping)
    if reference is None:
        active = (dec.lambdas <= 1.0 / delta)
        z0 = project_normals(dec, Z0)
        zs = project_normals(dec, Z)
    else:
        active = np.ones(dec.lambdas.size, dtype=bool)
        z0 = reference_drive(dec, reference, delta, Z0)
        zs = reference_drive(dec, reference, delta, Z)
        if include_mean:
            z0[..., 0] = project_normals(dec, Z0)[..., 0]
            zs[..., 0] = project_normals(dec, Z)[..., 0]
    active[0] = include_mean
    rr = np.where(active, r, 1.0)
    out = np.zeros((tg.M + 1, dec.lambdas.size))
    decay = np.exp(-rr * tg.dt)
    step_sd = np.sqrt(-np.expm1(-2 * rr * tg.dt) / (2 * rr))
    out[0] = z0 / np.sqrt(2 * rr)
    for k in range(tg.M):
        out[k + 1] = decay * out[k] + step_sd * zs[k]
    return out * active


def stationary_modal_ou(dec: SpectralDecomposition, delta: float, rng: np.random.Generator, tg: TimeGrid,
                        damping: float = 0.0) -> np.ndarray:
    """One stationary path of the mollified stochastic convolution, shape ``(M+1, size)``."""
    size = dec.grid.size
    Z0 = rng.standard_normal(size)
    Z = rng.standard_normal((tg.M, size))
    return dec.synth(ou_modal(dec, tg, delta, Z0, Z, damping))


def para_lo_hi_batch(dec: SpectralDecomposition, f: np.ndarray, g: np.ndarray,
                     partition: DyadicPartition | None = None) -> np.ndarray:
    tab = block_table(dec, partition)
    fb, gb = tab.all_blocks(f), tab.all_blocks(g)
    L = tab.L
    out = np.zeros(np.broadcast_shapes(f.shape, g.shape))
    low = np.zeros_like(fb[0])
    for idx, j in enumerate(tab.js):
        top = j - L - 1
        if top >= -1:
            low = low + fb[top + 1]
            out = out + low * gb[idx]
    return out


def heat_para_comm(dec: SpectralDecomposition, tg: TimeGrid, F: np.ndarray, G: np.ndarray, damping: float = 0.0,
                   partition: DyadicPartition | None = None) -> np.ndarray:
    """``[I, F prec] G = I(F prec G) - F prec I(G)`` at every node."""
    lhs = duhamel(dec, tg, para_lo_hi_batch(dec, F, G, partition), damping)
    rhs = para_lo_hi_batch(dec, F, duhamel(dec, tg, G, damping), partition)
    return lhs - rhs


def weighted_norm(tg: TimeGrid, F: np.ndarray, sigma: float, beta: float | None,
                  spatial: Callable[[np.ndarray], np.ndarray]) -> dict[str, float]:
    """Weighted sup ``t^{sigma/2}||F(t)||`` and weighted Hoelder seminorm over node pairs.

    ``spatial`` maps an array of shape ``(k, size)`` to ``k`` norms.  Returns the
    parts and their sum (the ``C^beta_sigma`` norm; sup part only if beta is None).
    """
    t = tg.nodes
    norms = spatial(F)
    mask = t > 0 if sigma > 0 else np.ones_like(t, dtype=bool)
    sup = float(np.max(t[mask] ** (sigma / 2) * norms[mask]))
    hol = 0.0
    if beta is not None:
        for i in range(len(t) - 1):
            if sigma > 0 and t[i] == 0:
                continue
            diffs = spatial(F[i + 1:] - F[i])
            ratio = t[i] ** (sigma / 2) * diffs / (t[i + 1:] - t[i]) ** beta
            hol = max(hol, float(np.max(ratio)))
    return {"sup": sup, "holder": hol, "total": sup + hol}


def mathfrak_L_norm(dec: SpectralDecomposition, tg: TimeGrid, F: np.ndarray, alpha: float, sigma: float,
                    besov: Callable[[np.ndarray], np.ndarray]) -> float:
    """``L^inf_sigma C^alpha + C^{alpha/2}_sigma L^inf``."""
    a = weighted_norm(tg, F, sigma, None, besov)["total"]
    b = weighted_norm(tg, F, sigma, alpha / 2, lambda x: np.max(np.abs(x), axis=-1))["total"]
    return a + b


def heat_comm_bound(k: int, t: float, alpha: float, beta: float, c: float = 1.0) -> float:
    """``B_k(t) = 2^{-2k} sum_{j=-1}^{k} 2^{(2-alpha-beta)j} e^{-c t 2^{2j}}``."""
    j = np.arange(-1, k + 1, dtype=float)
    return float(2.0 ** (-2 * k) * np.sum(2.0 ** ((2 - alpha - beta) * j) * np.exp(-c * t * 4.0**j)))


_BUMPS = (
    lambda s, y: np.where((np.abs(s) < 1) & (np.abs(y) < 1),
                          np.exp(-1 / np.clip(1 - s**2, 1e-300, None)) * np.exp(-1 / np.clip(1 - y**2, 1e-300, None)), 0.0),
    lambda s, y: np.where(s**2 + y**2 < 1, np.exp(-1 / np.clip(1 - s**2 - y**2, 1e-300, None)), 0.0),
    lambda s, y: np.where((np.abs(s) < 1) & (np.abs(y) < 1),
                          y * np.exp(-1 / np.clip(1 - s**2, 1e-300, None)) * np.exp(-1 / np.clip(1 - y**2, 1e-300, None)), 0.0),
)


def parabolic_holder_norm(grid: TorusGrid, tg: TimeGrid, F: np.ndarray, alpha: float,
                          n_base_t: int = 3, n_base_x: int = 8) -> float:
    """Discrete ``C^alpha_s`` norm (1-D space) by pairing with rescaled test bumps.

    The pairing is ``delta^{-3} sum_{tau, y} F(tau, y) g((tau - t)/delta^2, (y - x)/delta) dt h``
    over three fixed bump shapes, a coarse lattice of base points and dyadic ``delta``.
    """
    if grid.dim != 1:
        raise ValueError("parabolic_holder_norm is implemented for one space dimension")
    if alpha >= 0:
        raise ValueError("parabolic_holder_norm needs alpha < 0")
    t = tg.nodes
    x = np.arange(grid.N) * grid.h
    kmax = max(1, int(np.log2(grid.N)) - 2)
    deltas = 2.0 ** -np.arange(1, kmax + 1)
    t_bases = np.linspace(0.0, tg.T, n_base_t + 2)[1:-1]
    x_bases = np.arange(n_base_x) / n_base_x
    best = 0.0
    for delta in deltas:
        for tb in t_bases:
            s = (t[:, None] - tb) / delta**2
            for xb in x_bases:
                y = (x[None, :] - xb + 0.5) % 1.0 - 0.5
                y = y / delta
                for bump in _BUMPS:
                    g = bump(s, y)
                    val = abs(np.sum(F * g)) * tg.dt * grid.h / delta**3
                    best = max(best, delta ** (-alpha) * val)
    return best


def theta_heat_kernel(t: float, z: np.ndarray, terms: int = 50) -> np.ndarray:
    """Periodic heat kernel of ``d_x^2`` on the unit circle via the image sum."""
    k = np.arange(-terms, terms + 1)
    zz = np.asarray(z)[..., None] + k
    return np.sum(np.exp(-zz**2 / (4 * t)), axis=-1) / np.sqrt(4 * np.pi * t)
