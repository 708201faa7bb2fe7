"""Dyadic partition of unity, spectral Littlewood-Paley blocks and Besov norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operator_spectral import SpectralDecomposition, invert_mean_zero
from .grid_core import mean_project


def _g(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _zeta(s: np.ndarray) -> np.ndarray:
    a, b = _g(s), _g(1.0 - s)
    return a / (a + b)


def rho(x: np.ndarray) -> np.ndarray:
    """Smooth even bump: 1 on [-3/4, 3/4], 0 outside (-1, 1)."""
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax <= 0.75, 1.0, 0.0)
    mid = (ax > 0.75) & (ax < 1.0)
    if np.any(mid):
        out = out.astype(float)
        out[mid] = _zeta(4.0 * (1.0 - ax[mid]))
    return out


def phi(j: int, x: np.ndarray) -> np.ndarray:
    """Dyadic partition element: phi_{-1} = rho, phi_j = rho(./2^{j+1}) - rho(./2^j)."""
    x = np.asarray(x, dtype=float)
    if j < -1:
        raise ValueError("phi is defined for j >= -1")
    if j == -1:
        return rho(x)
    return rho(x / 2.0 ** (j + 1)) - rho(x / 2.0**j)


def phi0_scaled(n: int, x: np.ndarray) -> np.ndarray:
    """``phi_0(2^{-n} x)`` for any integer ``n`` (homogeneous blocks)."""
    y = np.asarray(x, dtype=float) / 2.0**n
    return rho(y / 2.0) - rho(y)


def j_max_for(lambda_max: float) -> int:
    """Smallest j with (3/4) 2^{j-1} > lambda_max, so all blocks beyond it vanish."""
    j = -1
    while 0.75 * 2.0 ** (j - 1) <= lambda_max:
        j += 1
    return j


@dataclass
class DyadicPartition:
    """Partition of unity with block-separation parameter ``L``."""

    L: int = 5

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ValueError("L must be a positive integer")

    def phi(self, j: int, x: np.ndarray) -> np.ndarray:
        return phi(j, x)


@dataclass
class BlockTable:
    """Cached block multipliers ``phi_j(lambda_n)`` for ``j = -1..j_max``.

    Row ``j + 1`` of ``weights`` holds ``phi_j`` on the spectrum.
    """

    dec: SpectralDecomposition
    partition: DyadicPartition = field(default_factory=DyadicPartition)

    def __post_init__(self) -> None:
        self.j_max = j_max_for(self.dec.lambda_max)
        self.js = np.arange(-1, self.j_max + 1)
        self.weights = np.stack([phi(int(j), self.dec.lambdas) for j in self.js])

    @property
    def L(self) -> int:
        return self.partition.L

    def row(self, j: int) -> np.ndarray:
        if j < -1 or j > self.j_max:
            return np.zeros_like(self.dec.lambdas)
        return self.weights[j + 1]

    def all_blocks(self, f: np.ndarray) -> np.ndarray:
        """All blocks at once: shape ``(J,) + f.shape`` with ``J = j_max + 2``."""
        c = self.dec.coeffs(f)
        return np.stack([self.dec.synth(c * w) for w in self.weights])

    def low_pass_weights(self, j: int) -> np.ndarray:
        top = j - self.L - 1
        if top < -1:
            return np.zeros_like(self.dec.lambdas)
        return self.weights[: min(top, self.j_max) + 2].sum(axis=0)


_TABLES: dict[tuple[int, int], BlockTable] = {}


def block_table(dec: SpectralDecomposition, partition: DyadicPartition | None = None) -> BlockTable:
    partition = partition or DyadicPartition()
    key = (id(dec), partition.L)
    tab = _TABLES.get(key)
    if tab is None or tab.dec is not dec:
        tab = BlockTable(dec, partition)
        if len(_TABLES) > 64:
            _TABLES.clear()
        _TABLES[key] = tab
    return tab


def block(dec: SpectralDecomposition, j: int, f: np.ndarray, partition: DyadicPartition | None = None) -> np.ndarray:
    """``Delta_j f``; identically zero beyond ``j_max``."""
    w = block_table(dec, partition).row(j)
    return dec.synth(dec.coeffs(f) * w)


def low_pass(dec: SpectralDecomposition, j: int, f: np.ndarray, partition: DyadicPartition | None = None):
    """Return ``(S_j f, f - S_j f)`` with ``S_j = sum_{i <= j-L-1} Delta_i``."""
    w = block_table(dec, partition).low_pass_weights(j)
    s = dec.synth(dec.coeffs(f) * w)
    return s, f - s


def homogeneous_block(dec: SpectralDecomposition, n: int, f: np.ndarray) -> np.ndarray:
    """``phi_0(2^{-n} sqrt(-L)) f`` for any integer ``n``."""
    return dec.synth(dec.coeffs(f) * phi0_scaled(n, dec.lambdas))


def _lq(values: np.ndarray, q: float) -> np.ndarray:
    if q == np.inf:
        return np.max(values, axis=0)
    return np.sum(values**q, axis=0) ** (1.0 / q)


def besov_norm(
    dec: SpectralDecomposition,
    alpha: float,
    f: np.ndarray,
    p: float = np.inf,
    q: float = np.inf,
    partition: DyadicPartition | None = None,
) -> np.ndarray:
    """``|| (2^{alpha j} ||Delta_j f||_{L^p})_j ||_{l^q}``; batch axes of ``f`` are kept."""
    tab = block_table(dec, partition)
    blocks = tab.all_blocks(f)
    norms = dec.grid.lp_norm(blocks, p)
    scale = 2.0 ** (alpha * tab.js.astype(float))
    scale = scale.reshape((-1,) + (1,) * (norms.ndim - 1))
    return _lq(scale * norms, q)


def besov_norm_from_blocks(js: np.ndarray, block_norms: np.ndarray, alpha: float, q: float = np.inf):
    scale = (2.0 ** (alpha * js.astype(float))).reshape((-1,) + (1,) * (block_norms.ndim - 1))
    return _lq(scale * block_norms, q)


def apply_L(dec: SpectralDecomposition, f: np.ndarray) -> np.ndarray:
    """``L f = -sum lambda_n^2 <f, psi_n> psi_n`` (the negative semidefinite generator)."""
    return dec.synth(-dec.coeffs(f) * dec.lambdas**2)


def comparison_norm(
    dec_eps: SpectralDecomposition,
    dec_0: SpectralDecomposition,
    alpha: float,
    f_eps: np.ndarray,
    f_0: np.ndarray,
    partition: DyadicPartition | None = None,
) -> float:
    """Norm comparing ``f_eps`` (measured against its own operator) with ``f_0``.

    For alpha in (1, 2) the generators are applied, for alpha in (-2, -1) they
    are inverted on the mean-zero part; the Besov norm uses ``dec_0``.
    """
    grid = dec_0.grid
    m_eps, fl_eps = mean_project(grid, f_eps)
    m_0, fl_0 = mean_project(grid, f_0)
    if 1.0 < alpha < 2.0:
        diff = apply_L(dec_eps, f_eps) - apply_L(dec_0, f_0)
        reg = alpha - 2.0
    elif -2.0 < alpha < -1.0:
        diff = -invert_mean_zero(dec_eps, fl_eps) + invert_mean_zero(dec_0, fl_0)
        reg = alpha + 2.0
    else:
        raise ValueError("comparison_norm needs alpha in (-2,-1) or (1,2)")
    return float(abs(m_eps - m_0) + besov_norm(dec_0, reg, diff, partition=partition))
