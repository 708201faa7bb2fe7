"""Discrete divergence-form operator, its spectral decomposition and functional calculus."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid_core import CoefficientField, TorusGrid, mean_project

log = logging.getLogger(__name__)

MAX_DENSE_SIZE = 8192
KERNEL_MAX_SIZE = 8192
SIGN_THRESHOLD = 1e-8


@dataclass(frozen=True)
class EllipticOperator:
    """Matrix of ``-div(a grad)`` on the grid (symmetric positive semidefinite)."""

    grid: TorusGrid
    coefficient: CoefficientField
    matrix: np.ndarray


def _forward_difference(grid: TorusGrid, axis: int) -> sp.csr_matrix:
    n = grid.size
    idx = np.arange(n)
    nbr = grid.shift(idx.astype(float), axis, 1).astype(int)
    data = np.concatenate([np.full(n, 1.0 / grid.h), np.full(n, -1.0 / grid.h)])
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([nbr, idx])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def assemble(A: CoefficientField) -> EllipticOperator:
    """Galerkin finite-difference assembly of ``h^d sum_cells grad u . B grad v``.

    ``B`` is the coefficient sampled at the cell centres (the edge midpoints in
    one dimension), so the form is symmetric and PSD.
    """
    grid = A.grid
    if grid.size > MAX_DENSE_SIZE:
        raise ValueError(f"{grid.size} nodes exceed the dense limit {MAX_DENSE_SIZE}")
    D = [_forward_difference(grid, k) for k in range(grid.dim)]
    M = sp.csr_matrix((grid.size, grid.size))
    for k in range(grid.dim):
        for l in range(grid.dim):
            b = A.cell_entries[:, k, l]
            if np.all(b == 0):
                continue
            M = M + D[k].T @ sp.diags(b) @ D[l]
    mat = M.toarray()
    mat = 0.5 * (mat + mat.T)
    return EllipticOperator(grid, A, mat)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of ``sqrt(-L_a)``; columns of ``psi`` are orthonormal in the h^d inner product."""

    grid: TorusGrid
    lambdas: np.ndarray
    psi: np.ndarray
    coefficient: CoefficientField | None = None

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas[-1])

    def coeffs(self, f: np.ndarray) -> np.ndarray:
        """Modal coefficients ``<f, psi_n>`` along the last axis."""
        return self.grid.cell_volume * (np.asarray(f) @ self.psi)

    def synth(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c) @ self.psi.T


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    significant = np.abs(vecs) > SIGN_THRESHOLD * np.max(np.abs(vecs), axis=0)
    first = np.argmax(significant, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def decompose(op: EllipticOperator) -> SpectralDecomposition:
    grid = op.grid
    evals, evecs = np.linalg.eigh(op.matrix)
    if not np.all(np.isfinite(evals)):
        raise np.linalg.LinAlgError("eigensolver returned non-finite eigenvalues")
    evals = np.clip(evals, 0.0, None)
    order = np.argsort(evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    psi = evecs / np.sqrt(grid.cell_volume)
    psi = _fix_signs(psi)
    # the kernel of a connected periodic stencil is the constants
    psi[:, 0] = 1.0
    evals[0] = 0.0
    resid = op.matrix @ psi - psi * evals
    bad = np.max(np.abs(resid), axis=0) > 1e-8 * (1.0 + evals) * np.max(np.abs(psi), axis=0)
    if np.any(bad[1:]):
        raise np.linalg.LinAlgError(f"eigen-residual too large for {int(bad.sum())} modes")
    return SpectralDecomposition(grid, np.sqrt(evals), psi, op.coefficient)


def decompose_cached(A: CoefficientField, cache_dir: str | Path | None = None) -> SpectralDecomposition:
    """``decompose(assemble(A))`` with an optional on-disk cache keyed by the coefficient samples."""
    if cache_dir is None:
        return decompose(assemble(A))
    path = Path(cache_dir) / f"dec_{A.fingerprint()}.npz"
    if path.exists():
        data = np.load(path)
        log.debug("loaded decomposition from %s", path)
        return SpectralDecomposition(A.grid, data["lambdas"], data["psi"], A)
    dec = decompose(assemble(A))
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, lambdas=dec.lambdas, psi=dec.psi)
    return dec


Multiplier = Callable[[np.ndarray], np.ndarray]


def apply_multiplier(dec: SpectralDecomposition, F: Multiplier, f: np.ndarray) -> np.ndarray:
    """``F(sqrt(-L)) f``."""
    weights = np.asarray(F(dec.lambdas), dtype=float)
    return dec.synth(dec.coeffs(f) * weights)


def multiplier_kernel(dec: SpectralDecomposition, F: Multiplier) -> np.ndarray:
    """Kernel ``K(x, y) = sum_n F(lambda_n) psi_n(x) psi_n(y)`` as a dense matrix."""
    if dec.grid.size > KERNEL_MAX_SIZE:
        raise ValueError("kernel assembly is limited to N^d <= 8192")
    weights = np.asarray(F(dec.lambdas), dtype=float)
    return (dec.psi * weights) @ dec.psi.T


def invert_mean_zero(dec: SpectralDecomposition, f: np.ndarray) -> np.ndarray:
    """Mean-zero solution ``u`` of ``-L u = f``."""
    mean, _ = mean_project(dec.grid, f)
    scale = np.max(np.abs(f)) if np.size(f) else 0.0
    if np.any(np.abs(mean) > 1e-10 * max(scale, 1e-300)) and scale > 0:
        raise ValueError("invert_mean_zero needs a mean-zero right-hand side")
    inv = np.zeros_like(dec.lambdas)
    inv[1:] = dec.lambdas[1:] ** -2.0
    return dec.synth(dec.coeffs(f) * inv)


def operator_matrix(dec: SpectralDecomposition, F: Multiplier) -> np.ndarray:
    """Matrix of ``F(sqrt(-L))`` acting on nodal vectors (same as the kernel times h^d)."""
    return multiplier_kernel(dec, F) * dec.grid.cell_volume
