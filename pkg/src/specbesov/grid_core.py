"""Periodic grids, grid functions and coefficient fields on the unit torus.

Grid functions are plain numpy arrays whose last axis runs over the ``N**dim``
nodes in C order; any leading axes are batch axes (time nodes, samples).
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

MIN_POINTS_PER_PERIOD = 16


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``(R/Z)^dim`` with ``N`` points per axis."""

    dim: int
    N: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def size(self) -> int:
        return self.N**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``."""
        axes = np.meshgrid(*([np.arange(self.N) * self.h] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.cell_volume * np.sum(f * g, axis=-1)

    def lp_norm(self, f: np.ndarray, p: float) -> np.ndarray:
        if p == np.inf:
            return np.max(np.abs(f), axis=-1)
        return (self.cell_volume * np.sum(np.abs(f) ** p, axis=-1)) ** (1.0 / p)

    def shift(self, f: np.ndarray, axis: int, step: int) -> np.ndarray:
        """Values at ``x + step*h*e_axis`` (periodic)."""
        lead = f.shape[:-1]
        g = f.reshape(lead + self.shape)
        g = np.roll(g, -step, axis=len(lead) + axis)
        return g.reshape(lead + (self.size,))

    def centered_gradient(self, f: np.ndarray) -> np.ndarray:
        """Second-order centered differences; result has a new axis -2 of length dim."""
        parts = [(self.shift(f, k, 1) - self.shift(f, k, -1)) / (2 * self.h) for k in range(self.dim)]
        return np.stack(parts, axis=-2)


def make_grid(dim: int, N: int) -> TorusGrid:
    return TorusGrid(dim, N)


def mean_project(grid: TorusGrid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``f`` into its mean and its mean-zero fluctuation."""
    mean = grid.cell_volume * np.sum(f, axis=-1)
    fluct = f - np.asarray(mean)[..., None]
    # one correction pass removes the rounding residue of the first subtraction
    fluct = fluct - np.mean(fluct, axis=-1, keepdims=True)
    return mean, fluct


Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric elliptic matrix field sampled at the nodes of ``grid``.

    ``func`` maps unit-cell points ``(n, dim)`` to matrices ``(n, dim, dim)``;
    the samples are ``func(x / eps mod 1)``.  ``cell_entries`` holds the same
    field at the cell centres ``x + h/2`` (edge midpoints in one dimension).
    """

    grid: TorusGrid
    func: Profile
    eps: float = 1.0
    name: str = "custom"
    holder_exponent: float = 1.0
    entries: np.ndarray = field(init=False, repr=False, compare=False)
    cell_entries: np.ndarray = field(init=False, repr=False, compare=False)
    ellipticity: float = field(init=False, compare=False)

    def __post_init__(self) -> None:
        m = 1.0 / self.eps
        if abs(m - round(m)) > 1e-9 or round(m) < 1:
            raise ValueError(f"eps must be an inverse integer, got {self.eps}")
        m = int(round(m))
        if m > 1 and self.grid.N < MIN_POINTS_PER_PERIOD * m:
            raise ValueError(
                f"grid N={self.grid.N} does not resolve eps=1/{m}: need N >= {MIN_POINTS_PER_PERIOD * m}"
            )
        a, lam = self._sample(self.grid.coords(), m)
        b, lam_b = self._sample(self.grid.coords() + 0.5 * self.grid.h, m)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "cell_entries", b)
        object.__setattr__(self, "ellipticity", max(lam, lam_b))

    def _sample(self, x: np.ndarray, m: int) -> tuple[np.ndarray, float]:
        y = np.mod(x * m, 1.0)
        a = np.asarray(self.func(y), dtype=float).reshape(self.grid.size, self.grid.dim, self.grid.dim)
        if not np.all(np.isfinite(a)):
            raise ValueError("coefficient samples must be finite")
        if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > 1e-12 * max(1.0, np.max(np.abs(a))):
            raise ValueError("coefficient samples must be symmetric")
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        ev = np.linalg.eigvalsh(a)
        if ev.min() <= 0:
            raise ValueError("coefficient is not uniformly elliptic (non-positive eigenvalue)")
        a.setflags(write=False)
        return a, float(max(ev.max(), 1.0 / ev.min(), 1.0))

    @property
    def m(self) -> int:
        return int(round(1.0 / self.eps))

    def scalar(self) -> np.ndarray:
        """The (0, 0) entry; the whole coefficient when dim == 1."""
        return self.entries[:, 0, 0]

    def fingerprint(self) -> str:
        digest = hashlib.sha1(np.ascontiguousarray(self.entries).tobytes())
        digest.update(np.ascontiguousarray(self.cell_entries).tobytes())
        digest.update(f"{self.grid.dim}:{self.grid.N}".encode())
        return digest.hexdigest()[:16]


def rescale_coefficient(A: CoefficientField, eps: float) -> CoefficientField:
    """Return the field ``A(. / eps)`` on the same grid."""
    return CoefficientField(A.grid, A.func, A.eps * eps, A.name, A.holder_exponent)


def constant_coefficient(grid: TorusGrid, matrix) -> CoefficientField:
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    if mat.shape == (1, 1) and grid.dim > 1:
        mat = mat[0, 0] * np.eye(grid.dim)

    def func(y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(mat, (len(y), grid.dim, grid.dim)).copy()

    return CoefficientField(grid, func, 1.0, "const", np.inf)


def _sin_profile(dim: int) -> Profile:
    def func(y: np.ndarray) -> np.ndarray:
        s = 2.0 + np.mean(np.sin(2 * np.pi * y), axis=-1)
        return s[:, None, None] * np.eye(dim)

    return func


def _checker_profile(dim: int) -> Profile:
    def func(y: np.ndarray) -> np.ndarray:
        s = 2.0 + 0.9 * np.tanh(6.0 * np.prod(np.sin(2 * np.pi * y), axis=-1))
        return s[:, None, None] * np.eye(dim)

    return func


PROFILES = ("const", "sin", "checker")


def named_coefficient(grid: TorusGrid, name: str, eps: float = 1.0) -> CoefficientField:
    """Build one of the named profiles ``const`` (identity), ``sin`` or ``checker``."""
    if name == "const":
        return constant_coefficient(grid, np.eye(grid.dim))
    if name == "sin":
        return CoefficientField(grid, _sin_profile(grid.dim), eps, "sin", 1.0)
    if name == "checker":
        return CoefficientField(grid, _checker_profile(grid.dim), eps, "checker", 1.0)
    raise ValueError(f"unknown profile {name!r}; choose from {PROFILES}")


def coefficient_from_table(grid: TorusGrid, path: str | Path, eps: float = 1.0) -> CoefficientField:
    """Scalar 1-D coefficient from a two-column CSV ``y,a`` on the unit cell.

    Values are interpolated linearly with periodic wrap and multiplied by Id.
    """
    if grid.dim != 1:
        raise ValueError("table coefficients are supported in dimension one only")
    ys, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                ys.append(float(row[0]))
                vals.append(float(row[1]))
            except (ValueError, IndexError):
                continue
    if len(ys) < 2:
        raise ValueError(f"coefficient table {path} has fewer than two rows")
    order = np.argsort(ys)
    ys_arr, vals_arr = np.asarray(ys)[order], np.asarray(vals)[order]

    def func(y: np.ndarray) -> np.ndarray:
        return np.interp(y[:, 0], ys_arr, vals_arr, period=1.0)[:, None, None]

    return CoefficientField(grid, func, eps, f"table:{Path(path).name}", 1.0)
