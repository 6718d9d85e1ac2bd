"""Finite-difference grids for the periodic cell and for Dirichlet intervals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

MIN_NODES = 16


class GridError(ValueError):
    """Raised for unusable discretization parameters."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Nodes x_j = j*dx, j = 0..n-1, on [0, length) with wraparound indexing.

    ``length`` may span several periods of the medium; ``n`` counts nodes over
    the whole length.
    """

    length: float
    n: int

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise GridError(f"periodic grid needs n >= {MIN_NODES}, got {self.n}")
        if not self.length > 0:
            raise GridError(f"grid length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def refine(self, factor: int) -> "PeriodicGrid":
        if factor < 2:
            raise GridError(f"refinement factor must be >= 2, got {factor}")
        return PeriodicGrid(self.length, self.n * factor)

    def laplacian(self, delta: float = 1.0) -> sp.csr_matrix:
        """Sparse matrix of u -> delta * u'' (central differences, periodic)."""
        _check_diffusivity(delta)
        n, h2 = self.n, self.dx**2
        main = np.full(n, -2.0)
        off = np.ones(n - 1)
        lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
        lap[0, n - 1] = 1.0
        lap[n - 1, 0] = 1.0
        return (delta / h2) * lap.tocsr()


@dataclass(frozen=True)
class Interval:
    """The ball B(center, radius) resolved by ``m`` interior nodes.

    Endpoints carry zero Dirichlet ghost values and are not part of the
    unknowns.
    """

    center: float
    radius: float
    m: int

    def __post_init__(self):
        if not self.radius > 0:
            raise GridError(f"interval radius must be positive, got {self.radius}")
        if self.m < MIN_NODES:
            raise GridError(f"interval needs m >= {MIN_NODES} nodes, got {self.m}")

    @property
    def dx(self) -> float:
        return 2.0 * self.radius / (self.m + 1)

    @property
    def x(self) -> np.ndarray:
        return self.center - self.radius + self.dx * np.arange(1, self.m + 1)


def _check_diffusivity(delta: float) -> None:
    if not delta > 0:
        raise GridError(f"diffusivity must be positive, got {delta}")


def second_derivative_periodic(u: np.ndarray, grid: PeriodicGrid, delta: float = 1.0) -> np.ndarray:
    _check_diffusivity(delta)
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise GridError(f"field of shape {u.shape} does not match grid with n={grid.n}")
    return delta * (np.roll(u, 1) - 2.0 * u + np.roll(u, -1)) / grid.dx**2


def second_derivative_dirichlet(u: np.ndarray, interval: Interval, delta: float = 1.0) -> np.ndarray:
    _check_diffusivity(delta)
    u = np.asarray(u, dtype=float)
    if u.shape != (interval.m,):
        raise GridError(f"values of shape {u.shape} do not match interval with m={interval.m}")
    padded = np.concatenate(([0.0], u, [0.0]))
    return delta * (padded[:-2] - 2.0 * u + padded[2:]) / interval.dx**2


def refine(grid: PeriodicGrid, factor: int) -> PeriodicGrid:
    return grid.refine(factor)
