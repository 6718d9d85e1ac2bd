"""Principal eigenvalues of -delta u'' - f u (periodic and Dirichlet), the
radius map R(x, f, delta) and the principal eigenvalue of the linearised
cooperative 2x2 operator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .grid import Interval, PeriodicGrid

DENSE_LIMIT = 2048

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]


class NumericalDegeneracyError(ArithmeticError):
    """The computed principal eigenvector is not strictly positive."""


class ConvergenceError(ArithmeticError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EigenResult:
    lam: float
    phi: np.ndarray
    residual: float


def _positive(v: np.ndarray) -> np.ndarray:
    v = v if v[np.argmax(np.abs(v))] > 0 else -v
    v = v / np.max(v)
    if np.any(v <= 0):
        raise NumericalDegeneracyError(
            f"principal eigenvector has {int(np.sum(v <= 0))} non-positive entries")
    return v


def periodic_operator(delta: float, f, grid: PeriodicGrid) -> sp.csr_matrix:
    """Sparse matrix of u -> -delta u'' - f u on the periodic grid."""
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n,))
    return (-grid.laplacian(delta) - sp.diags(f)).tocsr()


def principal_eigen_periodic(delta: float, f, grid: PeriodicGrid) -> EigenResult:
    """lambda_1,per(-delta d^2/dx^2 - f) of the discretised operator.

    Dense symmetric eigensolve up to ``DENSE_LIMIT`` nodes, shift-invert
    Lanczos beyond that.
    """
    op = periodic_operator(delta, f, grid)
    if grid.n <= DENSE_LIMIT:
        w, v = la.eigh(op.toarray(), subset_by_index=[0, 0])
        lam, vec = float(w[0]), v[:, 0]
    else:
        shift = float(-np.max(f)) - 1.0
        w, v = spla.eigsh(op, k=1, sigma=shift, which="LM")
        lam, vec = float(w[0]), v[:, 0]
    phi = _positive(vec)
    residual = float(np.max(np.abs(op @ phi - lam * phi)))
    return EigenResult(lam, phi, residual)


def _coefficient_values(f: Coefficient, x: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    return np.full(x.shape, float(f))


def principal_eigen_dirichlet(delta: float, f: Coefficient, interval: Interval) -> EigenResult:
    """Smallest eigenvalue of -delta u'' - f u on ``interval`` with zero ends.

    ``f`` is either a constant or a callable evaluated at the interval nodes.
    """
    if not delta > 0:
        raise ValueError(f"diffusivity must be positive, got {delta}")
    fx = _coefficient_values(f, interval.x)
    h2 = interval.dx**2
    main = 2.0 * delta / h2 - fx
    off = np.full(interval.m - 1, -delta / h2)
    w, v = la.eigh_tridiagonal(main, off, select="i", select_range=(0, 0))
    lam = float(w[0])
    phi = _positive(v[:, 0])
    padded = np.concatenate(([0.0], phi, [0.0]))
    applied = -delta * (padded[:-2] - 2 * phi + padded[2:]) / h2 - fx * phi
    return EigenResult(lam, phi, float(np.max(np.abs(applied - lam * phi))))


def dirichlet_eigenvalue_extrapolated(delta: float, f: Coefficient, center: float,
                                      radius: float, m: int) -> float:
    """Richardson-extrapolated Dirichlet eigenvalue from m and 2m+1 interior nodes."""
    coarse = principal_eigen_dirichlet(delta, f, Interval(center, radius, m)).lam
    fine = principal_eigen_dirichlet(delta, f, Interval(center, radius, 2 * m + 1)).lam
    return (4.0 * fine - coarse) / 3.0


def radius_constant(F: float, delta: float) -> float:
    """Closed form (pi/2) sqrt(delta/F) for a constant coefficient F > 0."""
    return 0.5 * math.pi * math.sqrt(delta / F)


def radius_R(x0: float, f: Coefficient, delta: float, *, period: float | None = None,
             nodes_per_unit: int = 64, tol: float = 1e-8) -> float:
    """Half-width R with lambda_1,Dir(-delta d^2/dx^2 - f, B(x0, R)) = 0.

    Returns ``math.inf`` when lambda_1,per(-delta d^2/dx^2 - f) >= 0, in
    which case no finite radius exists. A callable ``f`` must come with its
    ``period``.
    """
    if callable(f):
        if period is None:
            raise ValueError("a callable coefficient needs its period")
        probe = PeriodicGrid(period, max(256, int(math.ceil(nodes_per_unit * period))))
        values = _coefficient_values(f, probe.x)
        if principal_eigen_periodic(delta, values, probe).lam >= 0:
            return math.inf
        fmax, fmin = float(values.max()), float(values.min())
    else:
        fmax = fmin = float(f)
        if fmax <= 0:
            return math.inf

    lo = 0.9 * radius_constant(fmax, delta)
    hi = 1.1 * radius_constant(fmin, delta) if fmin > 0 else 2.0 * lo
    m = max(32, int(math.ceil(nodes_per_unit * 2.0 * hi)))

    def lam(R: float) -> float:
        return dirichlet_eigenvalue_extrapolated(delta, f, x0, R, m)

    for _ in range(60):
        if lam(hi) < 0:
            break
        hi *= 2.0
        m = max(m, int(math.ceil(nodes_per_unit * 2.0 * hi)))
    else:
        return math.inf
    while lam(lo) <= 0:
        lo *= 0.5
    R = brentq(lam, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(lam(R)) > tol:
        raise ConvergenceError(f"radius bracket did not reach |lambda| <= {tol}",
                               {"R": R, "lambda": lam(R)})
    return float(R)


@dataclass(frozen=True)
class CoopOperator:
    """Linearised cooperative operator

        A = [[u'' + a11 u,      b12 v],
             [b21 u,        d v'' + a22 v]]

    with a11 = g1[u1] - k u2, a22 = g2[u2] - alpha k u1, b12 = k u1 and
    b21 = alpha k u2 at a state (u1, u2).
    """

    grid: PeriodicGrid
    d: float
    a11: np.ndarray
    a22: np.ndarray
    b12: np.ndarray
    b21: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        for name in ("a11", "a22", "b12", "b21"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, arr)
        if np.any(self.b12 < 0) or np.any(self.b21 < 0):
            raise ValueError("cooperative operator needs non-negative couplings")

    @classmethod
    def at_state(cls, u1, u2, coeffs, params, grid: PeriodicGrid) -> "CoopOperator":
        k, alpha = params.k, params.alpha
        return cls(grid, params.d,
                   coeffs.g(1, u1) - k * u2,
                   coeffs.g(2, u2) - alpha * k * u1,
                   k * u1,
                   alpha * k * u2)

    def shifted(self, mu: float) -> "CoopOperator":
        """Operator A + mu^2 diag(1, d)."""
        return CoopOperator(self.grid, self.d, self.a11 + mu**2, self.a22 + self.d * mu**2,
                            self.b12, self.b21)

    def minus_matrix(self) -> sp.csr_matrix:
        """Sparse 2n x 2n matrix of -A."""
        g = self.grid
        top = [-g.laplacian(1.0) - sp.diags(self.a11), -sp.diags(self.b12)]
        bottom = [-sp.diags(self.b21), -g.laplacian(self.d) - sp.diags(self.a22)]
        return sp.bmat([top, bottom], format="csc")

    def apply(self, phi1, phi2) -> tuple[np.ndarray, np.ndarray]:
        """(-A)(phi1, phi2) evaluated directly on the grid."""
        from .grid import second_derivative_periodic as d2
        r1 = -d2(phi1, self.grid) - self.a11 * phi1 - self.b12 * phi2
        r2 = -d2(phi2, self.grid, self.d) - self.b21 * phi1 - self.a22 * phi2
        return r1, r2


@dataclass(frozen=True)
class SystemEigenResult:
    lam: float
    phi1: np.ndarray
    phi2: np.ndarray
    residual: float
    bounds: tuple[float, float]
    iterations: int


def principal_eigen_system(op: CoopOperator, *, rtol: float = 1e-12,
                           max_iter: int = 10_000) -> SystemEigenResult:
    """lambda_1,per(-A) by shifted inverse iteration.

    The shift always stays below the Collatz-Wielandt lower bound
    min_i (M x)_i / x_i, so M - shift is a nonsingular M-matrix with a
    positive inverse and the iterates stay positive. Iteration stops once
    the eigenvalue estimate changes by less than ``rtol`` (relative).
    """
    if not np.any(op.b12) or not np.any(op.b21):
        return _triangular_eigen(op)
    M = op.minus_matrix()
    N = M.shape[0]
    diag = M.diagonal()
    offsum = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    shift = float(np.min(diag - offsum)) - 1.0
    eye = sp.identity(N, format="csc")
    solve = spla.splu((M - shift * eye).tocsc()).solve

    x = np.ones(N)
    lam = prev = math.nan
    lo = hi = math.nan
    for it in range(1, max_iter + 1):
        y = solve(x)
        if np.any(y <= 0):
            raise NumericalDegeneracyError("inverse iterate lost positivity")
        prev, lam = lam, shift + float(x @ x) / float(x @ y)
        x = y / np.max(y)
        ratios = (M @ x) / x
        lo, hi = float(np.min(ratios)), float(np.max(ratios))
        scale = 1.0 + abs(lam)
        if abs(lam - prev) <= rtol * scale and hi - lo <= 1e-6 * scale:
            break
        target = lo - max(1e-6 * scale, 0.5 * (hi - lo))
        if target - shift > 0.1 * (lo - shift):
            shift = target
            solve = spla.splu((M - shift * eye).tocsc()).solve
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} iterations",
            {"lower": lo, "upper": hi, "shift": shift, "last_change": abs(lam - prev)})
    n = op.grid.n
    phi1, phi2 = x[:n].copy(), x[n:].copy()
    residual = float(np.max(np.abs(M @ x - lam * x)))
    return SystemEigenResult(lam, phi1, phi2, residual, (lo, hi), it)


def _triangular_eigen(op: CoopOperator) -> SystemEigenResult:
    # A vanishing coupling block makes -A block triangular: the spectrum is the
    # union of the diagonal blocks' spectra.
    first = principal_eigen_periodic(1.0, op.a11, op.grid)
    second = principal_eigen_periodic(op.d, op.a22, op.grid)
    n = op.grid.n
    upper = not np.any(op.b21)
    if first.lam <= second.lam:
        lam, lead, lead_block = first.lam, first.phi, 0
    else:
        lam, lead, lead_block = second.lam, second.phi, 1
    phi = [np.zeros(n), np.zeros(n)]
    phi[lead_block] = lead
    other = 1 - lead_block
    coupling = op.b12 if other == 0 else op.b21
    # the other component is slaved to the leading one when the coupling feeds it
    feeds = (upper and other == 0) or (not upper and other == 1)
    if feeds and np.any(coupling):
        block = periodic_operator(1.0 if other == 0 else op.d,
                                  op.a11 if other == 0 else op.a22, op.grid)
        rhs = coupling * lead
        phi[other] = spla.spsolve((block - lam * sp.identity(n)).tocsc(), rhs)
    x = np.concatenate(phi)
    x = x / np.max(x)
    M = op.minus_matrix()
    residual = float(np.max(np.abs(M @ x - lam * x)))
    return SystemEigenResult(lam, x[:n].copy(), x[n:].copy(), residual, (lam, lam), 0)
