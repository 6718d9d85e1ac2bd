"""Extinction states, periodic coexistence states and their stability."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._newton import damped_newton
from .eigen import CoopOperator, principal_eigen_periodic, principal_eigen_system
from .grid import PeriodicGrid
from .model import DEFAULT_N, Coefficients, ReactionSpec, SystemParams, audit_grid

log = logging.getLogger(__name__)

INTERIOR_TOL = 1e-10
DEDUP_TOL = 1e-6


class SolverError(ArithmeticError):
    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class StatePair:
    u1: np.ndarray
    u2: np.ndarray

    def sup(self) -> float:
        return float(max(np.max(np.abs(self.u1)), np.max(np.abs(self.u2))))

    def distance(self, other: "StatePair") -> float:
        return float(max(np.max(np.abs(self.u1 - other.u1)), np.max(np.abs(self.u2 - other.u2))))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])

    @classmethod
    def from_stacked(cls, x: np.ndarray) -> "StatePair":
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())


@dataclass
class MaxPrincipleAudit:
    first: bool
    second: bool
    third: bool
    fourth: bool
    values: dict = field(default_factory=dict)

    @property
    def all(self) -> bool:
        return self.first and self.second and self.third and self.fourth


@dataclass
class StationaryReport:
    state: StatePair
    residual_inf: float
    lambda_principal: float
    classification: str
    k: float
    audit: MaxPrincipleAudit | None = None
    certificate: tuple[float, bool] | None = None

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "residual_inf": self.residual_inf,
            "lambda_principal": self.lambda_principal,
            "classification": self.classification,
            "sup_u1": float(np.max(self.state.u1)),
            "sup_u2": float(np.max(self.state.u2)),
            "min_u1": float(np.min(self.state.u1)),
            "min_u2": float(np.min(self.state.u2)),
        }
        if self.audit is not None:
            out["max_principle"] = [self.audit.first, self.audit.second,
                                    self.audit.third, self.audit.fourth]
        if self.certificate is not None:
            out["certificate_lambda"], out["certificate_ok"] = self.certificate
        return out


def default_grid(params: SystemParams, n: int = DEFAULT_N) -> PeriodicGrid:
    return PeriodicGrid(params.L, n)


# ----------------------------------------------------------------- extinction

def _logistic_residual(delta, mu, nu, lap):
    def residual(u):
        return -(lap @ u) - u * (mu - nu * u)

    def jacobian(u):
        return -lap - sp.diags(mu - 2.0 * nu * u)
    return residual, jacobian


def _march_to_steady(delta, mu, nu, grid, u0, *, dt=0.05, t_max=400.0):
    lap = grid.laplacian(delta)
    solve = spla.splu((sp.identity(grid.n) - dt * lap).tocsc()).solve
    u = u0.copy()
    for _ in range(int(t_max / dt)):
        u_new = solve(u + dt * u * (mu - nu * u))
        if np.max(np.abs(u_new - u)) < 1e-12 * dt:
            return u_new
        u = u_new
    return u


def solve_logistic_steady(delta: float, i: int, spec: ReactionSpec, grid: PeriodicGrid,
                          *, tol: float = 1e-10) -> np.ndarray:
    """Positive periodic solution of -delta u'' = u f_i(u, x).

    Damped Newton from mu_i/nu_i; falls back to implicit time marching when
    Newton leaves the positive cone or stalls.
    """
    coeffs = spec.sample(grid)
    mu, nu = coeffs.mu(i), coeffs.nu(i)
    lap = grid.laplacian(delta)
    residual, jacobian = _logistic_residual(delta, mu, nu, lap)
    positive = lambda u: bool(np.all(u > 0))  # noqa: E731
    # the h^-2 stencil puts a round-off floor under the residual on fine grids
    floor = 2 * np.finfo(float).eps * 4 * delta / grid.dx ** 2
    tol_at = lambda u: max(tol, floor * np.max(np.abs(u)))  # noqa: E731
    out = damped_newton(residual, jacobian, mu / nu, tol=tol_at, admissible=positive)
    if out.converged:
        return out.x
    log.info("logistic Newton stalled at residual %.3g; marching in time", out.residual)
    u = _march_to_steady(delta, mu, nu, grid, mu / nu)
    out2 = damped_newton(residual, jacobian, u, tol=tol_at, admissible=positive)
    if not out2.converged:
        raise SolverError(f"steady logistic solve failed (residual {out2.residual:.3g})",
                          out.trace + out2.trace)
    return out2.x


def extinction_states(spec: ReactionSpec, params: SystemParams,
                      grid: PeriodicGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    grid = grid or default_grid(params)
    return (solve_logistic_steady(1.0, 1, spec, grid),
            solve_logistic_steady(params.d, 2, spec, grid))


# ---------------------------------------------------------------- coexistence

def stationary_residual(state: StatePair, coeffs: Coefficients, params: SystemParams,
                        grid: PeriodicGrid) -> tuple[np.ndarray, np.ndarray]:
    from .grid import second_derivative_periodic as d2
    u1, u2 = state.u1, state.u2
    k, alpha = params.k, params.alpha
    r1 = -d2(u1, grid) - u1 * coeffs.f(1, u1) + k * u1 * u2
    r2 = -d2(u2, grid, params.d) - u2 * coeffs.f(2, u2) + alpha * k * u1 * u2
    return r1, r2


def _system_functions(coeffs: Coefficients, params: SystemParams, grid: PeriodicGrid):
    lap1, lap2 = grid.laplacian(1.0), grid.laplacian(params.d)
    k, alpha, n = params.k, params.alpha, grid.n

    def residual(x):
        u1, u2 = x[:n], x[n:]
        return np.concatenate([
            -(lap1 @ u1) - u1 * coeffs.f(1, u1) + k * u1 * u2,
            -(lap2 @ u2) - u2 * coeffs.f(2, u2) + alpha * k * u1 * u2,
        ])

    def jacobian(x):
        u1, u2 = x[:n], x[n:]
        return sp.bmat([
            [-lap1 - sp.diags(coeffs.g(1, u1) - k * u2), sp.diags(k * u1)],
            [sp.diags(alpha * k * u2), -lap2 - sp.diags(coeffs.g(2, u2) - alpha * k * u1)],
        ], format="csc")
    return residual, jacobian


def constant_state_guess(coeffs: Coefficients, params: SystemParams,
                         ext: tuple[np.ndarray, np.ndarray]) -> StatePair:
    """Coexistence state of the space-averaged algebraic system, if positive."""
    m1, m2 = coeffs.mu1.mean(), coeffs.mu2.mean()
    n1, n2 = coeffs.nu1.mean(), coeffs.nu2.mean()
    k, alpha = params.k, params.alpha
    det = n1 * n2 - alpha * k * k
    n = coeffs.mu1.size
    if det != 0:
        u1 = (m1 * n2 - k * m2) / det
        u2 = (m2 * n1 - alpha * k * m1) / det
        if u1 > 0 and u2 > 0:
            return StatePair(np.full(n, u1), np.full(n, u2))
    return StatePair(0.5 * ext[0], 0.5 * ext[1])


def default_seed_bank(ext: tuple[np.ndarray, np.ndarray], coeffs: Coefficients,
                      params: SystemParams, *, n_random: int = 16, seed: int = 0) -> list[StatePair]:
    """Blends t(u1~, 0) + (1-t)(0, u2~), the averaged constant state and
    smooth pseudo-random positive fields below the extinction states."""
    e1, e2 = ext
    seeds = [StatePair(t * e1, (1 - t) * e2) for t in np.round(np.arange(0.1, 0.95, 0.1), 1)]
    seeds.append(constant_state_guess(coeffs, params, ext))
    rng = np.random.default_rng(seed)
    n = e1.size
    x = np.arange(n) / n
    for _ in range(n_random):
        fields = []
        for e in ext:
            s = rng.normal(size=3) @ np.array([np.ones(n), np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)])
            scale = 10.0 ** rng.uniform(-np.log10(max(params.k, 1.0)) - 0.5, 0.0)
            fields.append(e * scale / (1.0 + np.exp(-s)))
        seeds.append(StatePair(*fields))
    return seeds


def _interior(state: StatePair, ext) -> bool:
    # the upper bound is not strict: at k = 0 the only interior state is (u1~, u2~)
    slack = [1e-9 * (1.0 + np.max(e)) for e in ext]
    return (np.min(state.u1) > INTERIOR_TOL and np.min(state.u2) > INTERIOR_TOL
            and np.all(state.u1 <= ext[0] + slack[0]) and np.all(state.u2 <= ext[1] + slack[1]))


def find_coexistence_states(params: SystemParams, spec: ReactionSpec,
                            seeds: list[StatePair] | None = None, *,
                            grid: PeriodicGrid | None = None,
                            ext: tuple[np.ndarray, np.ndarray] | None = None,
                            seed: int = 0) -> list[StationaryReport]:
    """Damped Newton from every seed; keep strictly interior, distinct solutions.

    Each kept state is classified through lambda_1,per(-A) and audited
    against the max-principle bounds and the explicit instability
    certificate.
    """
    grid = grid or default_grid(params)
    coeffs = spec.sample(grid)
    ext = ext if ext is not None else extinction_states(spec, params, grid)
    if seeds is None:
        seeds = default_seed_bank(ext, coeffs, params, seed=seed)
    residual, jacobian = _system_functions(coeffs, params, grid)
    # relative to the state's size so that near-zero spurious roots are rejected
    def tol(x):
        return 1e-10 * (1.0 + params.k) * min(1.0, float(np.max(np.abs(x))))
    found: list[StatePair] = []
    for s in seeds:
        out = damped_newton(residual, jacobian, s.stacked(), tol=tol, max_iter=200)
        if not out.converged:
            continue
        state = StatePair.from_stacked(out.x)
        if not _interior(state, ext):
            continue
        if any(state.distance(other) < DEDUP_TOL for other in found):
            continue
        found.append(state)

    reports = []
    for state in found:
        r1, r2 = stationary_residual(state, coeffs, params, grid)
        eig = principal_eigen_system(CoopOperator.at_state(state.u1, state.u2, coeffs, params, grid))
        reports.append(StationaryReport(
            state=state,
            residual_inf=float(max(np.max(np.abs(r1)), np.max(np.abs(r2)))),
            lambda_principal=eig.lam,
            classification="unstable" if eig.lam < 0 else "stable",
            k=params.k,
            audit=audit_max_principle(state, params, spec, grid=grid),
            certificate=instability_certificate(state, params, spec, grid=grid),
        ))
    reports.sort(key=lambda r: (round(r.state.sup(), 12), int(np.argmax(r.state.u1))))
    return reports


def audit_max_principle(state: StatePair, params: SystemParams, spec: ReactionSpec, *,
                        grid: PeriodicGrid | None = None, rtol: float = 1e-9) -> MaxPrincipleAudit:
    """The four bounds satisfied by every periodic coexistence state:

        k min u2        <= max_x f1(max u1, x)
        alpha k min u1  <= max_x f2(max u2, x)
        min_x f1(min u1, x) <= k max u2
        min_x f2(min u2, x) <= alpha k max u1

    Each comparison allows a relative slack ``rtol`` for discretisation
    round-off, so equality cases pass.
    """
    grid = grid or default_grid(params, state.u1.size)
    c = spec.sample(grid)
    k, alpha = params.k, params.alpha
    u1, u2 = state.u1, state.u2
    pairs = {
        "first": (k * u2.min(), c.f(1, u1.max()).max()),
        "second": (alpha * k * u1.min(), c.f(2, u2.max()).max()),
        "third": (c.f(1, u1.min()).min(), k * u2.max()),
        "fourth": (c.f(2, u2.min()).min(), alpha * k * u1.max()),
    }
    verdicts = {name: bool(lhs <= rhs + rtol * (1.0 + abs(lhs) + abs(rhs)))
                for name, (lhs, rhs) in pairs.items()}
    values = {name: (float(lhs), float(rhs)) for name, (lhs, rhs) in pairs.items()}
    return MaxPrincipleAudit(values=values, **verdicts)


def certificate_constant(spec: ReactionSpec, n: int = DEFAULT_N) -> float:
    """Bound R on -d/du f_i over the audit grid; equals max(nu1, nu2) here."""
    c = spec.sample(audit_grid(spec, n))
    return float(max(c.nu1.max(), c.nu2.max()))


def instability_certificate(state: StatePair, params: SystemParams, spec: ReactionSpec, *,
                            grid: PeriodicGrid | None = None) -> tuple[float, bool]:
    """Explicit test pair (lambda, (u1, u2)) with (-A - lambda)(u1, u2) <= 0.

    lambda = -min{min(k u2 - R u1), min(alpha k u1 - R u2)}; a negative value
    passing the nodewise inequality proves lambda_1,per(-A) < 0.
    """
    grid = grid or default_grid(params, state.u1.size)
    coeffs = spec.sample(grid)
    k, alpha = params.k, params.alpha
    u1, u2 = state.u1, state.u2
    R = certificate_constant(spec)
    lam = -min(float(np.min(k * u2 - R * u1)), float(np.min(alpha * k * u1 - R * u2)))
    op = CoopOperator.at_state(u1, u2, coeffs, params, grid)
    a1, a2 = op.apply(u1, u2)
    r1, r2 = stationary_residual(state, coeffs, params, grid)
    slack = 10.0 * float(max(np.max(np.abs(r1)), np.max(np.abs(r2)))) + 1e-14
    ok = lam < 0 and bool(np.all(a1 - lam * u1 <= slack) and np.all(a2 - lam * u2 <= slack))
    return lam, ok


# ------------------------------------------------------------------ stability

def extinction_stability(params: SystemParams, spec: ReactionSpec, *,
                         grid: PeriodicGrid | None = None,
                         ext: tuple[np.ndarray, np.ndarray] | None = None
                         ) -> tuple[StationaryReport, StationaryReport]:
    """lambda_1,per(-A) at (u1~, 0) and (0, u2~) from their triangular structure."""
    grid = grid or default_grid(params)
    coeffs = spec.sample(grid)
    e1, e2 = ext if ext is not None else extinction_states(spec, params, grid)
    k, alpha, d = params.k, params.alpha, params.d
    zero = np.zeros(grid.n)

    lam1 = min(principal_eigen_periodic(1.0, coeffs.g(1, e1), grid).lam,
               principal_eigen_periodic(d, coeffs.f(2, 0.0) - alpha * k * e1, grid).lam)
    lam2 = min(principal_eigen_periodic(1.0, coeffs.f(1, 0.0) - k * e2, grid).lam,
               principal_eigen_periodic(d, coeffs.g(2, e2), grid).lam)
    reports = []
    for state, lam in ((StatePair(e1, zero), lam1), (StatePair(zero, e2), lam2)):
        r1, r2 = stationary_residual(state, coeffs, params, grid)
        reports.append(StationaryReport(
            state=state,
            residual_inf=float(max(np.max(np.abs(r1)), np.max(np.abs(r2)))),
            lambda_principal=float(lam),
            classification="stable" if lam > 0 else "unstable",
            k=k,
        ))
    return reports[0], reports[1]
