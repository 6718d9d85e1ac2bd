"""Time integration of the competition system, the order-reversing transform
J and the time-t map Q_t of the resulting cooperative system."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import PeriodicGrid, second_derivative_periodic
from .model import Coefficients, ReactionSpec, SystemParams
from .stationary import StatePair

CLAMP_FLOOR = 1e-14
CLAMP_WARN_FRACTION = 1e-3


class InstabilityWarning(RuntimeWarning):
    """Too many nodes needed clamping in a single step."""


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    scheme: str = "imex"
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in ("imex", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[StatePair] = field(default_factory=list)
    clamps: int = 0

    def append(self, t: float, state: StatePair) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(t)
        self.states.append(state)


def stability_bound(coeffs: Coefficients, params: SystemParams, ext_max: float) -> float:
    """Largest dt keeping the explicit reaction part monotone:
    0.5 / (M + k max(u~) max(1, alpha))."""
    M = float(max(coeffs.mu1.max(), coeffs.mu2.max()))
    return 0.5 / (M + params.k * ext_max * max(1.0, params.alpha))


def default_dt(coeffs: Coefficients, params: SystemParams, ext_max: float) -> float:
    return min(1e-3, 0.5 * stability_bound(coeffs, params, ext_max))


class Stepper:
    """IMEX (backward Euler diffusion, explicit Heun reaction) or fully explicit
    forward Euler stepping of

        u1_t = u1'' + u1 f1[u1] - k u1 u2
        u2_t = d u2'' + u2 f2[u2] - alpha k u1 u2

    on a periodic grid. ``pinned`` optionally fixes a mask of nodes to given
    values (Dirichlet zones); the implicit solve then treats them as known.
    """

    def __init__(self, params: SystemParams, coeffs: Coefficients, grid: PeriodicGrid,
                 dt: float, scheme: str = "imex",
                 pinned: tuple[np.ndarray, StatePair] | None = None):
        self.params, self.coeffs, self.grid = params, coeffs, grid
        self.dt, self.scheme = dt, scheme
        self.clamps = 0
        self.pinned = pinned
        if scheme == "explicit":
            limit = grid.dx**2 / (2.0 * max(1.0, params.d))
            if dt > limit:
                raise ValueError(f"explicit diffusion needs dt <= {limit:.3g}, got {dt}")
            self._solves = None
        else:
            self._solves = tuple(self._factor(delta) for delta in (1.0, params.d))

    def _factor(self, delta: float):
        n = self.grid.n
        mat = (sp.identity(n, format="csr") - self.dt * self.grid.laplacian(delta)).tolil()
        if self.pinned is not None:
            for j in np.flatnonzero(self.pinned[0]):
                mat.rows[j] = [j]
                mat.data[j] = [1.0]
        return spla.splu(mat.tocsc()).solve

    def reaction(self, state: StatePair) -> tuple[np.ndarray, np.ndarray]:
        c, k, alpha = self.coeffs, self.params.k, self.params.alpha
        u1, u2 = state.u1, state.u2
        comp = k * u1 * u2
        return u1 * c.f(1, u1) - comp, u2 * c.f(2, u2) - alpha * comp

    def _clamp(self, u: np.ndarray) -> np.ndarray:
        neg = u < 0
        if np.any(neg):
            self.clamps_last += int(np.sum(u < -CLAMP_FLOOR))
            u = np.where(neg, 0.0, u)
        return u

    def _implicit(self, base: StatePair, r1: np.ndarray, r2: np.ndarray) -> StatePair:
        dt = self.dt
        rhs1, rhs2 = base.u1 + dt * r1, base.u2 + dt * r2
        if self.pinned is not None:
            mask, values = self.pinned
            rhs1 = np.where(mask, values.u1, rhs1)
            rhs2 = np.where(mask, values.u2, rhs2)
        return StatePair(self._solves[0](rhs1), self._solves[1](rhs2))

    def step(self, state: StatePair) -> StatePair:
        r1, r2 = self.reaction(state)
        dt = self.dt
        if self._solves is None:
            u1 = state.u1 + dt * (second_derivative_periodic(state.u1, self.grid) + r1)
            u2 = state.u2 + dt * (second_derivative_periodic(state.u2, self.grid, self.params.d) + r2)
        else:
            # Heun predictor-corrector on the reaction around backward-Euler
            # diffusion; discrete steady states remain exact fixed points
            pred = self._implicit(state, r1, r2)
            p1, p2 = self.reaction(pred)
            corr = self._implicit(state, 0.5 * (r1 + p1), 0.5 * (r2 + p2))
            u1, u2 = corr.u1, corr.u2
        if self.pinned is not None:
            mask, values = self.pinned
            u1 = np.where(mask, values.u1, u1)
            u2 = np.where(mask, values.u2, u2)
        self.clamps_last = 0
        u1, u2 = self._clamp(u1), self._clamp(u2)
        self.clamps += self.clamps_last
        if self.clamps_last > CLAMP_WARN_FRACTION * 2 * self.grid.n:
            warnings.warn(f"{self.clamps_last} nodes clamped in one step", InstabilityWarning)
        return StatePair(u1, u2)


def step(state: StatePair, params: SystemParams, spec: ReactionSpec, dt: float, *,
         grid: PeriodicGrid | None = None, scheme: str = "imex") -> StatePair:
    """One step; builds a throwaway Stepper (use Stepper directly in loops)."""
    grid = grid or PeriodicGrid(params.L, state.u1.size)
    return Stepper(params, spec.sample(grid), grid, dt, scheme).step(state)


def integrate(initial: StatePair, stepper: Stepper, t_end: float, *,
              record_every: int | None = 1, t0: float = 0.0) -> tuple[StatePair, Trajectory]:
    """Advance t_end/dt steps; ``t_end`` must be a whole number of steps.

    Records every ``record_every`` steps (None: endpoints only).
    """
    n_steps = max(1, int(math.ceil(t_end / stepper.dt - 1e-9)))
    if not math.isclose(n_steps * stepper.dt, t_end, rel_tol=1e-12):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={stepper.dt}")
    traj = Trajectory()
    traj.append(t0, initial)
    state = initial
    for j in range(1, n_steps + 1):
        state = stepper.step(state)
        if (record_every and j % record_every == 0) or j == n_steps:
            traj.append(t0 + j * stepper.dt, state)
    traj.clamps = stepper.clamps
    return state, traj


def poincare_map(initial: StatePair, t: float, params: SystemParams, spec: ReactionSpec,
                 config: EvolutionConfig, *, grid: PeriodicGrid | None = None) -> StatePair:
    """Q_t in original coordinates: the state reached at time ``t``.

    ``t`` must be a whole number of steps of ``config.dt``.
    """
    grid = grid or PeriodicGrid(params.L, initial.u1.size)
    stepper = Stepper(params, spec.sample(grid), grid, config.dt, config.scheme)
    final, _ = integrate(initial, stepper, t, record_every=None)
    return final


def transform_J(u2: np.ndarray, ext2: np.ndarray) -> np.ndarray:
    """v2 = u2~ - u2; its own inverse."""
    return ext2 - u2


inverse_J = transform_J


def cooperative_leq(a: StatePair, b: StatePair, ext2: np.ndarray, tol: float = 0.0) -> bool:
    """a <= b after the transform: a.u1 <= b.u1 and a.v2 <= b.v2."""
    return bool(np.all(a.u1 <= b.u1 + tol)
                and np.all(transform_J(a.u2, ext2) <= transform_J(b.u2, ext2) + tol))


def comparison_test(a: StatePair, b: StatePair, t: float, params: SystemParams,
                    spec: ReactionSpec, config: EvolutionConfig, ext2: np.ndarray, *,
                    grid: PeriodicGrid | None = None, tol: float = 1e-12) -> bool:
    """Whether Q_t(a) << Q_t(b) strictly at every node, given a <= b, a != b."""
    if not cooperative_leq(a, b, ext2):
        raise ValueError("comparison_test needs a <= b in the cooperative order")
    if a.distance(b) == 0:
        raise ValueError("comparison_test needs a != b")
    qa = poincare_map(a, t, params, spec, config, grid=grid)
    qb = poincare_map(b, t, params, spec, config, grid=grid)
    gap1 = qb.u1 - qa.u1
    gap2 = transform_J(qb.u2, ext2) - transform_J(qa.u2, ext2)
    return bool(np.all(gap1 > tol) and np.all(gap2 > tol))
