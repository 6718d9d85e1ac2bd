"""Front-like runs on long multi-period domains: speed measurement, pulsating
relation, profile reconstruction and the counter-propagation bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigen import CoopOperator, principal_eigen_system
from .evolution import Stepper, Trajectory, integrate
from .grid import PeriodicGrid
from .model import ReactionSpec, SystemParams
from .stationary import StatePair, StationaryReport

MIN_PERIODS = 50
PIN_CELLS = 2
TRANSIENT_CELLS = 10
DISCARD_FRACTION = 0.3
MIN_R2 = 0.999


@dataclass(frozen=True)
class FrontDomain:
    """``periods`` copies of the cell, ``n_per_period`` nodes each, with the
    outer ``PIN_CELLS`` cells on each side pinned to (u1~, 0) on the left and
    (0, u2~) on the right."""

    periods: int
    n_per_period: int
    L: float

    def __post_init__(self):
        if self.periods < MIN_PERIODS:
            raise ValueError(f"front domain needs >= {MIN_PERIODS} periods, got {self.periods}")

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.periods * self.L, self.periods * self.n_per_period)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def length(self) -> float:
        return self.periods * self.L

    def cell_index(self) -> np.ndarray:
        return np.arange(self.periods * self.n_per_period) // self.n_per_period

    def left_pin(self) -> np.ndarray:
        return self.cell_index() < PIN_CELLS

    def right_pin(self) -> np.ndarray:
        return self.cell_index() >= self.periods - PIN_CELLS

    def free(self) -> np.ndarray:
        return ~(self.left_pin() | self.right_pin())

    def tile(self, cell_values: np.ndarray) -> np.ndarray:
        return np.tile(cell_values, self.periods)


def sigmoid(s):
    """Logistic 1/(1 + e^-s); equals 1/2 at s = 0."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(s, dtype=float)))


def front_initial_data(domain: FrontDomain, ext: tuple[np.ndarray, np.ndarray],
                       species: str = "both") -> tuple[StatePair, tuple[np.ndarray, StatePair]]:
    """u1 = u1~ sigma(-s), u2 = u2~ sigma(s), s = (x - mid)/L, with exact pins.

    ``ext`` holds the extinction states on one cell. ``species`` is "both",
    "1" or "2"; a single species run keeps the other one identically zero.
    Returns the initial state and the (mask, values) pin description.
    """
    e1, e2 = domain.tile(ext[0]), domain.tile(ext[1])
    if species == "1":
        e2 = np.zeros_like(e2)
    elif species == "2":
        e1 = np.zeros_like(e1)
    elif species != "both":
        raise ValueError(f"species must be 'both', '1' or '2', got {species!r}")
    s = (domain.x - 0.5 * domain.length) / domain.L
    u1, u2 = e1 * sigmoid(-s), e2 * sigmoid(s)
    left, right = domain.left_pin(), domain.right_pin()
    pins = StatePair(np.where(left, e1, 0.0), np.where(right, e2, 0.0))
    mask = left | right
    u1 = np.where(mask, pins.u1, u1)
    u2 = np.where(mask, pins.u2, u2)
    return StatePair(u1, u2), (mask, pins)


def run_front(domain: FrontDomain, spec: ReactionSpec, params: SystemParams,
              ext: tuple[np.ndarray, np.ndarray], *, t_end: float, dt: float,
              record_every: int = 10, species: str = "both") -> Trajectory:
    initial, pins = front_initial_data(domain, ext, species)
    grid = domain.grid
    stepper = Stepper(params, spec.sample(grid), grid, dt, pinned=pins)
    _, traj = integrate(initial, stepper, t_end, record_every=record_every)
    return traj


@dataclass
class FrontResult:
    c: float
    fit_r2: float
    pulsation_residual: float | None
    status: str
    c_stderr: float
    amplitude: float
    times: np.ndarray
    positions: np.ndarray
    profile: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_dict(self) -> dict:
        return {
            "c": self.c, "c_stderr": self.c_stderr, "fit_r2": self.fit_r2,
            "pulsation_residual": self.pulsation_residual,
            "pulsation_residual_relative": (None if self.pulsation_residual is None
                                            else self.pulsation_residual / self.amplitude),
            "status": self.status, "amplitude": self.amplitude, "notes": list(self.notes),
        }


def level_position(u: np.ndarray, ref: np.ndarray, x: np.ndarray, level: float,
                   free: np.ndarray, side: str) -> float:
    """Rightmost ("right") or leftmost ("left") crossing of u = level * ref
    inside the free zone, linearly interpolated. NaN if there is none."""
    r = np.where(free, u / np.where(ref > 0, ref, 1.0), np.nan)
    above = r >= level
    cross = np.flatnonzero(above[:-1] != above[1:])
    cross = cross[np.isfinite(r[cross]) & np.isfinite(r[cross + 1])]
    if cross.size == 0:
        return math.nan
    j = cross[-1] if side == "right" else cross[0]
    t = (r[j] - level) / (r[j] - r[j + 1])
    return float(x[j] + t * (x[j + 1] - x[j]))


def _interpolate_snapshot(traj: Trajectory, t: float) -> StatePair:
    times = np.asarray(traj.times)
    j = int(np.searchsorted(times, t))
    j = min(max(j, 1), len(times) - 1)
    t0, t1 = times[j - 1], times[j]
    w = (t - t0) / (t1 - t0)
    a, b = traj.states[j - 1], traj.states[j]
    return StatePair((1 - w) * a.u1 + w * b.u1, (1 - w) * a.u2 + w * b.u2)


def measure_speed(traj: Trajectory, domain: FrontDomain, ext: tuple[np.ndarray, np.ndarray],
                  level: float = 0.5, species: int = 1) -> FrontResult:
    """Level-set speed of the front.

    Tracks the rightmost crossing of u1 = level * u1~(x) (species 1) or the
    leftmost crossing of u2 = level * u2~(x) (species 2), drops the first 30%
    of the run and fits a line. Status is "accepted", "rejected" (poor fit),
    "inconclusive" (never left the transient zone) or "zero_speed" (|c|
    within ten standard errors of zero; the pulsation check is skipped).
    """
    x, free = domain.x, domain.free()
    ref = domain.tile(ext[species - 1])
    side = "right" if species == 1 else "left"
    times = np.asarray(traj.times)
    pos = np.array([level_position(s.u1 if species == 1 else s.u2, ref, x, level, free, side)
                    for s in traj.states])
    amplitude = float(max(np.max(ext[0]), np.max(ext[1])))
    keep = (times >= DISCARD_FRACTION * times[-1]) & np.isfinite(pos)
    tt, pp = times[keep], pos[keep]
    if tt.size < 3:
        return FrontResult(math.nan, math.nan, None, "inconclusive", math.nan, amplitude,
                           times, pos, notes=["level set lost"])
    slope, intercept = np.polyfit(tt, pp, 1)
    fitted = slope * tt + intercept
    ss_res = float(np.sum((pp - fitted) ** 2))
    ss_tot = float(np.sum((pp - pp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    stderr = math.sqrt(ss_res / max(tt.size - 2, 1) / np.sum((tt - tt.mean()) ** 2))
    c = float(slope)
    # resolution floor: positions are interpolated between nodes
    noise = max(stderr, 1e-3 * domain.grid.dx / (tt[-1] - tt[0]))
    travelled = np.nanmax(np.abs(pos - pos[0]))
    notes = []
    if abs(c) < 10 * noise:
        status = "zero_speed"
        notes.append("speed indistinguishable from zero; pulsation check skipped")
    elif travelled < TRANSIENT_CELLS * domain.L:
        status = "inconclusive"
        notes.append(f"level set moved {travelled:.3g} < {TRANSIENT_CELLS} periods")
    elif not r2 >= MIN_R2:
        status = "rejected"
        notes.append(f"fit r2 {r2:.6f} < {MIN_R2}")
    else:
        status = "accepted"
    result = FrontResult(c, r2, None, status, stderr, amplitude, times, pos, notes=notes)
    if status in ("accepted", "rejected"):
        result.pulsation_residual = pulsation_residual(traj, domain, c)
        result.profile = reconstruct_profile(traj, domain, ext, c)
    return result


def pulsation_residual(traj: Trajectory, domain: FrontDomain, c: float) -> float:
    """sup |u(t + L/|c|, x) - u(t, x - sign(c) L)| over the free zone, at the
    latest t that fits in the run. The later snapshot is linearly
    interpolated in time."""
    dt_shift = domain.L / abs(c)
    t_last = traj.times[-1]
    t0 = t_last - dt_shift
    if t0 < DISCARD_FRACTION * t_last:
        return math.nan
    j = int(np.argmin(np.abs(np.asarray(traj.times) - t0)))
    t0 = traj.times[j]
    early, late = traj.states[j], _interpolate_snapshot(traj, t0 + dt_shift)
    shift = domain.n_per_period * (1 if c > 0 else -1)
    region = domain.free() & np.roll(domain.free(), shift)
    diff = max(np.max(np.abs(late.u1 - np.roll(early.u1, shift))[region]),
               np.max(np.abs(late.u2 - np.roll(early.u2, shift))[region]))
    return float(diff)


def reconstruct_profile(traj: Trajectory, domain: FrontDomain,
                        ext: tuple[np.ndarray, np.ndarray], c: float) -> dict:
    """Samples of (phi1, phi2)(xi, x) from the last L/|c| of the run.

    xi = x - X0 - c (t - t_end), where X0 is the crossing of u1 = max(u1~)/2
    along the lattice x = 0 mod L in the final snapshot (so xi = 0 there).
    """
    x, free = domain.x, domain.free()
    final = traj.states[-1]
    lattice = (np.arange(domain.grid.n) % domain.n_per_period) == 0
    half = 0.5 * float(np.max(ext[0]))
    xs, vals = x[lattice & free], final.u1[lattice & free]
    above = vals >= half
    cross = np.flatnonzero(above[:-1] != above[1:])
    if cross.size:
        j = cross[-1]
        X0 = float(xs[j] + (vals[j] - half) / (vals[j] - vals[j + 1]) * (xs[j + 1] - xs[j]))
    else:
        X0 = 0.5 * domain.length
    t_end = traj.times[-1]
    span = domain.L / abs(c) if c else 0.0
    xi, xc, p1, p2 = [], [], [], []
    for t, s in zip(traj.times, traj.states):
        if t < t_end - span:
            continue
        xi.append(x[free] - X0 - c * (t - t_end))
        xc.append(np.mod(x[free], domain.L))
        p1.append(s.u1[free])
        p2.append(s.u2[free])
    return {"xi": np.concatenate(xi), "x": np.concatenate(xc),
            "phi1": np.concatenate(p1), "phi2": np.concatenate(p2), "X0": X0}


@dataclass
class FrontVerification:
    monotone_phi1: bool
    monotone_phi2: bool
    periodic: bool | None
    limits: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.monotone_phi1 and self.monotone_phi2 and self.limits and self.periodic is not False


def verify_front(result: FrontResult, traj: Trajectory, domain: FrontDomain,
                 ext: tuple[np.ndarray, np.ndarray], *, mono_tol: float = 1e-3,
                 limit_tol: float = 0.02, periodic_tol: float = 1e-2) -> FrontVerification:
    """Checks on the final snapshot, read along each lattice x_j + mL:

    - u1 non-increasing and u2 non-decreasing in m (monotonicity in xi),
    - the pulsating relation (periodicity of the profile in x),
    - the first and last free cells match (u1~, 0) and (0, u2~).

    Tolerances are relative to max(|u1~|, |u2~|).
    """
    amp = result.amplitude
    final = traj.states[-1]
    N = domain.n_per_period
    u1 = final.u1.reshape(domain.periods, N)
    u2 = final.u2.reshape(domain.periods, N)
    rise1 = float(np.max(np.diff(u1, axis=0)))
    drop2 = float(np.max(-np.diff(u2, axis=0)))
    first, last = PIN_CELLS, domain.periods - PIN_CELLS - 1
    left_err = max(np.max(np.abs(u1[first] - ext[0])), np.max(np.abs(u2[first])))
    right_err = max(np.max(np.abs(u1[last])), np.max(np.abs(u2[last] - ext[1])))
    periodic = None
    if result.pulsation_residual is not None and math.isfinite(result.pulsation_residual):
        periodic = result.pulsation_residual <= periodic_tol * amp
    return FrontVerification(
        monotone_phi1=rise1 <= mono_tol * amp,
        monotone_phi2=drop2 <= mono_tol * amp,
        periodic=periodic,
        limits=max(left_err, right_err) <= limit_tol * amp,
        details={"max_rise_phi1": rise1, "max_drop_phi2": drop2,
                 "left_limit_error": float(left_err), "right_limit_error": float(right_err)},
    )


# ------------------------------------------------------- counter-propagation

def _golden_min(fun, lo: float, hi: float, *, tol: float = 1e-10, max_iter: int = 200):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def spreading_expression(op: CoopOperator, mu: float) -> float:
    """-lambda_1,per(-mu^2 diag(1, d) - A) / mu."""
    return -principal_eigen_system(op.shifted(mu)).lam / mu


def minimize_spreading_expression(op: CoopOperator, *, mu_range=(1e-3, 1e3)) -> tuple[float, float]:
    """Golden-section search in log(mu); returns (minimiser, minimum)."""
    t, val = _golden_min(lambda s: spreading_expression(op, math.exp(s)),
                         math.log(mu_range[0]), math.log(mu_range[1]), tol=1e-9)
    return math.exp(t), val


@dataclass(frozen=True)
class CounterPropagation:
    bound: float
    direct: float
    mu_star: float
    lam: float

    @property
    def consistent(self) -> bool:
        return self.direct >= self.bound - 1e-6


def closed_form_bound(lam: float, d: float) -> float:
    """2 sqrt(min(1, d) |lambda|)."""
    return 2.0 * math.sqrt(min(1.0, d) * abs(lam))


def counter_propagation_bound(report: StationaryReport, params: SystemParams,
                              spec: ReactionSpec, *, grid: PeriodicGrid | None = None
                              ) -> CounterPropagation:
    """Lower bound 2 sqrt(min(1, d) |lambda_1,per(-A)|) on both one-sided
    spreading speeds around an unstable intermediate state, together with
    the directly minimised inf_mu -lambda_1,per(-mu^2 diag(1,d) - A)/mu."""
    lam = report.lambda_principal
    if not lam < 0:
        raise ValueError(f"state is not unstable (lambda = {lam}); the bound is vacuous")
    grid = grid or PeriodicGrid(params.L, report.state.u1.size)
    op = CoopOperator.at_state(report.state.u1, report.state.u2, spec.sample(grid), params, grid)
    bound = closed_form_bound(lam, params.d)
    mu_star, direct = minimize_spreading_expression(op)
    return CounterPropagation(bound, direct, mu_star, lam)
