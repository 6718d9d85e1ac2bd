"""Strong-competition limit: solutions of -z'' = eta[z] and -z'' = gamma[z],
their nodal structure, and sweeps of coexistence states over k."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from ._newton import damped_newton
from .eigen import radius_constant
from .grid import PeriodicGrid
from .model import Coefficients, ReactionSpec, SystemParams, check_hypotheses
from .stationary import (DEDUP_TOL, default_grid, extinction_states,
                         find_coexistence_states)

KINK_WIDTH = 1e-7
RESIDUAL_TOL = 1e-8
SIGN_TOL = 1e-8
DEFAULT_K_GRID = (10.0, 30.0, 100.0, 300.0, 1000.0)


@dataclass
class SegregatedSolution:
    z: np.ndarray
    kind: str
    classification: str
    residual: float


def _parts(z, eps):
    """Smoothed (z+, z-) and their derivatives; exact when eps == 0."""
    if eps == 0:
        zp, zm = np.maximum(z, 0.0), np.maximum(-z, 0.0)
        dp = (z > 0).astype(float)
        return zp, zm, dp, dp - 1.0
    root = np.sqrt(z * z + eps * eps)
    return 0.5 * (z + root), 0.5 * (root - z), 0.5 * (1 + z / root), 0.5 * (z / root - 1)


def segregated_term(kind: str, z, coeffs: Coefficients, params: SystemParams, eps: float = 0.0):
    """eta[z] or gamma[z] on the grid and its derivative in z."""
    zp, zm, dp, dm = _parts(z, eps)
    d, alpha = params.d, params.alpha
    if kind == "eta":
        f1, f2 = coeffs.f(1, z / alpha), coeffs.f(2, -z / d)
        term = f1 * zp - f2 * zm / d
        deriv = f1 * dp - coeffs.nu1 / alpha * zp - (f2 * dm + coeffs.nu2 / d * zm) / d
    elif kind == "gamma":
        term = coeffs.mu1 * zp - coeffs.mu2 * zm / d
        deriv = coeffs.mu1 * dp - coeffs.mu2 * dm / d
    else:
        raise ValueError(f"kind must be 'eta' or 'gamma', got {kind!r}")
    return term, deriv


def classify(z: np.ndarray, tol: float = SIGN_TOL) -> str:
    top, bottom = float(np.max(z)), float(np.min(z))
    if top <= tol and bottom >= -tol:
        return "trivial"
    if bottom >= -tol:
        return "plus_state"
    if top <= tol:
        return "minus_state"
    return "sign_changing"


def segregated_seed_bank(ext, params: SystemParams, *, n_random: int = 32,
                         seed: int = 0) -> list[np.ndarray]:
    """+-extinction multiples, zero and smooth random sign-changing fields."""
    e1, e2 = params.alpha * ext[0], params.d * ext[1]
    seeds = [e1, -e2, np.zeros_like(e1), 0.5 * e1, -0.5 * e2]
    rng = np.random.default_rng(seed)
    n = e1.size
    x = np.arange(n) / n
    amp = float(max(e1.max(), e2.max()))
    for _ in range(n_random):
        h = rng.integers(1, 4)
        phase = rng.uniform(0, 2 * np.pi)
        base = np.cos(2 * np.pi * h * x + phase)
        base += 0.3 * rng.normal() * np.cos(2 * np.pi * (h + 1) * x + rng.uniform(0, 2 * np.pi))
        seeds.append(amp * rng.uniform(0.2, 1.5) * (base + rng.uniform(-0.5, 0.5)))
    return seeds


def solve_segregated(kind: str, spec: ReactionSpec, params: SystemParams,
                     seeds: list[np.ndarray] | None = None, *, grid: PeriodicGrid | None = None,
                     ext=None, seed: int = 0) -> list[SegregatedSolution]:
    """Newton on -z'' = term[z] from each seed: first with the kinks of z+-
    smoothed over ``KINK_WIDTH``, then polished with the exact kinks.
    Returns the distinct solutions reaching residual <= 1e-8."""
    grid = grid or default_grid(params)
    coeffs = spec.sample(grid)
    if seeds is None:
        ext = ext if ext is not None else extinction_states(spec, params, grid)
        seeds = segregated_seed_bank(ext, params, seed=seed)
    lap = grid.laplacian(1.0)

    def functions(eps):
        def residual(z):
            return -(lap @ z) - segregated_term(kind, z, coeffs, params, eps)[0]

        def jacobian(z):
            return -lap - sp.diags(segregated_term(kind, z, coeffs, params, eps)[1])
        return residual, jacobian

    smooth, exact = functions(KINK_WIDTH), functions(0.0)
    found: list[SegregatedSolution] = []
    for z0 in seeds:
        first = damped_newton(*smooth, z0, tol=1e-10, max_iter=100)
        polished = damped_newton(*exact, first.x, tol=1e-11, max_iter=30)
        if polished.residual > RESIDUAL_TOL:
            continue
        z = polished.x
        if any(np.max(np.abs(z - s.z)) < DEDUP_TOL for s in found):
            continue
        found.append(SegregatedSolution(z, kind, classify(z), polished.residual))
    order = {"minus_state": 0, "trivial": 1, "plus_state": 2, "sign_changing": 3}
    found.sort(key=lambda s: (order[s.classification], float(np.mean(s.z))))
    return found


# ---------------------------------------------------------------- nodal data

def sign_components(z: np.ndarray, grid: PeriodicGrid) -> tuple[list[float], list[float]]:
    """Lengths of the connected components of {z > 0} and {z < 0} on the
    periodic cell, with zero crossings located by linear interpolation."""
    n, dx = grid.n, grid.dx
    s = np.sign(z)
    if np.all(s >= 0) or np.all(s <= 0):
        raise ValueError("field does not change sign")
    # crossing positions between consecutive nodes j, j+1 (periodic)
    nxt = np.roll(z, -1)
    idx = np.flatnonzero((z > 0) != (nxt > 0))
    pos = (idx + z[idx] / (z[idx] - nxt[idx])) * dx
    pos = np.sort(pos)
    plus, minus = [], []
    for a, b in zip(pos, np.roll(pos, -1)):
        width = (b - a) % grid.length
        mid = (a + 0.5 * width) % grid.length
        value = np.interp(mid, np.arange(n + 1) * dx, np.append(z, z[0]))
        (plus if value > 0 else minus).append(float(width))
    return plus, minus


def nodal_structure(sol: SegregatedSolution, spec: ReactionSpec, params: SystemParams,
                    grid: PeriodicGrid | None = None) -> dict:
    """Zero count, component widths and the width inequalities

        |C+| >= 2 (p+1) R(0, M1, 1),   |C-| >= 2 (p+1) R(0, M2, d),

    whose sum exceeds L whenever (H_freq) holds."""
    if sol.classification != "sign_changing":
        raise ValueError(f"nodal structure needs a sign-changing field, got {sol.classification}")
    grid = grid or default_grid(params, sol.z.size)
    plus, minus = sign_components(sol.z, grid)
    zeros = len(plus) + len(minus)
    p = zeros // 2 - 1
    report = check_hypotheses(spec, params)
    R1 = radius_constant(report.M1, 1.0)
    R2 = radius_constant(report.M2, params.d)
    c_plus, c_minus = sum(plus), sum(minus)
    need = 2 * (R1 + R2)
    return {
        "zeros_per_period": zeros,
        "p": p,
        "plus_widths": plus,
        "minus_widths": minus,
        "measure_plus": c_plus,
        "measure_minus": c_minus,
        "plus_bound": 2 * (p + 1) * R1,
        "minus_bound": 2 * (p + 1) * R2,
        "plus_bound_ok": c_plus >= 2 * (p + 1) * R1,
        "minus_bound_ok": c_minus >= 2 * (p + 1) * R2,
        "hfreq_ok": report.hfreq_ok,
        "width_requirement": need,
        "contradiction": report.hfreq_ok and c_plus + c_minus < need,
        "violated_inequality": (f"|C+| + |C-| = {c_plus + c_minus:.6g} < "
                                f"2(R(0,M1,1) + R(0,M2,d)) = {need:.6g}"
                                if c_plus + c_minus < need else None),
    }


# --------------------------------------------------------------------- sweeps

@dataclass
class SweepRecord:
    k: float
    n_states: int
    sup_u1: float
    sup_u2: float
    ratio_min: float
    ratio_max: float
    max_k_u1u2: float
    kU_min: float
    kU_max: float
    segregation_integral: float
    limit_residual: float
    lambda_max: float
    all_unstable: bool
    all_certified: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _limit_residual(u1, u2, k, coeffs, params, grid):
    from .grid import second_derivative_periodic as d2
    U1, U2 = k * u1, k * u2
    r1 = -d2(U1, grid) - U1 * coeffs.mu1 + U1 * U2
    r2 = -d2(U2, grid, params.d) - U2 * coeffs.mu2 + params.alpha * U1 * U2
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def sweep_entry(spec: ReactionSpec, params: SystemParams, n: int, seed: int = 0) -> SweepRecord:
    grid = default_grid(params, n)
    coeffs = spec.sample(grid)
    reports = find_coexistence_states(params, spec, grid=grid, seed=seed)
    k = params.k
    if not reports:
        nan = math.nan
        return SweepRecord(k, 0, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, False, False)
    sup1 = [float(r.state.u1.max()) for r in reports]
    sup2 = [float(r.state.u2.max()) for r in reports]
    ratios = [s2 / (params.alpha * s1) for s1, s2 in zip(sup1, sup2)]
    kU = [k * np.concatenate([r.state.u1, r.state.u2]) for r in reports]
    return SweepRecord(
        k=k,
        n_states=len(reports),
        sup_u1=max(sup1),
        sup_u2=max(sup2),
        ratio_min=min(ratios),
        ratio_max=max(ratios),
        max_k_u1u2=max(float(np.max(k * r.state.u1 * r.state.u2)) for r in reports),
        kU_min=min(float(v.min()) for v in kU),
        kU_max=max(float(v.max()) for v in kU),
        segregation_integral=max(float(np.sum(r.state.u1 * r.state.u2) * grid.dx) for r in reports),
        limit_residual=max(_limit_residual(r.state.u1, r.state.u2, k, coeffs, params, grid)
                           for r in reports),
        lambda_max=max(r.lambda_principal for r in reports),
        all_unstable=all(r.classification == "unstable" for r in reports),
        all_certified=all(r.certificate is not None and r.certificate[1] for r in reports),
    )


def sweep_k(spec: ReactionSpec, params_base: SystemParams, k_values=DEFAULT_K_GRID, *,
            n: int = 256, seed: int = 0, threads: int = 1) -> list[SweepRecord]:
    """One SweepRecord per k (aggregated over the states found at that k)."""
    k_values = [float(k) for k in k_values]
    if any(k <= 0 for k in k_values) or any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise ValueError("k values must be positive and increasing")
    jobs = [params_base.with_k(k) for k in k_values]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(sweep_entry, [spec] * len(jobs), jobs,
                                 [n] * len(jobs), [seed] * len(jobs)))
    return [sweep_entry(spec, p, n, seed) for p in jobs]


def sweep_verdicts(records: list[SweepRecord]) -> dict:
    """Trend checks along a sweep (records with no state are skipped)."""
    rec = [r for r in records if r.n_states > 0]
    sup = [max(r.sup_u1, r.sup_u2) for r in rec]
    integ = [r.segregation_integral for r in rec]
    certified = [r.k for r in rec if r.all_certified and r.all_unstable]
    k_star = None
    for r in rec:
        tail = [s for s in rec if s.k >= r.k]
        if all(s.all_certified and s.all_unstable for s in tail):
            k_star = r.k
            break
    return {
        "sup_norm_nonincreasing": all(b <= a for a, b in zip(sup, sup[1:])),
        "segregation_integral_decreasing": all(b < a for a, b in zip(integ, integ[1:])),
        "k_times_integral_bounded": (max(r.k * r.segregation_integral for r in rec)
                                     if rec else None),
        "kU_range": ([min(r.kU_min for r in rec), max(r.kU_max for r in rec)] if rec else None),
        "ratio_range": ([min(r.ratio_min for r in rec), max(r.ratio_max for r in rec)]
                        if rec else None),
        "k_times_limit_residual": [r.k * r.limit_residual for r in rec],
        "certified_k": certified,
        "empirical_k_star": k_star,
    }
