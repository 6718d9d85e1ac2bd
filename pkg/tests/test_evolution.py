import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percomp.evolution import (EvolutionConfig, InstabilityWarning, Stepper, Trajectory,
                               comparison_test, cooperative_leq, default_dt, integrate,
                               inverse_J, poincare_map, stability_bound, step, transform_J)
from percomp.grid import PeriodicGrid
from percomp.model import FourierSeries, ReactionSpec, SystemParams
from percomp.stationary import StatePair, extinction_states

SPEC = ReactionSpec(FourierSeries(1.0, sin=(0.3,)), FourierSeries(1.0),
                    FourierSeries(1.0, cos=(0.2,)), FourierSeries(1.0), period=1.0)
PARAMS = SystemParams(d=2.0, k=100.0, alpha=1.0, L=1.0)
GRID = PeriodicGrid(1.0, 64)
EXT = extinction_states(SPEC, PARAMS, GRID)
CONFIG = EvolutionConfig(dt=1e-3, t_end=1.0)


def coop_pair(rng, frac=None):
    """(a, b) with a <= b in the cooperative order, a != b."""
    e1, e2 = EXT
    b = StatePair(e1 * rng.uniform(0.2, 0.9, e1.size), e2 * rng.uniform(0.2, 0.9, e2.size))
    frac = rng.uniform(0.5, 0.95) if frac is None else frac
    v2 = transform_J(b.u2, e2)
    return StatePair(frac * b.u1, inverse_J(frac * v2, e2)), b


def test_extinction_state_is_invariant():
    stepper = Stepper(PARAMS, SPEC.sample(GRID), GRID, 1e-3)
    s0 = StatePair(EXT[0], np.zeros(GRID.n))
    final, _ = integrate(s0, stepper, 1.0, record_every=None)
    assert final.distance(s0) <= 1e-9
    assert np.all(final.u2 == 0.0)


def test_zero_stays_zero_exactly():
    z = StatePair(np.zeros(GRID.n), np.zeros(GRID.n))
    out = step(z, PARAMS, SPEC, 1e-3, grid=GRID)
    assert np.array_equal(out.u1, z.u1) and np.array_equal(out.u2, z.u2)


def test_logistic_ode_oracle():
    spec = ReactionSpec.homogeneous()
    params = SystemParams(d=1.0, k=0.0, alpha=1.0, L=1.0)
    grid = PeriodicGrid(1.0, 32)
    stepper = Stepper(params, spec.sample(grid), grid, 1e-3)
    final, _ = integrate(StatePair(np.full(32, 0.01), np.zeros(32)), stepper, 5.0,
                         record_every=None)
    exact = 0.01 * math.exp(5) / (1 + 0.01 * (math.exp(5) - 1))
    assert np.max(np.abs(final.u1 - exact)) <= 1e-4


def test_poincare_fixed_point_and_composition():
    s0 = StatePair(EXT[0], np.zeros(GRID.n))
    assert poincare_map(s0, 0.5, PARAMS, SPEC, CONFIG, grid=GRID).distance(s0) <= 1e-8
    rng = np.random.default_rng(3)
    u = StatePair(EXT[0] * rng.uniform(0, 1, GRID.n), EXT[1] * rng.uniform(0, 1, GRID.n))
    once = poincare_map(u, 1.0, PARAMS, SPEC, CONFIG, grid=GRID)
    twice = poincare_map(poincare_map(u, 0.5, PARAMS, SPEC, CONFIG, grid=GRID), 0.5,
                         PARAMS, SPEC, CONFIG, grid=GRID)
    assert once.distance(twice) <= 1e-7


def test_shift_equivariance_on_three_cells():
    grid = PeriodicGrid(3.0, 192)
    rng = np.random.default_rng(0)
    u = StatePair(rng.uniform(0, 1, grid.n), rng.uniform(0, 1, grid.n))
    shift = 64
    rolled = StatePair(np.roll(u.u1, shift), np.roll(u.u2, shift))
    a = poincare_map(u, 1.0, PARAMS, SPEC, CONFIG, grid=grid)
    b = poincare_map(rolled, 1.0, PARAMS, SPEC, CONFIG, grid=grid)
    # sparse LU pivots do not commute with the roll, so agreement is at round-off
    assert np.max(np.abs(np.roll(a.u1, shift) - b.u1)) <= 1e-13
    assert np.max(np.abs(np.roll(a.u2, shift) - b.u2)) <= 1e-13


def test_J_involution():
    e2 = EXT[1]
    u = np.random.default_rng(1).uniform(0, 1, GRID.n)
    assert np.array_equal(transform_J(e2, e2), np.zeros(GRID.n))
    assert np.array_equal(transform_J(np.zeros(GRID.n), e2), e2)
    assert np.allclose(inverse_J(transform_J(u, e2), e2), u, atol=1e-15, rtol=0)


def test_comparison_scaled_pair():
    a, b = coop_pair(np.random.default_rng(7), frac=0.9)
    assert cooperative_leq(a, b, EXT[1])
    assert comparison_test(a, b, 1.0, PARAMS, SPEC, CONFIG, EXT[1], grid=GRID)


def test_comparison_rejects_equal_or_unordered():
    a, b = coop_pair(np.random.default_rng(8))
    with pytest.raises(ValueError):
        comparison_test(b, b, 1.0, PARAMS, SPEC, CONFIG, EXT[1], grid=GRID)
    with pytest.raises(ValueError):
        comparison_test(b, a, 1.0, PARAMS, SPEC, CONFIG, EXT[1], grid=GRID)


def test_comparison_single_node_difference():
    b = StatePair(0.5 * EXT[0], 0.5 * EXT[1])
    u1 = b.u1.copy()
    u1[10] -= 0.05
    a = StatePair(u1, b.u2.copy())
    assert comparison_test(a, b, 0.5, PARAMS, SPEC, CONFIG, EXT[1], grid=GRID)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_order_preservation(seed):
    a, b = coop_pair(np.random.default_rng(seed))
    qa = poincare_map(a, 0.2, PARAMS, SPEC, CONFIG, grid=GRID)
    qb = poincare_map(b, 0.2, PARAMS, SPEC, CONFIG, grid=GRID)
    assert cooperative_leq(qa, qb, EXT[1])


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trapping_and_mass_bound(seed):
    rng = np.random.default_rng(seed)
    s = StatePair(EXT[0] * rng.uniform(0.01, 0.99, GRID.n), EXT[1] * rng.uniform(0.01, 0.99, GRID.n))
    stepper = Stepper(PARAMS, SPEC.sample(GRID), GRID, 1e-3)
    _, traj = integrate(s, stepper, 0.5, record_every=50)
    for state in traj.states:
        assert np.all(state.u1 > 0) and np.all(state.u1 < EXT[0])
        assert np.all(state.u2 > 0) and np.all(state.u2 < EXT[1])
    big = StatePair(np.full(GRID.n, 2.0), np.full(GRID.n, 0.0))
    _, traj = integrate(big, stepper, 0.5, record_every=50)
    assert all(np.max(st_.u1) <= 2.0 + 1e-9 for st_ in traj.states)


def test_imex_matches_explicit():
    grid = PeriodicGrid(1.0, 32)
    params = PARAMS.with_k(5.0)
    dt = 2e-4
    s0 = StatePair(0.5 + 0.3 * np.cos(2 * np.pi * grid.x), 0.4 + 0.2 * np.sin(2 * np.pi * grid.x))
    coeffs = SPEC.sample(grid)
    imex, _ = integrate(s0, Stepper(params, coeffs, grid, dt, "imex"), 1.0, record_every=None)
    expl, _ = integrate(s0, Stepper(params, coeffs, grid, dt, "explicit"), 1.0, record_every=None)
    assert imex.distance(expl) <= 5 * dt


def test_explicit_scheme_rejects_unstable_dt():
    with pytest.raises(ValueError):
        Stepper(PARAMS, SPEC.sample(GRID), GRID, 1e-2, "explicit")


def test_clamp_telemetry_and_warning():
    params = PARAMS.with_k(1e4)
    stepper = Stepper(params, SPEC.sample(GRID), GRID, 0.05)
    s = StatePair(np.full(GRID.n, 0.5), np.full(GRID.n, 0.5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stepper.step(s)
    assert stepper.clamps > 0
    assert any(issubclass(w.category, InstabilityWarning) for w in caught)


def test_config_and_trajectory_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        EvolutionConfig(dt=1e-3, t_end=1.0, scheme="rk4")
    traj = Trajectory()
    s = StatePair(np.zeros(16), np.zeros(16))
    traj.append(0.0, s)
    with pytest.raises(ValueError):
        traj.append(0.0, s)
    stepper = Stepper(PARAMS, SPEC.sample(GRID), GRID, 1e-3)
    with pytest.raises(ValueError):
        integrate(StatePair(EXT[0], EXT[1]), stepper, 0.00125)


def test_default_dt_respects_stability_bound():
    coeffs = SPEC.sample(GRID)
    ext_max = float(max(EXT[0].max(), EXT[1].max()))
    bound = stability_bound(coeffs, PARAMS, ext_max)
    assert default_dt(coeffs, PARAMS, ext_max) <= min(1e-3, bound)
    assert bound == pytest.approx(0.5 / (1.3 + 100 * ext_max))
