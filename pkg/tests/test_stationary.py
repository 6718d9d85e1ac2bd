import numpy as np
import pytest
from scipy.integrate import solve_ivp
import scipy.sparse as sp

from percomp.evolution import Stepper
from percomp.grid import PeriodicGrid
from percomp.model import FourierSeries, ReactionSpec, SystemParams
from percomp.eigen import principal_eigen_periodic
from percomp.stationary import (StatePair, audit_max_principle, certificate_constant,
                                extinction_stability, extinction_states,
                                find_coexistence_states, instability_certificate,
                                solve_logistic_steady)

HOMOG = ReactionSpec.homogeneous()
G64 = PeriodicGrid(1.0, 64)


def logistic_residual(u, delta, mu, nu, grid):
    return -(grid.laplacian(delta) @ u) - u * (mu - nu * u)


@pytest.mark.parametrize("delta", [0.5, 1.0, 3.0])
def test_logistic_constant(delta):
    assert np.allclose(solve_logistic_steady(delta, 1, HOMOG, G64), 1.0, atol=1e-12)
    spec = ReactionSpec.homogeneous(mu2=2.0, nu2=4.0)
    assert np.allclose(solve_logistic_steady(delta, 2, spec, G64), 0.5, atol=1e-12)


def test_logistic_heterogeneous_vs_long_time_integration(hetero):
    spec, _, grid = hetero
    u = solve_logistic_steady(1.0, 1, spec, grid)
    mu = 1 + 0.3 * np.sin(2 * np.pi * grid.x)
    assert 0.7 < u.mean() < 1.3 and np.ptp(u) > 1e-3
    assert np.max(np.abs(logistic_residual(u, 1.0, mu, 1.0, grid))) <= 1e-10
    lap = grid.laplacian(1.0)
    sol = solve_ivp(lambda t, z: lap @ z + z * (mu - z), (0.0, 60.0), np.full(grid.n, 0.5),
                    method="BDF", jac=lambda t, z: lap + sp.diags(mu - 2 * z),
                    rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(sol.y[:, -1] - u)) <= 1e-6


def test_logistic_is_fixed_point_of_stepper(hetero):
    spec, params, grid = hetero
    e1, e2 = extinction_states(spec, params, grid)
    stepper = Stepper(params.with_k(0.0), spec.sample(grid), grid, 1e-3)
    out = stepper.step(StatePair(e1, e2))
    assert max(np.max(np.abs(out.u1 - e1)), np.max(np.abs(out.u2 - e2))) <= 1e-8


def test_weak_coupling_constant_state():
    params = SystemParams(d=1.0, k=0.5, alpha=1.0, L=1.0)
    reports = find_coexistence_states(params, HOMOG, grid=G64)
    assert len(reports) == 1
    s = reports[0].state
    assert np.allclose(s.u1, 2 / 3, atol=1e-9) and np.allclose(s.u2, 2 / 3, atol=1e-9)
    assert reports[0].residual_inf <= 1e-9 * (1 + params.k)


def test_decoupled_returns_extinction_pair():
    params = SystemParams(d=1.0, k=0.0, alpha=1.0, L=1.0)
    reports = find_coexistence_states(params, HOMOG, grid=G64)
    assert len(reports) == 1
    assert np.allclose(reports[0].state.u1, 1.0) and np.allclose(reports[0].state.u2, 1.0)


def test_states_unstable_and_audited_under_hfreq(hetero_ext):
    spec, params, grid, ext = hetero_ext
    reports = find_coexistence_states(params, spec, grid=grid, ext=ext)
    assert reports
    for r in reports:
        assert r.classification == "unstable" and r.lambda_principal < 0
        assert r.audit.all and r.certificate[1]
        assert r.residual_inf <= 1e-9 * (1 + params.k)
        assert np.all(r.state.u1 < ext[0]) and np.all(r.state.u2 < ext[1])


def test_sup_norm_decay_along_k(hetero_ext):
    spec, params, grid, ext = hetero_ext
    sups = []
    for k in (1e2, 1e3, 1e4):
        reports = find_coexistence_states(params.with_k(k), spec, grid=grid, ext=ext)
        assert reports
        sups.append(max(r.state.sup() for r in reports))
    assert sups[0] >= sups[1] >= sups[2] and sups[2] < 0.05


def test_audit_examples():
    params = SystemParams(d=1.0, k=0.5, alpha=1.0, L=1.0)
    s = StatePair(np.full(64, 2 / 3), np.full(64, 2 / 3))
    audit = audit_max_principle(s, params, HOMOG, grid=G64)
    assert audit.all
    lhs, rhs = audit.values["first"]
    assert lhs == pytest.approx(rhs, abs=1e-15)
    # min u2 above M1/k violates the first bound
    bad = StatePair(np.full(64, 0.5), np.full(64, 2.0))
    assert not audit_max_principle(bad, params.with_k(1.0), HOMOG, grid=G64).first
    decoupled = params.with_k(0.0)
    below = StatePair(np.full(64, 0.5), np.full(64, 0.5))
    a = audit_max_principle(below, decoupled, HOMOG, grid=G64)
    assert not a.third and not a.fourth
    # at (u1~, u2~) itself both sides vanish
    a = audit_max_principle(StatePair(np.ones(64), np.ones(64)), decoupled, HOMOG, grid=G64)
    assert a.third and a.fourth


@pytest.mark.parametrize("k", [0.5, 0.9, 1.1, 3.0])
def test_extinction_stability_homogeneous(k):
    params = SystemParams(d=1.0, k=k, alpha=1.0, L=1.0)
    r1, r2 = extinction_stability(params, HOMOG, grid=G64)
    for r in (r1, r2):
        assert r.lambda_principal == pytest.approx(min(1.0, k - 1.0), abs=1e-10)
        assert (r.classification == "stable") == (k > 1)


def test_f1_at_extinction_has_zero_eigenvalue(hetero):
    spec, params, grid = hetero
    e1, _ = extinction_states(spec, params, grid)
    res = principal_eigen_periodic(1.0, spec.sample(grid).f(1, e1), grid)
    assert abs(res.lam) < 1e-10
    assert np.allclose(res.phi, e1 / e1.max(), atol=1e-8)


def test_certificate_examples():
    params = SystemParams(d=1.0, k=10.0, alpha=1.0, L=1.0)
    s = StatePair(np.full(64, 1 / 11), np.full(64, 1 / 11))
    lam, ok = instability_certificate(s, params, HOMOG, grid=G64)
    assert lam == pytest.approx(-9 / 11, rel=1e-12) and ok
    lam0, ok0 = instability_certificate(StatePair(np.ones(64), np.ones(64)),
                                        params.with_k(0.0), HOMOG, grid=G64)
    assert lam0 > 0 and not ok0


def test_certificate_constant_is_max_nu():
    spec = ReactionSpec(FourierSeries(1.0), FourierSeries(1.5, cos=(0.2,)),
                        FourierSeries(1.0), FourierSeries(0.8), 1.0)
    assert certificate_constant(spec) == pytest.approx(1.7, abs=1e-12)


@pytest.mark.parametrize("n", [512, 2048])
def test_logistic_solve_on_fine_grids(n):
    # the residual cannot go below eps * 4 delta / dx^2 * |u|; the solver must accept that
    spec = ReactionSpec(FourierSeries(1.0, sin=(0.3,)), FourierSeries(1.0),
                        FourierSeries(1.0, cos=(0.2,)), FourierSeries(1.0), period=1.0)
    grid = PeriodicGrid(1.0, n)
    for delta, i in ((1.0, 1), (2.0, 2)):
        u = solve_logistic_steady(delta, i, spec, grid)
        coeffs = spec.sample(grid)
        res = -(grid.laplacian(delta) @ u) - u * (coeffs.mu(i) - coeffs.nu(i) * u)
        assert np.max(np.abs(res)) <= max(1e-10, 8 * np.finfo(float).eps * delta * n**2 * np.max(u))
