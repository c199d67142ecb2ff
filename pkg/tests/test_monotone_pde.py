import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwise_monotone.experiments.scenarios import _slope
from pathwise_monotone.grid_paths import (
    BesovIndex,
    SampledPath,
    TimeGrid,
    besov_seminorm,
    generate_fbm,
    holder_seminorm,
    make_rng,
)
from pathwise_monotone.monotone_pde import (
    AbstractYoung,
    DriverError,
    DriverOperator,
    LinearMultiplicative,
    RegularizedDrift,
    SolverError,
    additive_driver,
    audit_assumptions,
    contraction_audit,
    cubic_psi,
    driver_increment,
    driver_integral,
    dyadic_windows,
    h5_diagnostic,
    h6_diagnostic,
    heat_reference,
    identity_psi,
    implicit_step,
    p_laplace_apply,
    p_laplace_flux_pairing,
    p_laplace_triple,
    porous_medium_apply,
    porous_medium_triple,
    power_psi,
    solve,
    stiffness_matrix,
    zero_driver,
    zero_triple,
)
from pathwise_monotone.occupation import SpatialBins, direct_drift_sum, lipschitz_drift
from pathwise_monotone.young import MultiplierProduct, NemytskiiMap, abstract_young_audit


def bump(d):
    x = np.arange(1, d + 1) / (d + 1)
    return np.where(np.abs(x - 0.5) < 0.25, np.cos(2 * np.pi * (x - 0.5)) ** 2, 0.0)


# --- operators -------------------------------------------------------------------------


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_p_laplace_zero(p):
    assert np.all(p_laplace_apply(0.0, np.zeros(16), p) == 0.0)


def test_p_laplace_two_is_discrete_laplacian():
    d = 20
    u = make_rng(1).standard_normal(d)
    np.testing.assert_allclose(p_laplace_apply(0.0, u, 2.0), -stiffness_matrix(d) @ u, rtol=1e-13, atol=1e-9)
    dx = 1 / (d + 1)
    pad = np.concatenate([[0.0], u, [0.0]])
    stencil = (pad[2:] - 2 * pad[1:-1] + pad[:-2]) / dx**2
    np.testing.assert_allclose(p_laplace_apply(0.0, u, 2.0), stencil, rtol=1e-13, atol=1e-9)


@pytest.mark.parametrize("p", [1.6, 2.0, 3.0, 4.0])
def test_p_laplace_coercivity_identity(p):
    d = 32
    tri = p_laplace_triple(d, p)
    rng = make_rng(2)
    worst = 0.0
    for _ in range(100):
        u = rng.standard_normal(d) * 0.2
        worst = max(worst, tri.duality(tri.apply(0.0, u), u) + tri.v_norm(u) ** p)
    assert worst <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(1.5, 4.0))
def test_p_laplace_summation_by_parts(seed, p):
    d = 12
    u, v = make_rng(seed).standard_normal((2, d))
    tri = p_laplace_triple(d, p)
    a = tri.duality(tri.apply(0.0, u), v)
    assert a == pytest.approx(p_laplace_flux_pairing(u, v, p, tri.dx), rel=1e-10, abs=1e-10)


def test_porous_identity_is_minus_identity_in_pairing():
    d = 24
    tri = porous_medium_triple(d, identity_psi())
    rng = make_rng(3)
    for _ in range(20):
        u = rng.standard_normal(d)
        l2 = float(np.sum(u**2) * tri.dx)
        assert tri.duality(tri.apply(0.0, u), u) == pytest.approx(-l2, rel=1e-10)


def test_porous_square_power_coercivity():
    d = 24
    psi = power_psi(2.0)
    assert (psi.p, psi.a, psi.c) == (3.0, 1.0, 0.0)
    tri = porous_medium_triple(d, psi)
    rng = make_rng(4)
    for _ in range(50):
        u = rng.standard_normal(d) * rng.choice([0.1, 1.0, 5.0])
        pairing = tri.duality(tri.apply(0.0, u), u)
        l3 = float(np.sum(np.abs(u) ** 3) * tri.dx)
        assert pairing == pytest.approx(-l3, rel=1e-9)
        assert pairing <= -psi.a * tri.v_norm(u) ** 3 + psi.c + 1e-10 * (1 + l3)


def test_porous_zero():
    assert np.all(porous_medium_apply(0.0, np.zeros(8), cubic_psi()) == 0.0)


def test_audit_p_laplace_unit_constants():
    tri = p_laplace_triple(32, 3.0)
    c = tri.constants
    assert (c.c1, c.c2, c.c3) == (1.0, 0.0, 1.0)
    assert c.g(0.5) == 0.0 and c.f(0.5) == 0.0
    rep = audit_assumptions(tri, 200, seed=0)
    assert rep.passed, rep.summary()
    assert rep.checked["H3"] == 200 and rep.checked["H4"] == 200


def test_audit_porous_cubic():
    rep = audit_assumptions(porous_medium_triple(16, cubic_psi()), 100, seed=1)
    assert rep.violations["psi2_monotone"] == []
    assert rep.passed, rep.summary()


def test_audit_zero_operator_skips_coercivity():
    rep = audit_assumptions(zero_triple(8), 50)
    assert rep.passed and rep.checked["H3"] == 0


def test_audit_reports_witnesses_for_wrong_constant():
    tri = p_laplace_triple(16, 3.0)
    from dataclasses import replace

    bad = replace(tri, constants=replace(tri.constants, c1=5.0))
    rep = audit_assumptions(bad, 30)
    assert not rep.passed and rep.violations["H3"] and "u" in rep.violations["H3"][0]


# --- driver increments -----------------------------------------------------------------


def test_additive_increment():
    g = TimeGrid(0.0, 1.0, 64)
    Z = SampledPath(g, make_rng(5).standard_normal((65, 3)))
    drv = additive_driver(Z)
    np.testing.assert_array_equal(driver_increment(drv, np.zeros((11, 3)), 10, 40), Z.values[40] - Z.values[10])


def test_linear_multiplicative_constant_integrand():
    g = TimeGrid(0.0, 1.0, 256)
    beta = SampledPath.from_function(g, lambda t: np.sin(3 * t) + t**2)
    drv = DriverOperator(LinearMultiplicative(beta), 0.9, 4.0)
    c = np.array([0.7, -1.2, 2.0])
    hist = np.tile(c, (g.n + 1, 1))
    inc = driver_increment(drv, hist, 17, 201)
    np.testing.assert_allclose(inc, c * (beta.scalar[201] - beta.scalar[17]), atol=1e-8)
    assert np.all(driver_integral(drv, SampledPath(g, hist)).values[0] == 0.0)


def test_increments_additive_over_adjacent_intervals():
    g = TimeGrid(0.0, 1.0, 256)
    beta = generate_fbm(6, 0.8, g)
    u = SampledPath(g, np.cos(np.outer(g.times, [1.0, 2.0, 3.0])))
    drv = DriverOperator(LinearMultiplicative(beta), 0.8, 4.0)
    whole = driver_increment(drv, u, 32, 224)
    parts = driver_increment(drv, u, 32, 100) + driver_increment(drv, u, 100, 224)
    np.testing.assert_allclose(whole, parts, atol=1e-8)


def test_regularized_drift_increment_against_direct_sum():
    g = TimeGrid(0.0, 1.0, 2**12)
    w = generate_fbm(7, 0.4, g)
    u = SampledPath(g, 0.2 * np.cos(np.outer(g.times, [1.0, 2.0])))
    drift = lipschitz_drift(np.sin, 1.0)
    drv = DriverOperator(RegularizedDrift(drift, w, SpatialBins.covering(w, 512)), 0.9, 4.0)
    inc = driver_increment(drv, u, 0, g.n)
    direct = direct_drift_sum(drift, w, u).values[-1]
    np.testing.assert_allclose(inc, direct, atol=1e-3)


def test_driver_errors():
    g = TimeGrid(0.0, 1.0, 16)
    drv = additive_driver(SampledPath(g, np.zeros((17, 2))))
    with pytest.raises(DriverError):
        driver_increment(drv, np.zeros((1, 2)), 5, 5)
    with pytest.raises(DriverError, match="history"):
        driver_increment(drv, np.zeros((3, 2)), 5, 6)
    with pytest.raises(DriverError, match="scalar beta"):
        DriverOperator(LinearMultiplicative(SampledPath(g, np.zeros((17, 2)))))
    with pytest.raises(DriverError, match="violate"):
        DriverOperator(LinearMultiplicative(SampledPath(g, np.zeros((17, 1)))), 0.6, 4.0).require_admissible()


# --- solver --------------------------------------------------------------------------------


def test_heat_decay_first_order():
    d, T = 32, 0.1
    tri = p_laplace_triple(d, 2.0)
    ns = [64, 128, 256]
    errs = []
    for n in ns:
        grid = TimeGrid(0.0, T, n)
        rep = solve(tri, zero_driver(grid, d), tri.first_eigenvector(), grid)
        exact = heat_reference(tri, grid)
        errs.append(float(np.max(tri.ip.norm(rep.solution.values - exact))))
    assert all(e <= 2.0 * T / n * tri.first_eigenvalue() for e, n in zip(errs, ns))
    assert 0.9 <= _slope(ns, errs) <= 1.1


def test_zero_operator_additive_noise_exact():
    d = 8
    grid = TimeGrid(0.0, 1.0, 128)
    Z = SampledPath(grid, make_rng(8).standard_normal((129, d)).cumsum(axis=0) * 0.1)
    u0 = np.linspace(-1, 1, d)
    rep = solve(zero_triple(d), additive_driver(Z), u0, grid)
    np.testing.assert_allclose(rep.solution.values, u0 + Z.values - Z.values[0], atol=1e-12)
    assert rep.energy_violations == []


def test_p_laplace_additive_fbm_bound_audit():
    d = 32
    tri = p_laplace_triple(d, 3.0)
    grid = TimeGrid(0.0, 1.0, 512)
    Z = SampledPath(grid, generate_fbm(1, 0.75, grid).values * bump(d)[None, :])
    rep = solve(tri, additive_driver(Z, 0.7, math.inf), bump(d), grid)
    audit = rep.bound_audit
    assert rep.finite and audit["finite"]
    assert audit["fitted_C"] == pytest.approx(audit["lhs"] / audit["rhs_base"])
    assert 0 < audit["fitted_C"] < 100
    assert rep.energy_violations == []
    assert np.all(np.diff(rep.vnorm_cumulative) >= 0)


def test_newton_failure_reports_step():
    tri = p_laplace_triple(8, 3.0)
    with pytest.raises(SolverError) as exc:
        implicit_step(tri, 0.0, 1.0, np.full(8, 100.0), np.full(8, 100.0), 1e-14, 0, step=7)
    assert exc.value.step == 7 and "step 7" in str(exc.value)


def test_solver_input_validation(tmp_path):
    tri = zero_triple(4)
    grid = TimeGrid(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        solve(tri, zero_driver(grid, 4), np.zeros(3), grid)
    with pytest.raises(ValueError):
        solve(tri, zero_driver(TimeGrid(0.0, 1.0, 16), 4), np.zeros(4), grid)
    rep = solve(tri, zero_driver(grid, 4), np.ones(4), grid)
    assert rep.to_csv(tmp_path / "t.csv").read_text().startswith("t,energy,vnorm_cum")
    assert '"finite": true' in rep.to_json(tmp_path / "r.json").read_text()


# --- contraction ---------------------------------------------------------------------------


def test_identical_initial_data_zero_difference():
    d = 16
    tri = p_laplace_triple(d, 3.0)
    grid = TimeGrid(0.0, 1.0, 64)
    Z = SampledPath(grid, generate_fbm(2, 0.75, grid).values * np.ones((1, d)))
    rep = contraction_audit(tri, additive_driver(Z), bump(d), bump(d), grid)
    assert np.all(rep.diff_norm == 0.0) and rep.passed


def test_p_laplace_contraction_additive_fbm():
    d = 32
    tri = p_laplace_triple(d, 3.0)
    grid = TimeGrid(0.0, 1.0, 2**12)
    Z = SampledPath(grid, generate_fbm(3, 0.75, grid).values * np.ones((1, d)))
    u0 = tri.first_eigenvector()
    rep = contraction_audit(tri, additive_driver(Z), u0, u0 + bump(d), grid, tol_disc=1e-2)
    assert rep.passed and np.all(rep.ratio <= 1 + 1e-2)
    assert rep.nonincreasing


def test_linear_multiplicative_matches_closed_form():
    # w0 = e_1 evolves as exp(beta_t - beta_0 - mu t) e_1, so the factor-2 ratio is exp(-2 mu t)
    d = 16
    tri = p_laplace_triple(d, 2.0)
    grid = TimeGrid(0.0, 0.25, 2**12)
    beta = SampledPath.from_function(grid, lambda t: 0.5 * np.sin(4 * t))
    drv = DriverOperator(LinearMultiplicative(beta), 0.9, 4.0)
    e1 = tri.first_eigenvector()
    rep = contraction_audit(tri, drv, e1, np.zeros(d), grid)
    oracle = np.exp(-2 * tri.first_eigenvalue() * grid.times)
    assert np.max(np.abs(rep.ratio - oracle)) <= 1e-3
    assert rep.passed


def test_contraction_rejects_other_drivers():
    g = TimeGrid(0.0, 1.0, 8)
    X = SampledPath.from_function(g, np.sin)
    drv = DriverOperator(AbstractYoung(NemytskiiMap(np.sin, 1.0, 1.0), X, MultiplierProduct.scalar()))
    with pytest.raises(ValueError):
        contraction_audit(zero_triple(2), drv, np.zeros(2), np.ones(2), g)


# --- time-local diagnostics ----------------------------------------------------------------


def test_h5_additive_driver_independent_of_u():
    g = TimeGrid(0.0, 1.0, 256)
    Z = generate_fbm(4, 0.75, g)
    drv = additive_driver(Z, 0.7, math.inf)
    t1 = h5_diagnostic(drv, SampledPath.from_function(g, np.sin))
    t2 = h5_diagnostic(drv, SampledPath.from_function(g, lambda t: 5 * np.cos(9 * t)))
    assert [r[2] for r in t1.rows] == [r[2] for r in t2.rows]
    assert all(v == 0.0 for v in t1.fitted_lambda.values())
    assert t1.bound_violations() == []


def test_h5_full_window_is_global_seminorm():
    g = TimeGrid(0.0, 1.0, 256)
    X = generate_fbm(5, 0.75, g)
    u = SampledPath.from_function(g, lambda t: np.cos(3 * t))
    drv = DriverOperator(AbstractYoung(NemytskiiMap(np.sin, 1.0, 1.0), X, MultiplierProduct.scalar()), 0.8, 4.0)
    tab = h5_diagnostic(drv, u, [(0, g.n)])
    glob = besov_seminorm(driver_integral(drv, u), BesovIndex(0.8, 4.0), None, "dyadic")
    assert tab.rows[0][2] == pytest.approx(glob**2, rel=1e-12)


def test_h5_abstract_young_consistent_with_estimate():
    g = TimeGrid(0.0, 1.0, 512)
    X = generate_fbm(6, 0.75, g)
    u = SampledPath.from_function(g, lambda t: np.sin(5 * t))
    sigma = NemytskiiMap(np.sin, 1.0, 1.0)
    drv = DriverOperator(AbstractYoung(sigma, X, MultiplierProduct.scalar()), 0.8, 4.0)
    tab = h5_diagnostic(drv, u, dyadic_windows(g.n, 4))
    assert tab.bound_violations() == []
    rhs = (sigma.C + sigma.L) * holder_seminorm(X, 0.8) * (
        1 + u.sup_norm() + besov_seminorm(u, BesovIndex(0.5, 2.0))
    )
    realized = math.sqrt(tab.rows[0][2]) / rhs
    audit = abstract_young_audit(sigma, u, X, MultiplierProduct.scalar(), 4.0, 0.8, remainder_lags=None)
    assert 0.1 <= realized / audit["constant"] <= 10
    lam = tab.fitted_lambda
    assert all(lam[a] <= lam[b] for a, b in zip(sorted(lam), sorted(lam)[1:]))


def test_h6_constant_sequence_gaps_vanish():
    g = TimeGrid(0.0, 1.0, 256)
    X = generate_fbm(7, 0.75, g)
    u = SampledPath.from_function(g, np.cos)
    drv = DriverOperator(AbstractYoung(NemytskiiMap(np.sin, 1.0, 1.0), X, MultiplierProduct.scalar()), 0.8, 4.0)
    tab = h6_diagnostic(drv, [u] * 4, u, levels=[2, 4, 6, 8])
    assert tab.decreasing
    assert tab.gaps[-1] <= 1e-9


def test_h6_perturbed_sequence_gap_scales():
    g = TimeGrid(0.0, 1.0, 256)
    X = SampledPath.from_function(g, lambda t: np.sin(6 * t))
    u = SampledPath.from_function(g, np.cos)
    pert = SampledPath.from_function(g, lambda t: np.sin(11 * t))
    drv = DriverOperator(AbstractYoung(NemytskiiMap(np.sin, 1.0, 1.0), X, MultiplierProduct.scalar()), 0.8, 4.0)
    ks = [1, 2, 4, 8, 16]
    seq = [SampledPath(g, u.values + pert.values / k) for k in ks]
    tab = h6_diagnostic(drv, seq, u, levels=[8] * len(ks))
    assert tab.decreasing
    dists = [1.0 / k for k in ks]
    consts = [gap / dist ** (2 / drv.q) for gap, dist in zip(tab.gaps, dists)]
    assert max(consts) <= 10 * min(consts)
    assert _slope(ks, tab.gaps) >= 2 / drv.q - 0.05


def test_h6_zero_driver():
    g = TimeGrid(0.0, 1.0, 64)
    u = SampledPath.from_function(g, np.cos)
    tab = h6_diagnostic(zero_driver(g, 1), [u, u, u], u)
    assert tab.gaps == [0.0, 0.0, 0.0]


def test_dyadic_windows_tile():
    w = dyadic_windows(64, 3)
    assert w[0] == (0, 64) and len(w) == 1 + 2 + 4 + 8
    assert all(t - s in (64, 32, 16, 8) for s, t in w)
