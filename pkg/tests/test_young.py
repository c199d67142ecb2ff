import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwise_monotone.experiments.scenarios import _slope, heat_energy_residuals
from pathwise_monotone.grid_paths import InnerProduct, SampledPath, TimeGrid, generate_fbm, mollify_path
from pathwise_monotone.young import (
    MultiplierProduct,
    NemytskiiMap,
    YoungError,
    YoungPairInput,
    abstract_young,
    abstract_young_audit,
    bochner_identify,
    chain_rule_residual,
    cumulative_trapezoid,
    energy_identity_residual,
    pair,
    weighted_pairing_bound,
    young_pairing,
    young_stability_ratio,
)

FAST = {"remainder_lags": None}


def fine_quadrature(f, T=1.0, m=2**20):
    """Composite trapezoid rule of a callable on ``m`` cells."""
    s = np.linspace(0.0, T, m + 1)
    v = f(s)
    return float(np.sum(0.5 * (v[:-1] + v[1:])) * T / m)


# --- Young pairing ---------------------------------------------------------------------


def test_constant_integrand_telescopes():
    g = TimeGrid(0.0, 1.0, 256)
    I = generate_fbm(3, 0.6, g)
    S = pair(SampledPath.constant(g, 2.5), I, **FAST)
    np.testing.assert_allclose(S.scalar, 2.5 * (I.scalar - I.scalar[0]), atol=1e-12)
    assert S.scalar[0] == 0.0


def test_smooth_self_pairing_against_fine_quadrature():
    g = TimeGrid(0.0, 1.0, 4096)
    W = lambda t: np.sin(2 * t) + t**2
    dW = lambda t: 2 * np.cos(2 * t) + 2 * t
    S = pair(SampledPath.from_function(g, W), SampledPath.from_function(g, W), **FAST)
    oracle = fine_quadrature(lambda s: W(s) * dW(s))
    assert S.scalar[-1] == pytest.approx(oracle, abs=1e-6)
    assert oracle == pytest.approx(W(1.0) ** 2 / 2, abs=1e-9)


@pytest.mark.parametrize("seed", range(1, 11))
def test_fbm_self_pairing_chain_rule(seed):
    X = generate_fbm(seed, 0.75, TimeGrid(0.0, 1.0, 4096))
    S = pair(X, X, **FAST).scalar[-1]
    x = X.scalar
    exact = 0.5 * (x[-1] ** 2 - x[0] ** 2)
    assert abs(S - exact) <= 1e-3 * max(abs(exact), 1e-3 * np.max(np.abs(x)) ** 2)


def test_fbm_self_pairing_matches_fine_left_sums():
    # left-point sums on a refined grid (the same fBm sample, finer resolution)
    fine = generate_fbm(5, 0.75, TimeGrid(0.0, 1.0, 2**18))
    x = fine.scalar
    left = float(np.sum(x[:-1] * np.diff(x)))
    coarse = SampledPath(TimeGrid(0.0, 1.0, 2**10), fine.values[:: 2**8])
    S = pair(coarse, coarse, **FAST).scalar[-1]
    assert S == pytest.approx(left, abs=2e-2)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 50))
def test_pairing_is_bilinear(a, b, seed):
    g = TimeGrid(0.0, 1.0, 64)
    u1, u2 = generate_fbm(seed, 0.7, g), SampledPath.from_function(g, np.cos)
    I = generate_fbm(seed + 1, 0.7, g)
    u = SampledPath(g, a * u1.values + b * u2.values)
    lhs = pair(u, I, **FAST).scalar
    rhs = a * pair(u1, I, **FAST).scalar + b * pair(u2, I, **FAST).scalar
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_pairing_errors():
    g = TimeGrid(0.0, 1.0, 16)
    u = SampledPath.from_function(g, np.cos)
    with pytest.raises(YoungError, match="different time grids"):
        pair(u, SampledPath.from_function(TimeGrid(0.0, 1.0, 32), np.cos))
    with pytest.raises(YoungError, match="outside Young-eligibility"):
        young_pairing(YoungPairInput(u, u, alpha=0.3, beta=0.4))
    with pytest.raises(YoungError, match="outside Young-eligibility"):
        young_pairing(YoungPairInput(u, u, alpha=0.6, p=1.0, beta=0.6, q=1.0))


def test_stability_ratio_is_finite():
    g = TimeGrid(0.0, 1.0, 1024)
    u = SampledPath.from_function(g, lambda t: 1 + np.cos(4 * t))
    ratios = [
        young_stability_ratio(YoungPairInput(u, generate_fbm(s, 0.7, g), alpha=1.0, beta=0.65, q=4.0), **FAST)
        for s in range(3)
    ]
    assert all(0 < r < 10 for r in ratios)


# --- abstract Young integrals ------------------------------------------------------------


def test_constant_sigma_returns_increments():
    g = TimeGrid(0.0, 1.0, 128)
    X = generate_fbm(2, 0.7, g)
    u = generate_fbm(3, 0.7, g)
    one = NemytskiiMap(lambda v: np.ones_like(v), 1.0, 0.0, "one")
    out = abstract_young(one, u, X, MultiplierProduct.scalar(), 4.0, 0.8, **FAST)
    np.testing.assert_allclose(out.scalar, X.scalar - X.scalar[0], atol=1e-12)


def test_identity_sigma_against_quadrature():
    g = TimeGrid(0.0, 1.0, 4096)
    u = SampledPath.from_function(g, lambda t: np.cos(3 * t))
    beta = SampledPath.from_function(g, lambda t: np.sin(2 * t))
    ident = NemytskiiMap(lambda v: v, 1.0, 1.0, "id")
    out = abstract_young(ident, u, beta, MultiplierProduct.scalar(), 4.0, 1.0, **FAST)
    oracle = fine_quadrature(lambda s: np.cos(3 * s) * 2 * np.cos(2 * s))
    assert out.scalar[-1] == pytest.approx(oracle, abs=1e-6)


def test_sine_sigma_with_smooth_integrator_matches_bochner_sum():
    n = 2**15
    g = TimeGrid(0.0, 1.0, n)
    x = (np.arange(16) + 0.5) / 16
    ip = InnerProduct.weighted(np.full(16, 1 / 16))
    u = SampledPath(g, np.sin(np.pi * x)[None, :] * np.cos(2 * g.times)[:, None] + g.times[:, None])
    X = mollify_path(generate_fbm(7, 0.7, g), 6)
    sigma = NemytskiiMap(np.sin, 1.0, 1.0, "sin")
    out = abstract_young(sigma, u, X, MultiplierProduct.scalar(), 4.0, 1.0, **FAST)
    xdot = np.diff(X.scalar) / g.dt
    direct = np.sum(np.sin(u.values[:-1]) * xdot[:, None] * g.dt, axis=0)
    assert ip.norm(out.values[-1] - direct) <= 1e-4


def test_abstract_young_eligibility_and_dimension_errors():
    g = TimeGrid(0.0, 1.0, 16)
    u = SampledPath.from_function(g, np.cos)
    ident = NemytskiiMap(lambda v: v, 1.0, 1.0)
    with pytest.raises(YoungError, match="outside Young-eligibility"):
        abstract_young(ident, u, u, MultiplierProduct.scalar(), 2.0, 0.5)
    with pytest.raises(YoungError, match="product expects"):
        abstract_young(ident, u, SampledPath(g, np.zeros((17, 2))), MultiplierProduct.scalar(), 2.0, 0.75)


def test_abstract_young_audit_constant_finite():
    g = TimeGrid(0.0, 1.0, 512)
    u = SampledPath.from_function(g, lambda t: np.sin(3 * t))
    X = generate_fbm(1, 0.75, g)
    rep = abstract_young_audit(NemytskiiMap(np.sin, 1.0, 1.0), u, X, MultiplierProduct.scalar(), 4.0, 0.8, **FAST)
    assert 0 < rep["constant"] < 10


def test_map_and_product_spot_checks():
    assert NemytskiiMap(np.sin, 1.0, 1.0).spot_check(8) == []
    assert NemytskiiMap(lambda v: 3 * v, 1.0, 1.0).spot_check(8)
    assert MultiplierProduct.pointwise(5).spot_check(5) == []
    assert MultiplierProduct.scalar().spot_check(3) == []


# --- Bochner identification ----------------------------------------------------------------


def test_bochner_linear_integrator_constant_integrand():
    g = TimeGrid(0.0, 1.0, 128)
    rep = bochner_identify(SampledPath.constant(g, 1.7), SampledPath.from_function(g, lambda t: 3 * t), **FAST)
    assert rep.max_gap <= 1e-12


def test_bochner_quadratic_integrator():
    g = TimeGrid(0.0, 1.0, 4096)
    rep = bochner_identify(SampledPath.from_function(g, np.cos), SampledPath.from_function(g, lambda t: t**2), **FAST)
    assert rep.max_gap <= 1e-5


def test_bochner_gap_first_order():
    ns = [256, 512, 1024, 2048]
    gaps = []
    for n in ns:
        g = TimeGrid(0.0, 1.0, n)
        u = SampledPath.from_function(g, lambda t: np.exp(t))
        I = SampledPath.from_function(g, lambda t: np.sin(5 * t))
        gaps.append(bochner_identify(u, I, **FAST).max_gap)
    assert 0.9 <= _slope(ns, gaps) <= 2.1


# --- energy identity and chain rule --------------------------------------------------------


def test_energy_identity_trivial():
    g = TimeGrid(0.0, 1.0, 32)
    X = SampledPath.constant(g, [1.0, -2.0])
    Z = SampledPath.constant(g, [0.0, 0.0])
    res = energy_identity_residual(X.values[0], Z, Z, X, **FAST)
    assert np.max(np.abs(res.scalar)) == 0.0


def test_energy_identity_fbm():
    X = generate_fbm(4, 0.75, TimeGrid(0.0, 1.0, 2**14))
    Y = SampledPath(X.grid, np.zeros_like(X.values))
    res = energy_identity_residual(X.values[0], Y, X, X, **FAST)
    assert abs(res.scalar[-1]) <= 1e-3 * X.sup_norm() ** 2


def test_energy_identity_heat_flow_refinement():
    ns = (64, 128, 256)
    res = heat_energy_residuals(ns)
    assert res[0] > res[1] > res[2]
    assert all(r <= 20.0 / n for r, n in zip(res, ns))
    assert 0.9 <= _slope(ns, res) <= 2.1


def test_chain_rule_identity_map():
    g = TimeGrid(0.0, 1.0, 1024)
    X = generate_fbm(2, 0.7, g)
    b = SampledPath.from_function(g, np.sin)
    res = chain_rule_residual(
        lambda t, y: y, lambda t, y: np.zeros_like(y), lambda t, y: np.ones_like(y), 0.3, b, X, X, **FAST
    )
    assert np.max(np.abs(res.scalar)) <= 1e-10


def test_chain_rule_exponential_weight_fbm():
    lam = 1.5
    g = TimeGrid(0.0, 1.0, 2**14)
    I = generate_fbm(6, 0.8, g)
    b = SampledPath(g, np.zeros((g.n + 1, 1)))
    one = SampledPath.constant(g, 1.0)
    res = chain_rule_residual(
        lambda t, y: np.exp(-lam * t) * y,
        lambda t, y: -lam * np.exp(-lam * t) * y,
        lambda t, y: np.exp(-lam * t),
        0.0, b, one, I, **FAST,
    )
    assert abs(res.scalar[-1]) <= 1e-3


def test_chain_rule_duhamel_closed_form():
    g = TimeGrid(0.0, 1.0, 4096)
    b = SampledPath.from_function(g, np.cos)
    zero = SampledPath(g, np.zeros((g.n + 1, 1)))
    F = lambda t, y: np.exp(-t) * y
    res = chain_rule_residual(F, lambda t, y: -np.exp(-t) * y, lambda t, y: np.exp(-t), 0.5, b, zero, zero, **FAST)
    assert np.max(np.abs(res.scalar)) <= 1e-6
    # F(T, y_T) against the closed form exp(-T)(y0 + sin T)
    y = 0.5 + cumulative_trapezoid(b.scalar, g.dt)
    assert F(1.0, y[-1]) == pytest.approx(np.exp(-1.0) * (0.5 + np.sin(1.0)), abs=1e-6)


# --- exponentially weighted pairing ----------------------------------------------------


def test_weighted_pairing_zero_integrand():
    g = TimeGrid(0.0, 1.0, 64)
    rep = weighted_pairing_bound(SampledPath.constant(g, 0.0), generate_fbm(1, 0.7, g), 2.0, 4.0, 0.6, **FAST)
    assert rep.sup_value == 0.0 and rep.constant == 0.0


def test_weighted_pairing_without_weight_is_young_pairing():
    g = TimeGrid(0.0, 1.0, 1024)
    u = SampledPath.from_function(g, lambda t: np.cos(2 * t))
    I = generate_fbm(2, 0.75, g)
    rep = weighted_pairing_bound(u, I, 0.0, 4.0, 0.7, **FAST)
    S = pair(u, I, **FAST).scalar
    assert np.max(np.abs(rep.dual - S)) <= 1e-6
    assert rep.route_gap <= 1e-6


def test_weighted_pairing_smooth_against_quadrature():
    lam = 2.0
    g = TimeGrid(0.0, 1.0, 4096)
    u = SampledPath.from_function(g, np.cos)
    I = SampledPath.from_function(g, lambda t: np.sin(3 * t))
    rep = weighted_pairing_bound(u, I, lam, 4.0, 1.0, **FAST)
    oracle = fine_quadrature(lambda s: np.exp(lam * (1 - s)) * 3 * np.cos(3 * s) * np.cos(s))
    assert rep.direct[-1] == pytest.approx(oracle, abs=1e-6)
    assert rep.dual[-1] == pytest.approx(oracle, abs=1e-6)


def test_weighted_pairing_constant_stable_across_mollification():
    g = TimeGrid(0.0, 1.0, 1024)
    u = SampledPath.from_function(g, lambda t: 1 + 0.5 * np.sin(4 * t))
    rough = generate_fbm(3, 0.7, g)
    consts = [
        weighted_pairing_bound(u, mollify_path(rough, lvl), 1.0, 4.0, 0.65, **FAST).constant
        for lvl in range(4, 11)
    ]
    assert all(np.isfinite(consts))
    assert max(consts) / min(consts) <= 3.0


def test_weighted_pairing_rejects_negative_rate():
    g = TimeGrid(0.0, 1.0, 8)
    u = SampledPath.constant(g, 1.0)
    with pytest.raises(YoungError):
        weighted_pairing_bound(u, u, -1.0, 2.0, 0.5)
