import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import closed_form_profile
from santafe_lob.params import ModelParams
from santafe_lob.theory import (METRICS_COLUMNS, DomainTooSmall, GridProfile, NoConvergence,
                                TheoryProfile, best_price_pdf, boltzmann_rhs, diffusion_theory,
                                image_profile, impact_from_profile, jump_kernel, kernel_grid,
                                km_coefficient, profile_from_params, solve_boltzmann_steady,
                                spread_from_profile, stationary_profile, theory_metrics,
                                write_theory_metrics)

LARGE = ModelParams(10000.0, 1.0, 99.0, 1e-6, 10**6)
BASE = ModelParams(10000.0, 1.0, 1.0, 1e-6, 10**6)


def surrogate(p, div=1000, span=40):
    eps = p.epsilon
    return GridProfile.constant(p.lam / (p.v + p.mu), eps / div, span * eps)


# -- closed forms -------------------------------------------------------------

def test_stationary_profile_values():
    tp = TheoryProfile.of(LARGE)
    assert math.isclose(tp.D_theory, 0.02) and math.isclose(tp.decay_rate, math.sqrt(50))
    assert stationary_profile(LARGE, 0.0) == pytest.approx(100.0)
    assert stationary_profile(LARGE, 0.1) == pytest.approx(10000 - 9900 * math.exp(-0.1 * math.sqrt(50)))
    assert abs(stationary_profile(LARGE, 0.1) - 5118.62) < 0.01
    assert stationary_profile(LARGE, 50.0) == pytest.approx(1e4)
    assert math.isclose(tp.decay_rate ** 2 * tp.D_theory, LARGE.v)


def test_stationary_matches_independent_formula():
    r = np.linspace(0, 2, 101)
    assert np.allclose(stationary_profile(LARGE, r), closed_form_profile(1e4, 1, 99, r), rtol=1e-14)
    with pytest.raises(ValueError):
        stationary_profile(LARGE, -1.0)


def test_image_profile_limits_and_bound():
    assert image_profile(LARGE, 0.0) == 0.0
    assert image_profile(LARGE, 100.0) == pytest.approx(1e4)
    p = ModelParams(1e4, 1.0, 1000.0, 1e-6, 10)
    r = np.linspace(0, 20 * math.sqrt(diffusion_theory(p)), 20001)
    gap = np.max(np.abs(stationary_profile(p, r) - image_profile(p, r))) / (p.lam / p.v)
    assert gap <= 2 * p.v / p.mu


def test_theory_metrics_columns():
    m = theory_metrics(BASE)
    assert (m.spread, m.impact, m.D) == pytest.approx((2e-4, 1e-4, 1.6e-7))
    z = theory_metrics(BASE.with_mu(0.0))
    assert (z.spread, z.impact, z.D) == pytest.approx((1 / 1e4, 1 / 2e4, 2 / 1e8))
    mu = 50.0
    big = theory_metrics(ModelParams(1e4, 1e-6 * mu, mu, 1e-6, 10))
    assert (big.spread, big.impact, big.D) == pytest.approx((mu / 1e4, mu / 2e4, 2 * mu**3 / 1e8), rel=1e-5)


@given(lam=st.floats(1.0, 1e6), v=st.floats(1e-3, 1e3), ratio=st.floats(0.0, 1e3), k=st.floats(0.1, 10.0))
def test_scaling_collapse(lam, v, ratio, k):
    def scaled(l):
        p = ModelParams(l, v, ratio * v, 1e-6, 10)
        m, eps = theory_metrics(p), p.epsilon
        return m.spread / eps, m.impact / eps, m.D / (eps**2 * (p.v + p.mu))

    assert scaled(lam) == pytest.approx(scaled(k * lam), rel=1e-12)


@given(mu=st.floats(0.0, 500.0), r=st.lists(st.floats(0, 5), min_size=2, max_size=20))
def test_stationary_monotone(mu, r):
    p = LARGE.with_mu(mu)
    r = np.sort(np.array(r))
    vals = stationary_profile(p, r)
    assert np.all(np.diff(vals) >= -1e-9 * p.lam)


def test_decay_rate_constant():
    tp = TheoryProfile.of(BASE)
    h = BASE.epsilon / 100
    r = np.arange(0, 200) * h
    gap = tp.rho_inf - tp(r)
    rate = -np.diff(np.log(gap)) / h
    assert np.allclose(rate, tp.decay_rate, rtol=1e-8)


@pytest.mark.parametrize("p", [BASE, LARGE, BASE.with_mu(0.1)])
def test_diffusive_ode_residual(p):
    tp = TheoryProfile.of(p)
    h = p.epsilon / 100
    r = np.arange(2, 400) * h
    f = lambda x: tp(x)
    # five-point second derivative
    d2 = (-f(r - 2 * h) + 16 * f(r - h) - 30 * f(r) + 16 * f(r + h) - f(r + 2 * h)) / (12 * h * h)
    res = p.lam - p.v * f(r) + tp.D_theory * d2
    assert np.max(np.abs(res)) <= 1e-8 * p.lam


# -- grid profile ---------------------------------------------------------------

@given(vals=st.lists(st.floats(0, 1e4), min_size=2, max_size=50), h=st.floats(1e-4, 1.0))
def test_cumulative_is_trapezoid(vals, h):
    g = GridProfile(h, np.array(vals))
    direct = [math.fsum(0.5 * h * (vals[i] + vals[i + 1]) for i in range(j)) for j in range(len(vals))]
    assert np.allclose(g.cumulative, direct, rtol=1e-12, atol=1e-12 * max(1.0, sum(vals) * h))
    assert np.all(np.diff(g.cumulative) >= 0)


def test_domain_too_small():
    g = GridProfile.constant(100.0, 1e-3, 0.05)  # exp(-5) left over
    with pytest.raises(DomainTooSmall):
        kernel_grid(g, BASE)
    with pytest.raises(DomainTooSmall):
        spread_from_profile(g)


# -- kernel and moments ---------------------------------------------------------

def test_kernel_on_constant_surrogate():
    p = BASE
    g = surrogate(p)
    rho0 = p.lam / (p.v + p.mu)
    k = kernel_grid(g, p)
    y = k.y_plus[1:]
    assert np.allclose(k.minus[1:], p.lam * np.exp(-rho0 * y), rtol=1e-6)
    assert np.allclose(k.plus[1:], (p.mu + p.v) * rho0 * np.exp(-rho0 * y), rtol=1e-6)
    pts = np.array([-3e-4, -1e-4, 1e-4, 3e-4])
    want = np.where(pts < 0, p.lam * np.exp(rho0 * pts), (p.mu + p.v) * rho0 * np.exp(-rho0 * pts))
    assert np.allclose(jump_kernel(g, p, pts), want, rtol=1e-5)
    with pytest.raises(ValueError):
        jump_kernel(g, p, [0.0])


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(0, 3e4), min_size=5, max_size=40), mu=st.floats(0, 10))
def test_kernel_non_negative(vals, mu):
    p = BASE.with_mu(mu)
    h = p.epsilon / 10
    arr = np.array(vals + [p.lam / p.v] * 400)
    k = kernel_grid(GridProfile(h, arr, rho_far=p.lam / p.v), p)
    assert np.all(k.minus >= 0) and np.all(k.plus >= 0)


def test_km_identities_on_surrogate():
    import time

    p = BASE
    t = time.perf_counter()
    g = surrogate(p)
    A = km_coefficient(g, p, 1)
    D = km_coefficient(g, p, 2)
    assert time.perf_counter() - t < 1.0
    assert abs(A) <= 1e-6 * (p.v + p.mu) * p.epsilon
    assert abs(D / diffusion_theory(p) - 1) <= 1e-4
    p2 = ModelParams(2 * p.lam, p.v, p.mu, p.delta, p.cutoff)
    D2 = km_coefficient(surrogate(p2), p2, 2)
    assert D2 / D == pytest.approx(0.25, rel=1e-6)
    with pytest.raises(ValueError):
        km_coefficient(g, p, 3)


# -- kinetic equation -----------------------------------------------------------

def test_rhs_flat_profile_without_market_orders():
    p = BASE.with_mu(0.0)
    eps = p.epsilon
    g = GridProfile.constant(p.lam / p.v, eps / 10, 60 * eps)
    rhs = boltzmann_rhs(g, p)
    beyond = g.r > 20 * eps + 1e-12
    # past the kernel reach the submission/cancellation balance is exact and the jump term cancels
    assert np.max(np.abs(rhs[beyond])) < 1e-9 * p.lam
    # near the opposite best the jump term sees no asks below zero
    assert rhs[1] < 0


def test_jump_term_vanishes_on_uniform_extension():
    p = BASE
    eps = p.epsilon
    rho = p.lam / p.v
    g = GridProfile.constant(rho, eps / 10, 60 * eps)
    k = kernel_grid(g, p)
    rhs = boltzmann_rhs(g, p, kernel=k)
    local = p.lam - g.values * (p.v + p.mu * np.exp(-g.cumulative))
    inside = g.r > 20 * eps + 1e-12
    assert np.allclose((rhs - local)[inside], 0.0, atol=1e-9 * p.lam)


def test_rhs_on_closed_form_is_small():
    p = LARGE
    eps = p.epsilon
    R = 20 * math.sqrt(diffusion_theory(p) / p.v)
    g = profile_from_params(p, eps / 10, R)
    rhs = boltzmann_rhs(g, p)
    m = (g.r >= 3 * eps) & (g.r <= R / 2)
    assert np.max(np.abs(rhs[m])) <= 0.05 * p.lam


def test_solver_without_market_orders():
    p = BASE.with_mu(0.0)
    R = 20 * math.sqrt(diffusion_theory(p) / p.v)
    s = solve_boltzmann_steady(p, p.epsilon / 10, R)
    assert s.residual_history[-1] < 1e-6
    assert s.values[0] == p.lam / p.v
    assert abs(s.values[-1] / (p.lam / p.v) - 1) < 1e-3
    far = s.r > 0.5 * R
    assert np.allclose(s.values[far], p.lam / p.v, rtol=1e-3)


def test_solver_reports_no_convergence():
    p = LARGE
    R = 20 * math.sqrt(diffusion_theory(p) / p.v)
    with pytest.raises(NoConvergence) as exc:
        solve_boltzmann_steady(p, p.epsilon / 10, R, max_iter=3)
    e = exc.value
    assert e.max_iter == 3 and len(e.history) == 3 and e.profile is not None
    assert e.residual == e.history[-1]


def test_solver_preconditions():
    p = LARGE
    R = 20 * math.sqrt(diffusion_theory(p) / p.v)
    with pytest.raises(ValueError):
        solve_boltzmann_steady(p, p.epsilon / 5, R)
    with pytest.raises(ValueError):
        solve_boltzmann_steady(p, p.epsilon / 10, R / 2)


# -- best-price functionals ------------------------------------------------------

def test_best_price_pdf_normalised():
    p = LARGE
    R = 20 * math.sqrt(diffusion_theory(p) / p.v)
    g = profile_from_params(p, p.epsilon / 1000, R)
    P = best_price_pdf(g)
    total = float(np.sum(0.5 * g.grid_step * (P[1:] + P[:-1])))
    assert abs(total - (1 - g.tail_mass)) < 1e-6
    assert np.all(P >= 0) and g.r[np.argmax(P)] >= 0


def test_surrogate_spread_and_impact():
    p = BASE
    g = surrogate(p)
    rho0 = p.lam / (p.v + p.mu)
    assert np.allclose(best_price_pdf(g), rho0 * np.exp(-rho0 * g.r), rtol=1e-12)
    assert abs(spread_from_profile(g) / p.epsilon - 1) < 1e-6
    assert abs(impact_from_profile(g) / (p.epsilon / 2) - 1) < 1e-4


def test_spread_on_closed_form_profile():
    # close to eps while mu << v; the rising profile pulls the best ask in as mu/v grows
    ratios = []
    for mu in (0.0, 0.1, 1.0, 99.0):
        p = BASE.with_mu(mu)
        R = 20 * math.sqrt(diffusion_theory(p) / p.v)
        ratios.append(spread_from_profile(profile_from_params(p, p.epsilon / 50, R)) / p.epsilon)
    assert abs(ratios[0] - 1) < 1e-4 and abs(ratios[1] - 1) < 0.1
    assert ratios == sorted(ratios, reverse=True) and ratios[-1] < 0.5


def test_theory_metrics_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_theory_metrics(path, [BASE, BASE.with_mu(0.0)])
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    vals = [float(x) for x in lines[1].split(",")]
    m = theory_metrics(BASE)
    assert vals[4:] == [m.spread, m.impact, m.D]
