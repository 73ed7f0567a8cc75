import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_blowup.grid import RadialField, build_grid
from nonlocal_blowup.params import ModelParameters, derive_constants
from nonlocal_blowup.similarity import (
    SimilarityFrame,
    chi0,
    chi0_derivatives,
    compute_q,
    eval_linearization_terms,
    fill_theta_slopes,
    frame_to_csv,
    from_similarity,
    potential_V,
    profile_derivatives,
    profile_phi,
    profile_phi0,
    quadratic_B,
    rest_R,
    to_similarity,
)
from nonlocal_blowup.spectral import project


def test_chi0_plateau_and_support():
    assert np.all(chi0(np.linspace(0, 1, 11)) == 1.0)
    assert np.all(chi0(np.linspace(2, 5, 11)) == 0.0)
    assert np.all(np.diff(chi0(np.linspace(0.5, 2.5, 2001))) <= 0)
    assert np.all(np.diff(chi0(np.linspace(1.1, 1.9, 500))) < 0)
    assert chi0(1.5) == pytest.approx(0.5)


@given(x=st.floats(1.05, 1.95))
@settings(max_examples=50, deadline=None)
def test_chi0_derivatives_match_differences(x):
    h = 1e-5
    d1, d2 = chi0_derivatives(np.array([x]))
    fd1 = (chi0(x + h) - chi0(x - h)) / (2 * h)
    fd2 = (chi0(x + h) - 2 * chi0(x) + chi0(x - h)) / h**2
    assert d1[0] == pytest.approx(fd1, abs=1e-6)
    assert d2[0] == pytest.approx(fd2, abs=1e-3)


@given(z=st.floats(0.0, 30.0))
@settings(max_examples=50, deadline=None)
def test_profile_derivatives(z):
    c = derive_constants(ModelParameters.critical_regime(3.0, 1, 0.02))
    h = 1e-4
    phi0, d1, d1z, d2 = profile_derivatives(z, c)
    assert phi0 == pytest.approx(profile_phi0(z, c), rel=1e-14)
    assert d1 == pytest.approx((profile_phi0(z + h, c) - profile_phi0(z - h, c)) / (2 * h), abs=1e-8)
    assert d2 == pytest.approx(
        (profile_phi0(z + h, c) - 2 * profile_phi0(z, c) + profile_phi0(z - h, c)) / h**2, abs=1e-5
    )
    if z > 1e-300:  # d1 underflows for subnormal z
        assert d1z == pytest.approx(d1 / z, rel=1e-12)


def test_profile_center_is_kappa(classical):
    _, c = classical
    assert profile_phi0(0.0, c) == pytest.approx(c.kappa, rel=1e-15)
    assert profile_phi(0.0, 100.0, c) == pytest.approx(c.kappa + c.a_coef / 100.0, rel=1e-15)
    with pytest.raises(ValueError):
        profile_phi(0.0, 0.0, c)


def test_rest_R_matches_finite_differences(critical):
    _, c = critical
    s, hy, hs = 50.0, 1e-3, 1e-3
    y = np.linspace(0.5, 40.0, 40)
    phi = lambda yy, ss: profile_phi(yy, ss, c)
    dphi_ds = (phi(y, s + hs) - phi(y, s - hs)) / (2 * hs)
    d1 = (phi(y + hy, s) - phi(y - hy, s)) / (2 * hy)
    d2 = (phi(y + hy, s) - 2 * phi(y, s) + phi(y - hy, s)) / hy**2
    p = c.p
    oracle = -dphi_ds + d2 - y * d1 / 2 - phi(y, s) / (p - 1) + phi(y, s) ** p
    assert np.max(np.abs(rest_R(y, s, c) - oracle)) < 1e-6


def test_rest_R_decays_like_inverse_s(critical):
    _, c = critical
    y = np.linspace(0, 30, 301)
    ratio = np.max(np.abs(rest_R(y, 2000.0, c))) / np.max(np.abs(rest_R(y, 1000.0, c)))
    assert ratio == pytest.approx(0.5, abs=0.01)
    # R(0, s)·s → κβ/(p−1), which equals a − 2bNκ/(p−1)²
    k, b, p = c.kappa, c.b_coef, c.p
    limit = k * c.beta / (p - 1)
    assert limit == pytest.approx(c.a_coef - 2 * b * c.N * k / (p - 1) ** 2, rel=1e-12)
    assert rest_R(np.array([0.0]), 1e4, c)[0] * 1e4 == pytest.approx(limit, rel=5e-3)


def test_potential_limits(critical):
    _, c = critical
    p, k = c.p, c.kappa
    s = 1e4
    assert potential_V(np.array([0.0]), s, c)[0] * s == pytest.approx(c.a_coef * p / k, rel=1e-4)
    P0 = project(lambda Y: potential_V(Y[:, 0], s, c), 0) * s
    assert P0 == pytest.approx(c.a_coef * p / k - 2 * c.N * c.b_coef * p / (p - 1) ** 2, rel=5e-3)
    # far field at z = 100: φ → 0 so V → −p/(p−1); the residual is about p/(b z²)
    far = potential_V(np.array([100.0 * math.sqrt(s)]), s, c)[0]
    assert abs(far + p / (p - 1)) < 1e-3


@given(q=st.floats(-0.3, 0.3), phi=st.floats(0.2, 2.0), p=st.floats(1.5, 5.0))
@settings(max_examples=60, deadline=None)
def test_quadratic_B_is_second_order(q, phi, p):
    eps = 1e-3
    b = quadratic_B(eps * q, phi, p) / eps**2
    assert b == pytest.approx(0.5 * p * (p - 1) * phi ** (p - 2) * q * q, abs=1e-3 * (1 + abs(q)))


def _ode_field(c, tau, n=400):
    # spatially constant ODE blowup κ(T−t)^{−1/(p−1)} with θ = 1
    g = build_grid(1.0, n, 1, "origin-refined", min_spacing=1e-6)
    return RadialField(g, np.full(g.n, c.kappa * tau ** (-1.0 / (c.p - 1.0))))


def test_to_similarity_of_ode_solution(classical):
    params, c = classical
    T = 0.3
    t = T - 1e-6
    fr = to_similarity(_ode_field(c, T - t), t, T, 1.0, 10.0, params)
    assert fr.s == pytest.approx(-math.log(1e-6))
    plateau = fr.chi1 == 1.0
    assert np.allclose(fr.W[plateau], c.kappa, rtol=1e-12)
    assert np.all(fr.W <= fr.W_uncut + 1e-15)


@given(logtau=st.floats(-12.0, -2.0), theta=st.floats(0.5, 2.0))
@settings(max_examples=30, deadline=None)
def test_similarity_round_trip(logtau, theta):
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 200, 1, "origin-refined")
    u = RadialField(g, 1.0 + np.cos(g.nodes))
    T = 1.0
    t = T - math.exp(logtau)
    fr = to_similarity(u, t, T, theta, 10.0, params)
    t_back, u_back, ok = from_similarity(fr, T, params)
    assert t_back == pytest.approx(t, abs=1e-15)
    assert np.allclose(u_back.values[ok], u.values[ok], rtol=1e-12)
    assert np.allclose(u_back.grid.nodes, g.nodes, rtol=1e-12)


def test_to_similarity_rejects_late_times(classical):
    params, c = classical
    u = _ode_field(c, 1.0, n=50)
    with pytest.raises(ValueError):
        to_similarity(u, 1.0, 1.0, 1.0, 10.0, params)
    with pytest.raises(ValueError):
        to_similarity(u, 0.5, 1.0, 0.0, 10.0, params)


def test_linearization_on_exact_profile(critical):
    params, c = critical
    s = 40.0
    y = np.linspace(0, 25 * s, 5001)
    W = profile_phi(y, s, c)
    fr = SimilarityFrame(s=s, y_nodes=y, W=W, theta_bar=1.0, W_uncut=W, chi1=chi0(y / (10 * s)), K0=10.0, p=c.p)
    q = compute_q(fr, c)
    assert np.max(np.abs(q)) == 0.0
    terms = eval_linearization_terms(q, fr, c)
    assert np.all(terms.B == 0.0)
    # the cutoff commutator vanishes on the plateau
    assert np.all(terms.F_tilde[y <= 10 * s] == 0.0)
    assert np.any(terms.F_tilde[(y > 10 * s) & (y < 20 * s)] != 0.0)


def test_theta_slopes(critical):
    _, c = critical
    s = np.linspace(20, 40, 41)
    frames = [SimilarityFrame(float(v), np.zeros(3), np.zeros(3), float(v) ** -c.beta) for v in s]
    out = fill_theta_slopes(frames)
    mid = np.array([f.theta_bar_slope for f in out])[1:-1]
    assert np.allclose(mid, -c.beta / s[1:-1], rtol=1e-3)


def test_frame_csv(critical):
    _, c = critical
    y = np.linspace(0, 3, 4)
    fr = SimilarityFrame(np.float64(10.0), y, profile_phi(y, 10.0, c), np.float64(0.9))
    lines = frame_to_csv(fr, c).splitlines()
    assert lines[0] == "# s=10.0 theta_bar=0.9"
    assert lines[1] == "y,W,phi,q"
    assert all(float(row.split(",")[3]) == 0.0 for row in lines[2:])
