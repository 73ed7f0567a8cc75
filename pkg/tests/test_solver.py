import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_blowup.grid import RadialField, build_grid
from nonlocal_blowup.params import ModelParameters, derive_constants
from nonlocal_blowup.solver import (
    SolverConfig,
    adaptive_dt,
    estimate_blowup_time,
    initial_state,
    load_checkpoint,
    run_to_blowup,
    save_checkpoint,
    step,
)


def bernoulli(t, c, p):
    """Solution of u' = −u + u^p, u(0) = c."""
    w0 = c ** (1.0 - p)
    return (1.0 + (w0 - 1.0) * np.exp((p - 1.0) * t)) ** (-1.0 / (p - 1.0))


def bernoulli_time(c, p):
    return -math.log(1.0 - c ** (1.0 - p)) / (p - 1.0)


@pytest.mark.parametrize("p,c", [(3.0, 2.0), (2.0, 3.0)])
def test_constant_data_follow_ode(p, c):
    params = ModelParameters(p=p, r=1.0, gamma=0.0, N=2)
    g = build_grid(1.0, 40, 2)
    rec = run_to_blowup(RadialField(g, np.full(g.n, c)), params, SolverConfig(scheme="imex-rk2", dt_fixed=2e-5, M_stop=1e5))
    ts = bernoulli_time(c, p)
    m = rec.times < 0.9 * ts
    assert np.max(np.abs(rec.sup[m] / bernoulli(rec.times[m], c, p) - 1.0)) < 1e-6
    assert rec.blew_up
    assert abs(rec.T_est - ts) / ts < 1e-4


def test_time_order_of_imex_rk2():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 40, 1)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        st_ = initial_state(RadialField(g, np.full(g.n, 1.5)), params, dt)
        while st_.t < 0.1 - 1e-12:
            st_ = step(st_, "imex-rk2")
        errs.append(abs(st_.u.values[0] - bernoulli(st_.t, 1.5, 3.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


@given(T=st.floats(0.05, 5.0), p=st.floats(1.5, 5.0))
@settings(max_examples=40, deadline=None)
def test_estimator_recovers_synthetic_T(T, p):
    t = np.linspace(0.0, T * (1 - 1e-5), 300)
    sup = (T - t) ** (-1.0 / (p - 1.0))
    T_est, unc = estimate_blowup_time(t, sup, p)
    assert abs(T_est - T) <= 1e-10 * T
    assert unc >= 0


def test_estimator_rejects_bad_tails():
    t = np.linspace(0, 1, 30)
    with pytest.raises(ValueError):
        estimate_blowup_time(t, np.ones(30), 3.0)
    with pytest.raises(ValueError):
        estimate_blowup_time(t[:5], np.arange(5.0) + 1, 3.0)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_positivity_is_preserved(seed):
    rng = np.random.default_rng(seed)
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 64, 1)
    u = RadialField(g, rng.uniform(0.0, 3.0, g.n))
    state = initial_state(u, params)
    for scheme in ("imex", "imex-rk2"):
        s = state
        for _ in range(20):
            s = step(type(s)(s.t, s.u, s.theta, adaptive_dt(s, 0.05, scheme), s.step_count, s.params), scheme)
        assert np.all(s.u.values >= 0.0)


def test_small_data_decay_is_reported():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 32, 1)
    rec = run_to_blowup(RadialField(g, np.full(g.n, 0.5)), params)
    assert not rec.blew_up
    assert "decay" in rec.message
    assert math.isnan(rec.T_est)


def test_bump_blows_up_with_trusted_snapshots():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 600, 1, "origin-refined")
    u = RadialField(g, 10.0 * np.exp(-g.nodes**2 / 0.01))
    rec = run_to_blowup(u, params, SolverConfig(scheme="imex-rk2", safety=0.05))
    assert rec.blew_up
    assert rec.T_uncertainty < 1e-8
    assert len(rec.trusted_snapshots()) >= 5
    assert np.all(np.diff(rec.times) > 0)
    assert rec.theta_at(-1.0) == rec.theta[0]
    with pytest.raises(ValueError):
        rec.theta_at(rec.times[-1] + 1.0)


def test_critical_theta_is_recomputed():
    params = ModelParameters.critical_regime(3.0, 1, 0.02)
    g = build_grid(1.0, 64, 1)
    u = RadialField(g, np.full(g.n, 2.0))
    s = step(initial_state(u, params, 1e-3), "imex")
    assert s.theta == pytest.approx(float(np.mean(s.u.values)) ** -0.02, rel=1e-6)


def test_checkpoint_round_trip(critical):
    params, c = critical
    g = build_grid(1.0, 50, 1, "origin-refined")
    s = step(initial_state(RadialField(g, 1.0 + g.nodes), params, 1e-3), "imex-rk2")
    back = load_checkpoint(save_checkpoint(s, c))
    assert back.t == s.t and back.dt == s.dt and back.theta == s.theta
    assert back.step_count == s.step_count
    assert back.params == params
    assert np.array_equal(back.u.values, s.u.values)


def test_step_validation():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    g = build_grid(1.0, 20, 1)
    s = initial_state(RadialField(g, np.ones(g.n)), params)
    with pytest.raises(ValueError):
        step(s, "imex")
    with pytest.raises(ValueError):
        step(initial_state(s.u, params, 1e-3), "rk4")
    with pytest.raises(ValueError):
        adaptive_dt(s, 1.5)
    with pytest.raises(ValueError):
        initial_state(RadialField(g, -np.ones(g.n)), params)


def test_explicit_dt_respects_diffusion_limit():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=3)
    g = build_grid(1.0, 100, 3)
    s = initial_state(RadialField(g, np.ones(g.n)), params)
    assert adaptive_dt(s, 0.5, "explicit-euler") <= 0.5 * g.h_min**2 / 6.0 + 1e-18


def test_classical_constants_without_integrable_mass():
    c = derive_constants(ModelParameters(p=3.0, r=1.0, gamma=0.0, N=3))
    assert c.theta_inf == 1.0 and c.beta == 0.0
    assert math.isnan(c.profile_mass)
