import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e

from nonlocal_blowup.spectral import (
    ModeDecomposition,
    QuadratureOrderError,
    ShrinkingSetConfig,
    _rule,
    decompose,
    hermite_h,
    hermite_norm_sq,
    modes_to_csv,
    project,
    reconstruct,
    shrinking_set_check,
)


@pytest.mark.parametrize("m", range(7))
def test_hermite_matches_probabilists_family(m):
    y = np.linspace(-6, 6, 41)
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    ref = 2.0 ** (m / 2) * hermite_e.hermeval(y / math.sqrt(2.0), coef)
    assert np.allclose(hermite_h(m, y), ref, rtol=1e-12, atol=1e-9)


def test_gram_matrix():
    y, w = _rule(48)
    H = np.array([hermite_h(m, y) for m in range(6)])
    G = (H * w) @ H.T
    diag = np.array([2.0**m * math.factorial(m) for m in range(6)])
    assert np.allclose(np.diag(G), diag, rtol=1e-12)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-10


@given(
    beta=st.lists(st.integers(0, 3), min_size=1, max_size=3).filter(lambda b: sum(b) <= 5),
    other=st.lists(st.integers(0, 3), min_size=3, max_size=3),
)
@settings(max_examples=40, deadline=None)
def test_projection_is_biorthogonal(beta, other):
    N = len(beta)
    gamma = other[:N]
    if sum(gamma) > 5:
        gamma = [0] * N

    def h(b):
        return lambda Y: np.prod([hermite_h(bi, Y[:, i]) for i, bi in enumerate(b)], axis=0)

    val = project(h(beta), gamma, N=N, order=16)
    assert val == pytest.approx(1.0 if list(beta) == list(gamma) else 0.0, abs=1e-10)


def test_hermite_norms():
    assert hermite_norm_sq((2, 1)) == 16.0
    assert hermite_norm_sq((0,)) == 1.0


def test_p1_and_p3_of_cubic():
    cube = lambda Y: Y[:, 0] ** 3
    assert project(cube, 1) == pytest.approx(6.0, rel=1e-12)
    assert project(cube, 3) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_radial_h2_gives_identity_q2(N):
    y = np.linspace(0, 60, 3001)
    q = y**2 - 2.0 * N
    dec = decompose(q, y, s=100.0, K0=10.0, N=N)
    assert dec.q0 == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(dec.q2, np.eye(N), atol=1e-9)
    assert np.all(dec.q1 == 0.0)


@given(c0=st.floats(-5, 5), c2=st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_plateau_polynomial_round_trip(c0, c2):
    # a degree-2 polynomial on the plateau is captured by (q0, q2) alone
    y = np.linspace(0, 400, 4001)
    q = c0 + c2 * (y**2 - 2.0)
    dec = decompose(q, y, s=100.0, K0=10.0)
    assert dec.q0 == pytest.approx(c0, abs=1e-8)
    assert dec.q2[0, 0] == pytest.approx(c2, abs=1e-8)
    assert np.max(np.abs(reconstruct(dec) - q)) < 1e-8 * (1 + np.max(np.abs(q)))
    inner = y <= 10.0 * math.sqrt(100.0)
    assert np.max(np.abs(dec.q_minus[inner])) < 1e-8 * (1 + abs(c0) + abs(c2))


def test_full_line_samples():
    y = np.linspace(-40, 40, 4001)
    dec = decompose(2.0 + 3.0 * y, y, s=50.0, K0=10.0)
    assert dec.q0 == pytest.approx(2.0, abs=1e-9)
    assert dec.q1[0] == pytest.approx(3.0, abs=1e-9)


def test_order_checks():
    with pytest.raises(QuadratureOrderError):
        project(lambda Y: Y[:, 0], 6)
    with pytest.raises(QuadratureOrderError):
        project(lambda Y: Y[:, 0], 4, order=6)
    with pytest.raises(ValueError):
        project(lambda Y: Y[:, 0], (1, 0))
    with pytest.raises(ValueError):
        project(np.ones(3), 0)


def _dec(q0=0.0, q2=0.0, s=100.0):
    y = np.linspace(0, 50, 11)
    z = np.zeros_like(y)
    return ModeDecomposition(q0, np.zeros(1), np.array([[q2]]), z, z, z, s, 10.0, y, z)


def test_shrinking_set_bounds():
    cfg = ShrinkingSetConfig(A=4.0)
    s = 100.0
    at = shrinking_set_check(_dec(q0=4.0**3 / s**1.5, s=s), cfg)
    assert at.member and at.clause("q0").margin == pytest.approx(1.0)
    above = shrinking_set_check(_dec(q0=1.01 * 4.0**3 / s**1.5, s=s), cfg)
    assert not above.member and above.failed == ["q0"]
    # q2 = 1e-3 is inside the running bound A⁴/s^{3/2} but not the initial 1/s²
    assert shrinking_set_check(_dec(q2=1e-3), cfg).member
    assert shrinking_set_check(_dec(q2=1e-3), cfg, stage="initial").failed == ["q2"]
    assert "member" in at.to_text()
    with pytest.raises(KeyError):
        at.clause("nope")


def test_shrinking_set_validation():
    with pytest.raises(ValueError):
        shrinking_set_check(_dec(s=0.5), ShrinkingSetConfig())
    with pytest.raises(ValueError):
        shrinking_set_check(_dec(), ShrinkingSetConfig(), stage="late")
    for kw in (dict(A=0.5), dict(K0=-1.0), dict(delta0=0.0), dict(eta0=math.inf)):
        with pytest.raises(ValueError):
            ShrinkingSetConfig(**kw)


def test_modes_csv_columns():
    y = np.linspace(0, 40, 801)
    dec = decompose(y**2 - 4.0, y, s=20.0, K0=10.0, N=2)
    lines = modes_to_csv([dec]).splitlines()
    assert lines[0] == "s,q0,q1_0,q1_1,q2_00,q2_01,q2_11,q_minus_weighted,q_e_sup"
    assert len(lines) == 2
