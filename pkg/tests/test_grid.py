import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_blowup.grid import (
    RadialField,
    RadialGrid,
    build_grid,
    compute_theta,
    field_from_csv,
    field_to_csv,
    integrate_power,
    laplacian_radial,
)
from nonlocal_blowup.params import ModelParameters, ball_volume


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("stretching", ["uniform", "origin-refined"])
def test_weights_sum_to_ball_volume(N, stretching):
    g = build_grid(1.5, 400, N, stretching)
    assert g.measure == pytest.approx(ball_volume(N, 1.5), rel=1e-13)
    assert np.all(g.volume_weights > 0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_linear_functions_integrate_exactly(N):
    g = build_grid(1.0, 57, N, "origin-refined")
    u = RadialField(g, 2.0 + 3.0 * g.nodes)
    area = ball_volume(N, 1.0) * N
    exact = area * (2.0 / N + 3.0 / (N + 1))
    assert integrate_power(u, 1.0) == pytest.approx(exact, rel=1e-12)


def test_quadrature_second_order():
    errs = []
    for n in (100, 200, 400):
        g = build_grid(1.0, n, 2, "uniform")
        u = RadialField(g, 1.0 + g.nodes**2)
        errs.append(abs(integrate_power(u, 1.0) - 1.5 * math.pi))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_laplacian_exact_on_even_quadratic(N):
    g = build_grid(1.0, 300, N, "origin-refined")
    lap = laplacian_radial(RadialField(g, 1.0 + g.nodes**2))
    # the last row applies the Neumann mirror, which r² does not satisfy
    assert np.max(np.abs(lap.values[:-1] - 2.0 * N)) < 1e-6 * g.n**2


def test_laplacian_neumann_eigenfunction():
    # cos(πρ) has zero slope at 0 and 1; in 1D Δ cos = −π² cos
    g = build_grid(1.0, 801, 1, "uniform")
    lap = laplacian_radial(RadialField(g, np.cos(math.pi * g.nodes)))
    assert np.max(np.abs(lap.values + math.pi**2 * np.cos(math.pi * g.nodes))) < 1e-4


@given(c=st.floats(0.1, 50.0), r=st.floats(0.5, 3.0), gamma=st.floats(0.0, 0.05))
@settings(max_examples=50, deadline=None)
def test_theta_of_constant(c, r, gamma):
    params = ModelParameters(p=3.0, r=r, gamma=gamma, N=1)
    g = build_grid(1.0, 50, 1)
    assert compute_theta(RadialField(g, np.full(g.n, c)), params) == pytest.approx(c ** (-r * gamma), rel=1e-12)


def test_origin_refined_has_requested_spacing():
    g = build_grid(1.0, 2000, 1, "origin-refined", min_spacing=1e-6)
    assert g.h_min == pytest.approx(1e-6, rel=1e-6)
    assert np.all(np.diff(g.spacing) > -1e-15)


def test_csv_round_trip():
    g = build_grid(1.0, 64, 3, "origin-refined")
    u = RadialField(g, np.exp(-g.nodes))
    back, meta = field_from_csv(field_to_csv(u, {"tag": "x", "s": np.float64(2.5)}))
    assert np.array_equal(back.values, u.values)
    assert np.array_equal(back.grid.nodes, g.nodes)
    assert back.grid.N == 3
    assert float(meta["s"]) == 2.5


def test_scaled_grid():
    g = build_grid(1.0, 16, 2)
    assert g.scaled(3.0).R == pytest.approx(3.0)


@pytest.mark.parametrize("nodes", [[0.0, 1.0], [0.1, 0.5, 1.0], [0.0, 0.5, 0.4]])
def test_bad_nodes(nodes):
    with pytest.raises(ValueError):
        RadialGrid(np.array(nodes), 1)


def test_field_checks():
    g = build_grid(1.0, 16, 1)
    with pytest.raises(ValueError):
        RadialField(g, np.zeros(15))
    with pytest.raises(ValueError):
        RadialField(g, np.full(16, np.nan))
    with pytest.raises(ValueError):
        build_grid(1.0, 10, 1)
