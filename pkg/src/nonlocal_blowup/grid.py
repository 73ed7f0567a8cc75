"""Radial grids, fields, volume quadrature, the radial Laplacian and θ.

A radial field u(ρ) on [0, R] stands for the function u(|x|) on the N-ball.
Volume weights integrate the piecewise-linear interpolant of f against the
exact measure |S^{N−1}| ρ^{N−1} dρ, so they sum to |Ω| to rounding error and
integrate functions linear in ρ exactly.

The Laplacian u'' + (N−1)u'/ρ uses three-point differences that are exact
on quadratics for any node spacing.  At ρ = 0 the symmetric limit N·u''(0)
is used with the mirror node u(−h) = u(h); at ρ = R the Neumann condition is
imposed through the mirror node u(R+h) = u(R−h).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import optimize

from .params import ModelParameters, ball_volume, unit_sphere_area

__all__ = [
    "RadialGrid",
    "RadialField",
    "build_grid",
    "integrate_power",
    "compute_theta",
    "laplacian_radial",
    "field_to_csv",
    "field_from_csv",
]

Stretching = Literal["uniform", "origin-refined"]


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes 0 = ρ_0 < ... < ρ_{n−1} = R with N-dimensional volume weights."""

    nodes: np.ndarray
    N: int
    stretching: str = "custom"
    stretch_alpha: float = 0.0

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a radial grid needs at least 3 nodes")
        if nodes[0] != 0.0:
            raise ValueError("first node must be 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def R(self) -> float:
        return float(self.nodes[-1])

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_min(self) -> float:
        return float(self.spacing.min())

    @cached_property
    def volume_weights(self) -> np.ndarray:
        return _hat_weights(self.nodes, self.N)

    @cached_property
    def measure(self) -> float:
        """Σ weights, equal to |Ω| up to rounding."""
        return float(self.volume_weights.sum())

    @cached_property
    def laplacian_bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower, diag, upper) coefficients of the discrete Laplacian.

        ``lower[i]`` multiplies u[i−1] in row i (lower[0] unused) and
        ``upper[i]`` multiplies u[i+1] (upper[n−1] unused).
        """
        return _laplacian_bands(self.nodes, self.N)

    def scaled(self, factor: float) -> "RadialGrid":
        """Grid with every node multiplied by ``factor``."""
        return RadialGrid(self.nodes * factor, self.N, self.stretching, self.stretch_alpha)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Values of a radial function on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.nodes.shape:
            raise ValueError(f"values have shape {vals.shape}, grid has {self.grid.nodes.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values)


def build_grid(
    R: float,
    n_nodes: int,
    N: int,
    stretching: Stretching = "uniform",
    refined_fraction: float = 0.8,
    min_spacing: float | None = None,
) -> RadialGrid:
    """Build a radial grid on [0, R].

    ``origin-refined`` uses ρ(ξ) = R sinh(αξ)/sinh(α), ξ ∈ [0, 1] uniform.
    The stretch α is chosen so that ``refined_fraction`` of the nodes lie in
    ρ <= R/10, or, if ``min_spacing`` is given, so that the first spacing
    equals it.  The map is uniform near the origin and geometric far from
    it, so the relative spacing there is about α/n.
    """
    if n_nodes < 16:
        raise ValueError(f"n_nodes must be at least 16, got {n_nodes}")
    if not R > 0:
        raise ValueError("R must be positive")
    xi = np.linspace(0.0, 1.0, n_nodes)
    if stretching == "uniform":
        nodes = R * xi
        alpha = 0.0
    elif stretching == "origin-refined":
        if min_spacing is not None:
            alpha = _alpha_for_min_spacing(R, n_nodes, min_spacing)
        else:
            alpha = _alpha_for_fraction(refined_fraction)
        if alpha == 0.0:
            nodes = R * xi
        else:
            nodes = R * np.sinh(alpha * xi) / np.sinh(alpha)
    else:
        raise ValueError(f"unknown stretching {stretching!r}")
    nodes[0] = 0.0
    nodes[-1] = R
    return RadialGrid(nodes, int(N), stretching, float(alpha))


def _alpha_for_fraction(fraction: float) -> float:
    if not 0.0 < fraction < 1.0:
        raise ValueError("refined_fraction must lie in (0, 1)")
    if fraction <= 0.1:
        return 0.0
    # sinh(α f)/sinh(α) = 1/10, solved in log form to avoid overflow
    def g(alpha: float) -> float:
        return _log_sinh(alpha * fraction) - _log_sinh(alpha) + math.log(10.0)

    return float(optimize.brentq(g, 1e-8, 700.0, xtol=1e-14))


def _alpha_for_min_spacing(R: float, n: int, h0: float) -> float:
    if not 0 < h0 < R / (n - 1):
        raise ValueError("min_spacing must be positive and below the uniform spacing")
    d = 1.0 / (n - 1)

    def g(alpha: float) -> float:
        return _log_sinh(alpha * d) - _log_sinh(alpha) - math.log(h0 / R)

    return float(optimize.brentq(g, 1e-8, 700.0, xtol=1e-14))


def _log_sinh(x: float) -> float:
    if x > 20:
        return x - math.log(2.0) + math.log1p(-math.exp(-2 * x))
    return math.log(math.sinh(x))


def _hat_weights(nodes: np.ndarray, N: int) -> np.ndarray:
    """∫ hat_i(ρ) ρ^{N−1} dρ times |S^{N−1}|, by exact binomial moments."""
    a = nodes[:-1]
    h = np.diff(nodes)
    left = np.zeros_like(h)
    right = np.zeros_like(h)
    for k in range(N):
        c = math.comb(N - 1, k) * a ** (N - 1 - k) * h ** (k + 1)
        left += c / ((k + 1) * (k + 2))
        right += c / (k + 2)
    w = np.zeros_like(nodes)
    w[:-1] += left
    w[1:] += right
    return w * unit_sphere_area(N)


def _laplacian_bands(x: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = x.size
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    h = np.diff(x)
    h0 = h[0]
    di[0] = -2.0 * N / h0**2
    up[0] = 2.0 * N / h0**2
    hm = h[:-1]
    hp = h[1:]
    rho = x[1:-1]
    s = hm + hp
    lo[1:-1] = 2.0 / (hm * s) - (N - 1) * hp / (rho * hm * s)
    up[1:-1] = 2.0 / (hp * s) + (N - 1) * hm / (rho * hp * s)
    di[1:-1] = -(lo[1:-1] + up[1:-1])
    hl = h[-1]
    lo[-1] = 2.0 / hl**2
    di[-1] = -2.0 / hl**2
    return lo, di, up


def apply_bands(bands: tuple[np.ndarray, np.ndarray, np.ndarray], u: np.ndarray) -> np.ndarray:
    lo, di, up = bands
    out = di * u
    out[1:] += lo[1:] * u[:-1]
    out[:-1] += up[:-1] * u[1:]
    return out


def laplacian_radial(u: RadialField) -> RadialField:
    """Discrete u'' + (N−1)u'/ρ with symmetry at 0 and Neumann data at R."""
    return RadialField(u.grid, apply_bands(u.grid.laplacian_bands, u.values))


def integrate_power(u: RadialField, q: float) -> float:
    """∫_Ω |u|^q dx; fractional q requires u >= 0."""
    if not q > 0:
        raise ValueError("q must be positive")
    vals = u.values
    if float(q) != int(q) and np.any(vals < 0):
        raise ValueError("negative values cannot be raised to a fractional power")
    if q == 1:
        powered = vals
    elif q == 2:
        powered = vals * vals
    else:
        powered = np.power(vals, q)
    return float(np.dot(u.grid.volume_weights, powered))


def compute_theta(u: RadialField, params: ModelParameters) -> float:
    """θ = (|Ω|^{−1} ∫_Ω u^r dx)^{−γ}, with |Ω| taken as the grid measure."""
    if params.gamma == 0.0:
        if not np.any(u.values):
            raise ValueError("theta is undefined for an identically zero field")
        return 1.0
    total = integrate_power(u, params.r)
    if total <= 0.0:
        raise ValueError("theta is undefined for an identically zero field")
    return float((total / u.grid.measure) ** (-params.gamma))


def grid_header(grid: RadialGrid) -> str:
    return (
        f"# radial-field R={float(grid.R)!r} N={grid.N} n={grid.n} "
        f"stretching={grid.stretching} alpha={float(grid.stretch_alpha)!r}"
    )


def field_to_csv(u: RadialField, extra_header: dict[str, object] | None = None) -> str:
    """Two-column CSV ``rho,value`` preceded by ``#`` metadata lines."""
    buf = io.StringIO()
    buf.write(grid_header(u.grid) + "\n")
    for k, v in (extra_header or {}).items():
        buf.write(f"# {k}={(v.item() if isinstance(v, np.generic) else v)!r}\n")
    buf.write("rho,value\n")
    for rho, val in zip(u.grid.nodes, u.values):
        buf.write(f"{float(rho)!r},{float(val)!r}\n")
    return buf.getvalue()


def field_from_csv(text: str) -> tuple[RadialField, dict[str, str]]:
    """Inverse of :func:`field_to_csv`; returns the field and header entries."""
    meta: dict[str, str] = {}
    rows: list[tuple[float, float]] = []
    N = None
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("radial-field"):
                for tok in body.split()[1:]:
                    key, _, val = tok.partition("=")
                    meta[key] = val
                N = int(meta["N"])
            else:
                key, _, val = body.partition("=")
                meta[key.strip()] = val.strip()
            continue
        if not line.strip() or line.startswith("rho"):
            continue
        a, b = line.split(",")
        rows.append((float(a), float(b)))
    if N is None:
        raise ValueError("missing radial-field header")
    arr = np.array(rows)
    grid = RadialGrid(arr[:, 0], N, meta.get("stretching", "custom"), float(meta.get("alpha", "0.0")))
    return RadialField(grid, arr[:, 1]), meta


def ball_measure(params: ModelParameters) -> float:
    return ball_volume(params.N, params.R)
