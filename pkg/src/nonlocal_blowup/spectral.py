"""Hermite projections in L²_ρ and the shrinking-set mode decomposition.

The weight is ρ(y) = Π_i e^{−y_i²/4}/√(4π), and the Hermite family is

    h_m(y) = Σ_{n≤m/2} m!/(n!(m−2n)!) (−1)^n y^{m−2n},

so that h_0 = 1, h_1 = y, h_2 = y² − 2, h_3 = y³ − 6y and
⟨h_m, h_n⟩_ρ = 2^m m! δ_mn.  In N dimensions h_β(y) = Π h_{β_i}(y_i).

Integrals against ρ use Gauss–Hermite nodes for e^{−x²/2} mapped by
y = √2 x, so a rule of order n is exact for polynomials of degree 2n − 1.
Radial samples are interpolated by a cubic spline with zero slope at the
origin; outside the sampled range the function is taken to be zero.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from scipy.interpolate import CubicSpline

from .similarity import chi0

__all__ = [
    "hermite_h",
    "hermite_norm_sq",
    "ModeDecomposition",
    "ShrinkingSetConfig",
    "ClauseResult",
    "ShrinkingSetReport",
    "QuadratureOrderError",
    "project",
    "decompose",
    "reconstruct",
    "shrinking_set_check",
    "modes_to_csv",
]

MAX_DEGREE = 5
DEFAULT_ORDER = 48


class QuadratureOrderError(ValueError):
    """The Gauss–Hermite rule cannot resolve the requested multi-index."""


def hermite_h(m: int, y):
    """h_m(y), the Hermite polynomial orthogonal under e^{−y²/4}."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for n in range(m // 2 + 1):
        c = math.factorial(m) / (math.factorial(n) * math.factorial(m - 2 * n)) * (-1) ** n
        out = out + c * y ** (m - 2 * n)
    return out


def hermite_norm_sq(beta: Sequence[int]) -> float:
    """‖h_β‖²_ρ = Π 2^{β_i} β_i!."""
    return float(np.prod([2.0**b * math.factorial(b) for b in beta]))


def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = hermite_e.hermegauss(order)
    return math.sqrt(2.0) * x, w / math.sqrt(2.0 * math.pi)


def _tensor_rule(order: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    y1, w1 = _rule(order)
    if N == 1:
        return y1[:, None], w1
    grids = np.meshgrid(*([y1] * N), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w1] * N), indexing="ij"):
        wts = wts * g.ravel()
    return pts, wts


@dataclass(frozen=True)
class _Sampled:
    """A function given by samples, radial (y >= 0) or on the full line."""

    y: np.ndarray
    values: np.ndarray
    radial: bool

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        if self.radial:
            r = np.sqrt(np.sum(pts * pts, axis=1))
            spline = CubicSpline(self.y, self.values, bc_type=((1, 0.0), "not-a-knot"))
        else:
            r = pts[:, 0]
            spline = CubicSpline(self.y, self.values)
        out = spline(r)
        out[(r > self.y[-1]) | (r < self.y[0])] = 0.0
        return out


def _as_callable(f, y_nodes, N: int) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f):
        return f
    if y_nodes is None:
        raise ValueError("sampled input needs y_nodes")
    y = np.asarray(y_nodes, dtype=float)
    vals = np.asarray(f, dtype=float)
    if y.shape != vals.shape:
        raise ValueError("samples and y_nodes differ in shape")
    radial = bool(y[0] >= 0.0)
    if not radial and N != 1:
        raise ValueError("full-line samples are only supported for N = 1")
    return _Sampled(y, vals, radial)


def _check_order(beta: Sequence[int], order: int, max_degree: int) -> None:
    if sum(beta) > max_degree:
        raise QuadratureOrderError(f"|beta| = {sum(beta)} exceeds the maximum degree {max_degree}")
    # The integrand is h_β times a smooth function; keep the polynomial
    # part well inside the exactness range 2·order − 1.
    if 2 * max(beta) + 8 > 2 * order - 1:
        raise QuadratureOrderError(f"order {order} is too low for beta = {tuple(beta)}")


def project(
    f,
    beta: Sequence[int] | int,
    y_nodes=None,
    N: int = 1,
    order: int = DEFAULT_ORDER,
    max_degree: int = MAX_DEGREE,
) -> float:
    """P_β(f) = ⟨f, h_β⟩_ρ / ‖h_β‖²_ρ.

    ``f`` is either a callable taking points of shape (M, N) or an array of
    samples on ``y_nodes`` (radial if y_nodes[0] >= 0, full line otherwise).
    """
    if isinstance(beta, (int, np.integer)):
        beta = (int(beta),)
    beta = tuple(int(b) for b in beta)
    if len(beta) != N:
        raise ValueError(f"multi-index {beta} does not match N = {N}")
    _check_order(beta, order, max_degree)
    fn = _as_callable(f, y_nodes, N)
    pts, wts = _tensor_rule(order, N)
    hb = np.ones(pts.shape[0])
    for i, b in enumerate(beta):
        if b:
            hb = hb * hermite_h(b, pts[:, i])
    return float(np.dot(wts, fn(pts) * hb) / hermite_norm_sq(beta))


@dataclass
class ModeDecomposition:
    """q = q0 + q1·y + yᵀq2y − 2Tr(q2) + q_minus + q_e on the sample grid.

    ``q_perp`` is the bulk part minus its degree ≤ 1 projection and
    ``grad_perp`` its radial derivative.
    """

    q0: float
    q1: np.ndarray
    q2: np.ndarray
    q_minus: np.ndarray
    q_perp: np.ndarray
    q_e: np.ndarray
    s: float
    K0: float
    y_nodes: np.ndarray = field(repr=False)
    grad_perp: np.ndarray = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return int(self.q1.size)

    def sup_minus(self) -> float:
        return float(np.max(np.abs(self.q_minus) / (1.0 + np.abs(self.y_nodes) ** 3)))

    def sup_grad_perp(self) -> float:
        if self.grad_perp is None:
            return math.nan
        return float(np.max(np.abs(self.grad_perp) / (1.0 + np.abs(self.y_nodes) ** 3)))

    def sup_exterior(self) -> float:
        return float(np.max(np.abs(self.q_e)))


def _bulk_cutoff(y: np.ndarray, s: float, K0: float) -> np.ndarray:
    return chi0(np.abs(y) / (K0 * math.sqrt(s)))


def _low_modes_on_nodes(y: np.ndarray, q0: float, q1: np.ndarray, q2: np.ndarray, degree: int) -> np.ndarray:
    """Degree ≤ 1 or ≤ 2 polynomial part evaluated on radial or 1-D nodes.

    Radial nodes stand for points r·e_1, which is exact for the radially
    symmetric part (q1 = 0, q2 ∝ I) the solver produces.
    """
    out = np.full_like(y, q0) + q1[0] * y
    if degree >= 2:
        out += q2[0, 0] * y * y - 2.0 * np.trace(q2)
    return out


def decompose(
    q,
    y_nodes,
    s: float,
    K0: float,
    N: int = 1,
    order: int = DEFAULT_ORDER,
) -> ModeDecomposition:
    """Split q into q0, q1, q2, q_−, q_⊥ and q_e.

    r_b = χ(·, s) q with χ = χ₀(|y|/(K₀√s)) and q_e = (1 − χ) q; the modes
    are P_β(r_b).  Radial samples give q1 = 0 up to quadrature error.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    y = np.asarray(y_nodes, dtype=float)
    qv = np.asarray(q, dtype=float)
    chi = _bulk_cutoff(y, s, K0)
    rb = chi * qv
    qe = (1.0 - chi) * qv
    fn = _as_callable(rb, y, N)
    radial = bool(y[0] >= 0.0)

    zero = (0,) * N
    q0 = project(fn, zero, N=N, order=order)
    q1 = np.zeros(N)
    q2 = np.zeros((N, N))
    for i in range(N):
        e = [0] * N
        e[i] = 1
        q1[i] = project(fn, e, N=N, order=order)
        e2 = [0] * N
        e2[i] = 2
        q2[i, i] = project(fn, e2, N=N, order=order)
        for j in range(i + 1, N):
            eij = [0] * N
            eij[i] = eij[j] = 1
            v = 0.5 * project(fn, eij, N=N, order=order)
            q2[i, j] = q2[j, i] = v
    if radial:
        # odd modes of a radial function vanish identically
        q1[:] = 0.0
        off = ~np.eye(N, dtype=bool)
        q2[off] = 0.0
    q_perp = rb - _low_modes_on_nodes(y, q0, q1, q2, 1)
    q_minus = rb - _low_modes_on_nodes(y, q0, q1, q2, 2)
    grad_perp = np.gradient(q_perp, y, edge_order=2)
    return ModeDecomposition(
        q0=q0,
        q1=q1,
        q2=q2,
        q_minus=q_minus,
        q_perp=q_perp,
        q_e=qe,
        s=float(s),
        K0=float(K0),
        y_nodes=y,
        grad_perp=grad_perp,
    )


def reconstruct(dec: ModeDecomposition) -> np.ndarray:
    """Inverse of :func:`decompose` on its sample grid."""
    y = dec.y_nodes
    return _low_modes_on_nodes(y, dec.q0, dec.q1, dec.q2, 2) + dec.q_minus + dec.q_e


@dataclass(frozen=True)
class ShrinkingSetConfig:
    A: float = 4.0
    K0: float = 10.0
    epsilon0: float = 0.1
    alpha0: float = 1.0
    delta0: float = 0.1
    C0: float = 1.0
    eta0: float = 0.1

    def __post_init__(self) -> None:
        for name in ("A", "K0", "epsilon0", "alpha0", "delta0", "C0", "eta0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive real, got {v!r}")
        if self.A < 1 or self.K0 < 1:
            raise ValueError("A and K0 must be at least 1")


@dataclass(frozen=True)
class ClauseResult:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)

    @property
    def margin(self) -> float:
        """bound/value; ∞ when the value is zero."""
        return math.inf if self.value == 0 else self.bound / self.value


@dataclass
class ShrinkingSetReport:
    s: float
    stage: str
    clauses: list[ClauseResult]
    global_constants: dict[str, float]

    @property
    def member(self) -> bool:
        return all(c.passed for c in self.clauses)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.clauses if not c.passed]

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"shrinking-set check ({self.stage}) at s = {self.s:.6g}: {'member' if self.member else 'outside'}"]
        for c in self.clauses:
            lines.append(f"  {c.name:10s} {c.value:.4e} <= {c.bound:.4e}  {'pass' if c.passed else 'FAIL'}  margin {c.margin:.3g}")
        for k, v in self.global_constants.items():
            lines.append(f"  {k} = {v:.4e}")
        return "\n".join(lines)


def shrinking_set_check(
    dec: ModeDecomposition,
    cfg: ShrinkingSetConfig,
    grad_perp_bound: float | None = None,
    stage: str = "running",
) -> ShrinkingSetReport:
    """Compare a decomposition with the shrinking-set bounds at s = dec.s.

    ``stage="running"`` uses the bounds of the set itself; ``"initial"`` the
    stricter ones met by the prepared data (q2 ≤ 1/s², q_−, ∇q_⊥ ≤
    (1+|y|³)/s², q_e ≤ 1/√s).  ``grad_perp_bound`` overrides the measured
    sup |∇q_⊥|/(1+|y|³).  The reported global constants are the measured
    ratios sup|q|√s/A⁷ and sup(|q|/(1+|y|³)) s^{3/2}/A⁷.
    """
    s = dec.s
    if s < 1:
        raise ValueError("the shrinking-set bounds need s >= 1")
    A = cfg.A
    if stage == "running":
        b2, bm, be = A**4 / s**1.5, A**6 / s**2, A**7 / math.sqrt(s)
    elif stage == "initial":
        b2, bm, be = 1.0 / s**2, 1.0 / s**2, 1.0 / math.sqrt(s)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    gp = dec.sup_grad_perp() if grad_perp_bound is None else float(grad_perp_bound)
    clauses = [
        ClauseResult("q0", abs(dec.q0), A**3 / s**1.5),
        ClauseResult("q1", float(np.max(np.abs(dec.q1))) if dec.q1.size else 0.0, A / s**2),
        ClauseResult("q2", float(np.max(np.abs(dec.q2))) if dec.q2.size else 0.0, b2),
        ClauseResult("q_minus", dec.sup_minus(), bm),
        ClauseResult("grad_perp", gp, bm),
        ClauseResult("q_e", dec.sup_exterior(), be),
    ]
    q = reconstruct(dec)
    y = dec.y_nodes
    glob = {
        "C_sup": float(np.max(np.abs(q))) * math.sqrt(s) / A**7,
        "C_weighted": float(np.max(np.abs(q) / (1.0 + np.abs(y) ** 3))) * s**1.5 / A**7,
    }
    return ShrinkingSetReport(s=s, stage=stage, clauses=clauses, global_constants=glob)


def modes_to_csv(decs: Sequence[ModeDecomposition]) -> str:
    """Mode time series: s, q0, q1_i, q2_ij (i <= j), sup|q_−|/(1+|y|³), sup|q_e|."""
    buf = io.StringIO()
    N = decs[0].N if decs else 1
    cols = ["s", "q0"] + [f"q1_{i}" for i in range(N)]
    cols += [f"q2_{i}{j}" for i, j in itertools.combinations_with_replacement(range(N), 2)]
    cols += ["q_minus_weighted", "q_e_sup"]
    buf.write(",".join(cols) + "\n")
    for d in decs:
        row = [d.s, d.q0, *d.q1]
        row += [d.q2[i, j] for i, j in itertools.combinations_with_replacement(range(N), 2)]
        row += [d.sup_minus(), d.sup_exterior()]
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
