"""Self-similar variables, the blowup profile and the linearized error terms.

With T the blowup time,

    y = x/√(T−t),   s = −ln(T−t),
    W(y, s) = (T−t)^{1/(p−1)} θ(t)^{1/(p−1)} χ₁(x, t) u(x, t),

where χ₁(x, t) = χ₀(|x| / (K₀ √(T−t) |ln(T−t)|)) = χ₀(|y| / (K₀ s)).  The
profile is φ(y, s) = φ0(y/√s) + a/s with φ0(z) = (p−1 + b z²)^{−1/(p−1)},
and q = W − φ.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid import RadialField, RadialGrid
from .params import DerivedConstants, ModelParameters

__all__ = [
    "chi0",
    "SimilarityFrame",
    "ProfileSpec",
    "LinearizationTerms",
    "to_similarity",
    "from_similarity",
    "profile_phi0",
    "profile_phi",
    "profile_derivatives",
    "compute_q",
    "eval_linearization_terms",
    "fill_theta_slopes",
    "frame_to_csv",
]


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi0(xi) -> np.ndarray:
    """Smooth cutoff: 1 on [0, 1], 0 on [2, ∞), C^∞ and decreasing in between.

    χ₀(ξ) = g(2−ξ) / (g(2−ξ) + g(ξ−1)),  g(t) = exp(−1/t) for t > 0, else 0.
    """
    x = np.abs(np.asarray(xi, dtype=float))
    a = _bump(2.0 - x)
    b = _bump(x - 1.0)
    return a / (a + b)


def chi0_derivatives(xi) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of χ₀ on ξ >= 0, in closed form."""
    x = np.abs(np.asarray(xi, dtype=float))
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    m = (x > 1.0) & (x < 2.0)
    if np.any(m):
        u = 2.0 - x[m]
        v = x[m] - 1.0
        # χ = 1/(1 + e^{h}), h = 1/u − 1/v ; dh/dx = 1/u² + 1/v²
        h = 1.0 / u - 1.0 / v
        hp = 1.0 / u**2 + 1.0 / v**2
        hpp = 2.0 / u**3 - 2.0 / v**3
        with np.errstate(over="ignore"):
            e = np.exp(np.clip(h, -700, 700))
        c = 1.0 / (1.0 + e)
        # χ' = −c(1−c) h', χ'' = −c(1−c)(1−2c) h'^2 ... sign from d/dx of c(1−c)
        cc = c * (1.0 - c)
        d1[m] = -cc * hp
        d2[m] = -cc * hpp + cc * (1.0 - 2.0 * c) * hp**2
    return d1, d2


@dataclass(frozen=True)
class ProfileSpec:
    """φ(y, s) = (p−1 + b|y|²/s)^{−1/(p−1)} + a/s for given constants."""

    constants: DerivedConstants

    def phi0(self, z):
        return profile_phi0(z, self.constants)

    def phi(self, y, s):
        return profile_phi(y, s, self.constants)


@dataclass
class SimilarityFrame:
    """A physical snapshot viewed in similarity variables.

    ``W`` includes the cutoff χ₁; ``W_uncut`` is the same rescaling without
    it and ``chi1`` holds the cutoff values on the nodes.
    """

    s: float
    y_nodes: np.ndarray
    W: np.ndarray
    theta_bar: float
    theta_bar_slope: float = math.nan
    W_uncut: np.ndarray | None = field(default=None, repr=False)
    chi1: np.ndarray | None = field(default=None, repr=False)
    K0: float = math.nan
    p: float = math.nan
    N: int = 1

    @property
    def tau(self) -> float:
        """T − t."""
        return math.exp(-self.s)


def to_similarity(
    u: RadialField, t: float, T_est: float, theta: float, K0: float, params: ModelParameters
) -> SimilarityFrame:
    """Rescale a physical field to (y, s) variables around blowup time T_est."""
    if not t < T_est:
        raise ValueError(f"t = {t!r} is not before T_est = {T_est!r}")
    if not theta > 0:
        raise ValueError("theta must be positive")
    p = params.p
    tau = T_est - t
    s = -math.log(tau)
    sq = math.sqrt(tau)
    y = u.grid.nodes / sq
    scale = (tau * theta) ** (1.0 / (p - 1.0))
    W_uncut = scale * u.values
    if s > 0:
        chi1 = chi0(y / (K0 * s))
    else:
        chi1 = np.ones_like(y)
    return SimilarityFrame(
        s=s,
        y_nodes=y,
        W=chi1 * W_uncut,
        theta_bar=theta,
        W_uncut=W_uncut,
        chi1=chi1,
        K0=K0,
        p=p,
        N=u.grid.N,
    )


def from_similarity(frame: SimilarityFrame, T_est: float, params: ModelParameters) -> tuple[float, RadialField, np.ndarray]:
    """Invert :func:`to_similarity`.

    Returns (t, u, reliable) where ``reliable`` marks nodes on the cutoff
    plateau (χ₁ = 1); elsewhere the values are divided by a cutoff below
    one, and where χ₁ = 0 they are set to 0.
    """
    tau = math.exp(-frame.s)
    t = T_est - tau
    x = frame.y_nodes * math.sqrt(tau)
    grid = RadialGrid(x, frame.N)
    chi1 = chi0(frame.y_nodes / (frame.K0 * frame.s)) if frame.s > 0 else np.ones_like(x)
    scale = (tau * frame.theta_bar) ** (1.0 / (params.p - 1.0))
    vals = np.zeros_like(x)
    nz = chi1 > 0
    vals[nz] = frame.W[nz] / (chi1[nz] * scale)
    return t, RadialField(grid, vals), chi1 == 1.0


def profile_phi0(z, constants: DerivedConstants):
    """φ0(z) = (p−1 + b z²)^{−1/(p−1)}."""
    p = constants.p
    z = np.asarray(z, dtype=float)
    return (p - 1.0 + constants.b_coef * z * z) ** (-1.0 / (p - 1.0))


def profile_phi(y, s: float, constants: DerivedConstants):
    """φ(y, s) = φ0(|y|/√s) + a/s."""
    if not s > 0:
        raise ValueError("s must be positive")
    y = np.asarray(y, dtype=float)
    return profile_phi0(y / math.sqrt(s), constants) + constants.a_coef / s


def profile_derivatives(z, constants: DerivedConstants):
    """(φ0, φ0', φ0'/z, φ0'') in closed form; φ0'/z is regular at z = 0."""
    p = constants.p
    b = constants.b_coef
    e = 1.0 / (p - 1.0)
    z = np.asarray(z, dtype=float)
    g = p - 1.0 + b * z * z
    phi0 = g ** (-e)
    d1_over_z = -2.0 * b * e * g ** (-e - 1.0)
    d1 = d1_over_z * z
    d2 = d1_over_z + 4.0 * b * b * z * z * e * (e + 1.0) * g ** (-e - 2.0)
    return phi0, d1, d1_over_z, d2


def compute_q(frame: SimilarityFrame, constants: DerivedConstants) -> np.ndarray:
    """q = W − φ(·, s) on the frame's nodes."""
    return frame.W - profile_phi(frame.y_nodes, frame.s, constants)


@dataclass
class LinearizationTerms:
    V: np.ndarray
    B: np.ndarray
    R: np.ndarray
    G: np.ndarray
    F_tilde: np.ndarray


def potential_V(y, s: float, constants: DerivedConstants) -> np.ndarray:
    """V = p(φ^{p−1} − 1/(p−1))."""
    p = constants.p
    phi = profile_phi(y, s, constants)
    return p * (phi ** (p - 1.0) - 1.0 / (p - 1.0))


def quadratic_B(q, phi, p: float) -> np.ndarray:
    """B(q) = (q+φ)^p − φ^p − pφ^{p−1}q."""
    q = np.asarray(q, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (q + phi) ** p - phi**p - p * phi ** (p - 1.0) * q


def rest_R(y, s: float, constants: DerivedConstants) -> np.ndarray:
    """R = −∂sφ + Δφ − y·∇φ/2 − φ/(p−1) + φ^p from the closed-form derivatives."""
    p = constants.p
    N = constants.N
    a = constants.a_coef
    y = np.abs(np.asarray(y, dtype=float))
    z = y / math.sqrt(s)
    phi0, d1, d1z, d2 = profile_derivatives(z, constants)
    phi = phi0 + a / s
    dphi_ds = -z * d1 / (2.0 * s) - a / s**2
    lap = (d2 + (N - 1) * d1z) / s
    drift = z * d1 / 2.0
    return -dphi_ds + lap - drift - phi / (p - 1.0) + phi**p


def eval_linearization_terms(q, frame: SimilarityFrame, constants: DerivedConstants) -> LinearizationTerms:
    """V, B(q), R and G on the frame's nodes.

    G = (θ̄'/θ̄/(p−1) − e^{−s})(q+φ) + F̃, where F̃ is the cutoff commutator

        F̃ = −W̃ Δχ − 2 ∇χ·∇W̃ + W̃^p (χ − χ^p),  χ(y) = χ₀(|y|/(K₀ s)),

    with W̃ the uncut rescaled field.  ∇W̃ uses centered differences on the
    nodes; χ derivatives are exact.
    """
    p = constants.p
    N = constants.N
    y = frame.y_nodes
    s = frame.s
    q = np.asarray(q, dtype=float)
    phi = profile_phi(y, s, constants)
    V = potential_V(y, s, constants)
    B = quadratic_B(q, phi, p)
    R = rest_R(y, s, constants)

    F_tilde = np.zeros_like(y)
    if frame.W_uncut is not None and math.isfinite(frame.K0):
        Wt = frame.W_uncut
        L = frame.K0 * s
        c1, c2 = chi0_derivatives(y / L)
        chi = chi0(y / L)
        dchi = c1 / L
        with np.errstate(divide="ignore", invalid="ignore"):
            lap_chi = c2 / L**2 + np.where(y > 0, (N - 1) * dchi / y, 0.0)
        dW = np.gradient(Wt, y, edge_order=2)
        F_tilde = -Wt * lap_chi - 2.0 * dchi * dW + Wt**p * (chi - chi**p)

    slope = frame.theta_bar_slope if math.isfinite(frame.theta_bar_slope) else 0.0
    G = (slope / (p - 1.0) - math.exp(-s)) * (q + phi) + F_tilde
    return LinearizationTerms(V=V, B=B, R=R, G=G, F_tilde=F_tilde)


def fill_theta_slopes(frames: Sequence[SimilarityFrame]) -> list[SimilarityFrame]:
    """Set d(ln θ̄)/ds on each frame by centered differences in s."""
    n = len(frames)
    if n < 2:
        return [replace(f) for f in frames]
    s = np.array([f.s for f in frames])
    lt = np.log(np.array([f.theta_bar for f in frames]))
    slopes = np.gradient(lt, s)
    return [replace(f, theta_bar_slope=float(k)) for f, k in zip(frames, slopes)]


def frame_to_csv(frame: SimilarityFrame, constants: DerivedConstants) -> str:
    phi = profile_phi(frame.y_nodes, frame.s, constants)
    buf = io.StringIO()
    buf.write(f"# s={float(frame.s)!r} theta_bar={float(frame.theta_bar)!r}\n")
    buf.write("y,W,phi,q\n")
    for y, w, f in zip(frame.y_nodes, frame.W, phi):
        buf.write(",".join(repr(float(v)) for v in (y, w, f, w - f)) + "\n")
    return buf.getvalue()
