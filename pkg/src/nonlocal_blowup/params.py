"""Model parameters and the derived blowup constants.

The model is

    u_t = Δu − u + θ(t) u^p,    θ(t) = (mean over Ω of u^r)^(−γ),

on the N-ball of radius R with homogeneous Neumann data.  This module
computes the constants that describe the log-corrected blowup: the profile
constant b, the θ decay exponent β, the limit θ∞ of θ(t)|ln(T−t)|^β and the
mass-growth constant B, together with the bubble integrals

    I(b, p, N, k) = ∫₀^∞ (p − 1 + b ξ²)^(−k−N/2) ξ^(N−1) dξ

that enter them.  The bubble integrals have a closed recursion and an
independent adaptive-quadrature oracle.

Measure convention
------------------
``unit_sphere_area(N)`` is |S^{N−1}| (2 for N = 1, 2π for N = 2, 4π for
N = 3) and ``ball_volume(N, R)`` is |S^{N−1}| R^N / N.  For N = 1 the "ball"
is the interval [−R, R], so |Ω| = 2R.

The mass constant B is built from the full N-dimensional integral of the
profile power, |S^{N−1}|·I, so that θ∞ matches the value of θ measured on
an actual radial field.  Passing ``sphere_factor=False`` to
:func:`derive_constants` drops |S^{N−1}| and uses the bare radial integral.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

__all__ = [
    "ModelParameters",
    "DerivedConstants",
    "derive_constants",
    "bubble_integral",
    "bubble_integral_real",
    "bubble_integral_quadrature",
    "fixed_point_residual",
    "unit_sphere_area",
    "ball_volume",
    "QuadratureError",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature exhausted its refinement budget."""


def unit_sphere_area(N: int) -> float:
    """Surface area |S^{N−1}| of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def ball_volume(N: int, R: float) -> float:
    """Volume of the N-ball of radius R (length 2R when N = 1)."""
    return unit_sphere_area(N) * R**N / N


@dataclass(frozen=True)
class ModelParameters:
    """Exponents and domain of the nonlocal problem.

    Parameters
    ----------
    p : float
        Reaction exponent, p > 1.
    r : float
        Exponent inside the nonlocal mean, r > 0.
    gamma : float
        Nonlocal exponent, 0 <= γ < 2/N.
    N : int
        Space dimension.
    R : float
        Radius of the ball Ω.
    critical : bool
        When True the constructor insists on r = N(p−1)/2 and p >= 3.
    gamma_warn : float
        Threshold above which a warning is issued; the asymptotics only
        hold for small γ and no quantitative bound is known.
    """

    p: float
    r: float
    gamma: float
    N: int
    R: float = 1.0
    critical: bool = False
    gamma_warn: float = 0.05

    def __post_init__(self) -> None:
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if self.gamma > 0 and self.gamma * self.N / 2.0 >= 1.0:
            raise ValueError(
                f"gamma*N/2 must be < 1 (got {self.gamma * self.N / 2.0}); "
                "beta and theta_inf are undefined otherwise"
            )
        if self.critical:
            r_crit = self.N * (self.p - 1.0) / 2.0
            if abs(self.r - r_crit) > 1e-12 * max(1.0, r_crit):
                raise ValueError(
                    f"critical regime requires r = N(p-1)/2 = {r_crit}, got r = {self.r}"
                )
            if self.p < 3:
                raise ValueError(f"critical regime requires p >= 3, got {self.p}")
        if self.gamma > self.gamma_warn:
            warnings.warn(
                f"gamma = {self.gamma} exceeds the small-gamma threshold {self.gamma_warn}; "
                "the predicted asymptotics may not apply",
                stacklevel=2,
            )

    @classmethod
    def critical_regime(cls, p: float, N: int, gamma: float, R: float = 1.0, **kw) -> "ModelParameters":
        """Parameters with r = N(p−1)/2."""
        return cls(p=p, r=N * (p - 1.0) / 2.0, gamma=gamma, N=N, R=R, critical=True, **kw)

    @property
    def domain_measure(self) -> float:
        """|Ω| for the ball of radius R."""
        return ball_volume(self.N, self.R)

    @property
    def is_critical(self) -> bool:
        return abs(self.r - self.N * (self.p - 1.0) / 2.0) <= 1e-12 * max(1.0, self.r)

    @property
    def mass_exponent(self) -> float:
        """(p − 1 + r)/(p − 1), the power of the profile in the mass integrand."""
        return (self.p - 1.0 + self.r) / (self.p - 1.0)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the log-corrected blowup for one parameter set."""

    params: ModelParameters
    kappa: float
    beta: float
    b_coef: float
    nu: float
    a_coef: float
    theta_inf: float
    B_const: float
    profile_mass: float = field(default=float("nan"))
    sphere_factor: bool = True
    theta_inf_crosscheck: float = field(default=float("nan"))

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def N(self) -> int:
        return self.params.N

    def as_dict(self) -> dict[str, float]:
        return {
            "kappa": self.kappa,
            "beta": self.beta,
            "b_coef": self.b_coef,
            "nu": self.nu,
            "a_coef": self.a_coef,
            "theta_inf": self.theta_inf,
            "B_const": self.B_const,
            "profile_mass": self.profile_mass,
        }

    def to_text(self) -> str:
        """Flat ``key = value`` block with round-trippable floats."""
        lines = [f"{k} = {(v.item() if isinstance(v, np.generic) else v)!r}" for k, v in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def bubble_integral(b: float, p: float, N: int, k: int) -> float:
    """Closed form of ∫₀^∞ (p−1+bξ²)^(−k−N/2) ξ^(N−1) dξ for integer k >= 1.

    Uses I_1 = 1/((p−1) N b^{N/2}) and
    I_{k+1} = k / ((p−1)(k + N/2)) · I_k.
    """
    _check_bubble_args(b, p, N)
    if int(k) != k or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k}")
    value = 1.0 / ((p - 1.0) * N * b ** (N / 2.0))
    for j in range(1, int(k)):
        value *= j / ((p - 1.0) * (j + N / 2.0))
    return value


def bubble_integral_real(b: float, p: float, N: int, k: float) -> float:
    """Bubble integral for real k > 0 via the Beta function.

    ∫₀^∞ (a + bξ²)^(−k−N/2) ξ^(N−1) dξ = ½ b^{−N/2} a^{−k} B(N/2, k), a = p−1.
    """
    _check_bubble_args(b, p, N)
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    return 0.5 * b ** (-N / 2.0) * (p - 1.0) ** (-k) * special.beta(N / 2.0, k)


def _check_bubble_args(b: float, p: float, N: int) -> None:
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")


def bubble_integral_quadrature(
    b: float, p: float, N: int, k: float, tol: float = 1e-10, max_subdivisions: int = 200
) -> float:
    """Adaptive-quadrature oracle for the bubble integral.

    The half line is cut at ξ_max where the integrand falls below tol/100;
    [0, ξ_max] is integrated by QUADPACK on geometrically growing panels and
    the tail beyond ξ_max is summed from the convergent binomial series of
    (bξ²)^(−c) (1 + a/(bξ²))^(−c), c = k + N/2.
    """
    _check_bubble_args(b, p, N)
    if not (0 < tol <= 1e-4):
        raise ValueError(f"tol must lie in (0, 1e-4], got {tol}")
    a = p - 1.0
    c = k + N / 2.0

    def f(xi: float) -> float:
        return (a + b * xi * xi) ** (-c) * xi ** (N - 1)

    # integrand <= b^{-c} ξ^{-2k-1}; also keep a/(bξ²) <= 1/2 for the series
    xi_max = max((b ** (-c) / (tol * 1e-2)) ** (1.0 / (2.0 * k + 1.0)), math.sqrt(2.0 * a / b), 1.0)

    scale = math.sqrt(a / b)
    edges = [0.0]
    edge = scale
    while edge < xi_max:
        edges.append(edge)
        edge *= 4.0
    edges.append(xi_max)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err, info = _quad(f, lo, hi, tol / (10.0 * len(edges)), max_subdivisions)
        if info != 0 and err > tol:
            raise QuadratureError(
                f"quadrature did not converge on [{lo}, {hi}] (error estimate {err:.3e})"
            )
        total += val

    w = a / (b * xi_max * xi_max)
    tail = 0.0
    coef = 1.0
    for j in range(400):
        if j > 0:
            coef *= -(c + j - 1.0) / j
        term = coef * w**j * xi_max ** (-2.0 * k) / (2.0 * k + 2.0 * j)
        tail += term
        if abs(term) < 1e-18 * abs(tail):
            break
    else:
        raise QuadratureError("tail series did not converge")
    tail *= b ** (-c)
    return total + tail


def _quad(f, lo: float, hi: float, epsabs: float, limit: int):
    out = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-13, limit=limit, full_output=1)
    val, err = out[0], out[1]
    info = 0 if len(out) == 3 else 1
    return val, err, info


def _profile_mass(params: ModelParameters, b: float, sphere_factor: bool) -> float:
    """∫ φ0(|z|)^{p−1+r} dz over R^N (or the bare radial integral)."""
    k = params.mass_exponent - params.N / 2.0
    if k <= 0:
        raise ValueError("profile power is not integrable: need r/(p-1) > N/2 - 1")
    if abs(k - round(k)) < 1e-12:
        radial = bubble_integral(b, params.p, params.N, int(round(k)))
    else:
        radial = bubble_integral_real(b, params.p, params.N, k)
    return radial * (unit_sphere_area(params.N) if sphere_factor else 1.0)


def derive_constants(params: ModelParameters, sphere_factor: bool = True) -> DerivedConstants:
    """Compute κ, β, b, ν, a, θ∞ and B for ``params``.

    θ∞ solves the second equation of the (β, θ∞) fixed-point system in
    closed form,

        θ∞ = (|Ω| D / ((1+γ) r M))^{γ/(1−γN/2)},  D = 1 + N/2 + β(p−1+r)/(p−1),

    with M the profile mass.  In the critical regime this is the same number
    as (|Ω|(1+N/2) 2 b^{N/2} / ((1−γN/2) |S^{N−1}|))^{γ/(1−γN/2)}, which is
    recomputed and stored in ``theta_inf_crosscheck``.
    """
    p, r, g, N = params.p, params.r, params.gamma, params.N
    if g * N / 2.0 >= 1.0:
        raise ValueError("gamma*N/2 must be < 1")
    if g > 0.0 and not params.is_critical:
        warnings.warn(
            "r != N(p-1)/2: the theta asymptotics assume the critical relation",
            stacklevel=2,
        )
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    beta = (N / 2.0 + 1.0) * g / (1.0 - g * N / 2.0)
    b = (p - 1.0) ** 2 * (1.0 + beta) / (4.0 * p)
    nu = beta / (p - 1.0)
    a = 2.0 * b * N * kappa / (p - 1.0) ** 2 + kappa * beta / (p - 1.0)
    if g == 0.0 and params.mass_exponent <= N / 2.0:
        # θ ≡ 1 needs no mass; the profile power is not integrable here
        mass = float("nan")
    else:
        mass = _profile_mass(params, b, sphere_factor)
    omega = params.domain_measure

    if g == 0.0:
        theta_inf = 1.0
        crosscheck = 1.0
    else:
        D = 1.0 + N / 2.0 + beta * params.mass_exponent
        expo = g / (1.0 - g * N / 2.0)
        theta_inf = (omega * D / ((1.0 + g) * r * mass)) ** expo
        if params.is_critical:
            area = unit_sphere_area(N) if sphere_factor else 1.0
            crosscheck = (omega * (1.0 + N / 2.0) * 2.0 * b ** (N / 2.0) / ((1.0 - g * N / 2.0) * area)) ** expo
        else:
            crosscheck = float("nan")
    B = theta_inf ** (-(N / 2.0 + 1.0)) * r * omega**g * mass
    return DerivedConstants(
        params=params,
        kappa=kappa,
        beta=beta,
        b_coef=b,
        nu=nu,
        a_coef=a,
        theta_inf=theta_inf,
        B_const=B,
        profile_mass=mass,
        sphere_factor=sphere_factor,
        theta_inf_crosscheck=crosscheck,
    )


def theta_inf_from_integral(params: ModelParameters, b: float, radial_integral: float, sphere_factor: bool = True) -> float:
    """θ∞ = (|Ω|(1+N/2) / (r (1−γN/2) M))^{γ/(1−γN/2)} for a given radial integral.

    ``radial_integral`` is ∫₀^∞ φ0^{p−1+r} ξ^{N−1} dξ however it was obtained
    (closed form or quadrature); valid in the critical regime.
    """
    g, N, r = params.gamma, params.N, params.r
    if g == 0.0:
        return 1.0
    mass = radial_integral * (unit_sphere_area(N) if sphere_factor else 1.0)
    return (params.domain_measure * (1.0 + N / 2.0) / (r * (1.0 - g * N / 2.0) * mass)) ** (
        g / (1.0 - g * N / 2.0)
    )


def fixed_point_residual(constants: DerivedConstants, params: ModelParameters | None = None) -> tuple[float, float]:
    """Relative residuals of the (β, θ∞) fixed-point system.

    First equation:  β = (1 + N/2 + β(1 + N/2)) γ/(γ+1).
    Second equation: θ∞ = |Ω|^γ ((1+γ) B / (1 + N/2 + β(p−1+r)/(p−1)))^{−γ/(γ+1)},
    with B = θ∞^{−(N/2+1)} r |Ω|^γ M recomputed from the supplied θ∞.

    For γ = 0 both residuals are reported as 0: β = 0 is exact and θ∞ = 1
    carries a zero exponent.
    """
    prm = params if params is not None else constants.params
    g, N, r = prm.gamma, prm.N, prm.r
    if g == 0.0:
        return 0.0, 0.0
    beta = constants.beta
    rhs_beta = (1.0 + N / 2.0 + beta * (1.0 + N / 2.0)) * g / (g + 1.0)
    res1 = abs(beta - rhs_beta) / max(abs(beta), np.finfo(float).tiny)

    theta = constants.theta_inf
    omega = prm.domain_measure
    mass = _profile_mass(prm, constants.b_coef, constants.sphere_factor)
    B = theta ** (-(N / 2.0 + 1.0)) * r * omega**g * mass
    D = 1.0 + N / 2.0 + beta * prm.mass_exponent
    rhs_theta = omega**g * ((1.0 + g) * B / D) ** (-g / (g + 1.0))
    res2 = abs(theta - rhs_theta) / abs(theta)
    return res1, res2


def perturbed(constants: DerivedConstants, **changes) -> DerivedConstants:
    """Copy of ``constants`` with selected fields replaced (for residual probes)."""
    return replace(constants, **changes)
