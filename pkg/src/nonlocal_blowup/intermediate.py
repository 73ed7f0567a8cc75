"""Intermediate-region quantities.

For 0 < |x| small, t(x) < T is defined by |x| = (K₀/4)√(ϱ|ln ϱ|) with
ϱ(x) = T − t(x).  Around such a point the solution is viewed through

    𝒰(x, ξ, τ) = ϱ^{1/(p−1)} θ(t(x))^{1/(p−1)} u(x + ξ√ϱ, τϱ + t(x)),

which stays close to the flat reference

    Û(τ) = ((p−1)(1 − ∫₀^τ θ̃(τ')/θ(t(x)) dτ') + bK₀²/16)^{−1/(p−1)},

θ̃(τ') = θ(τ'ϱ + t(x)) and θ(t') = θ(0) for t' ≤ 0.

The modified profile H* equals the final profile

    u*(x) = θ∞^{−1/(p−1)} [b|x|²/(2|ln|x||)]^{−1/(p−1)} (2|ln|x||)^{β/(p−1)}

for |x| ≤ min(d/4, 1/2), equals 1 for |x| ≥ d/2 (d the distance from the
origin to the boundary), and is blended with χ₀ in between.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .grid import RadialField
from .params import DerivedConstants, ModelParameters
from .similarity import chi0

__all__ = [
    "RegionMap",
    "OutOfWindowError",
    "max_region_radius",
    "solve_rho_of_x",
    "solve_t_of_x",
    "rho_asymptotic",
    "hat_U",
    "hat_U_from_ratio",
    "rescaled_U",
    "rescaled_U_field",
    "flatness",
    "u_star",
    "H_star",
    "P2Sample",
    "p2_diagnostic",
    "p2_to_csv",
]


class OutOfWindowError(ValueError):
    """A space-time query falls outside the stored trajectory."""


def max_region_radius(K0: float) -> float:
    """Largest |x| for which ϱ ↦ (K₀/4)√(ϱ|ln ϱ|) is increasing (ϱ < 1/e)."""
    return K0 / 4.0 * math.exp(-0.5)


def solve_rho_of_x(x: float, K0: float) -> float:
    """ϱ(x) solving |x| = (K₀/4)√(ϱ|ln ϱ|) on 0 < ϱ < 1/e."""
    ax = abs(float(x))
    if ax == 0.0:
        raise ValueError("x must be nonzero")
    if ax >= max_region_radius(K0):
        raise ValueError(f"|x| = {ax} exceeds the monotone range {max_region_radius(K0)}")
    target = 2.0 * math.log(4.0 * ax / K0)

    # log of ϱ|ln ϱ| in terms of ℓ = ln ϱ < −1
    def g(ell: float) -> float:
        return ell + math.log(-ell) - target

    lo = min(target - math.log(max(-target, 1.0)) - 10.0, -1.0 - 1e-12)
    while g(lo) > 0:
        lo *= 2.0
    ell = optimize.brentq(g, lo, -1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # one Newton polish on the same residual
    ell -= g(ell) / (1.0 + 1.0 / ell)
    return math.exp(ell)


def solve_t_of_x(x: float, K0: float, T: float) -> float:
    return T - solve_rho_of_x(x, K0)


def rho_asymptotic(x, K0: float):
    """ϱ(x) from 2|ln|x|| = |ln ϱ| − ln|ln ϱ| − ln(K₀²/16), to first log order.

    ϱ|ln|x||/|x|² = (8/K₀²)(1 − (ln(2|ln|x||) + ln(K₀²/16))/(2|ln|x||)).
    """
    x = np.abs(np.asarray(x, dtype=float))
    L = -np.log(x)
    corr = 1.0 - (np.log(2.0 * L) + math.log(K0 * K0 / 16.0)) / (2.0 * L)
    return 8.0 / K0**2 * corr * x * x / L


@dataclass
class RegionMap:
    """Cached t(x) for fixed K₀ and T."""

    K0: float
    epsilon0: float
    T: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.epsilon0 >= max_region_radius(self.K0):
            raise ValueError("epsilon0 is outside the monotone range of t(x)")

    def rho(self, x: float) -> float:
        key = abs(float(x))
        if key not in self._cache:
            self._cache[key] = solve_rho_of_x(key, self.K0)
        return self._cache[key]

    def t_of_x(self, x: float) -> float:
        return self.T - self.rho(x)

    def tau0(self, x: float) -> float:
        """τ₀(x) = −t(x)/ϱ(x), the τ of the initial time."""
        return -self.t_of_x(x) / self.rho(x)


def hat_U_from_ratio(tau: float, ratio: Callable[[float], float], p: float, b: float, K0: float) -> float:
    """Û(τ) for a given ratio τ' ↦ θ̃(τ')/θ(t(x)), clamped to at most 1."""
    if tau == 0:
        I = 0.0
    else:
        # Interpolated θ histories are only piecewise smooth; quad then reports
        # roundoff near the requested tolerance, so check its estimate instead.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            I, err = integrate.quad(lambda s: min(ratio(s), 1.0), 0.0, tau, limit=200, epsabs=1e-10, epsrel=1e-8)
        if err > 1e-6:
            raise ArithmeticError(f"quadrature of the θ ratio did not converge (error estimate {err:.1e})")
    arg = (p - 1.0) * (1.0 - I) + b * K0 * K0 / 16.0
    assert arg > 0, "bracket of the flat reference must be positive"
    return arg ** (-1.0 / (p - 1.0))


def _theta_fn(theta_history) -> Callable[[float], float]:
    if callable(theta_history):
        fn = theta_history
    elif hasattr(theta_history, "theta_at"):
        fn = theta_history.theta_at
    else:
        t, th = (np.asarray(a, dtype=float) for a in theta_history)
        fn = lambda x: float(np.interp(x, t, th))  # noqa: E731
    return lambda x: fn(max(x, 0.0))


def hat_U(
    x: float,
    tau: float,
    theta_history,
    params: ModelParameters,
    constants: DerivedConstants,
    K0: float,
    T: float,
) -> float:
    """Û(x, τ) from a θ history (callable t ↦ θ, a trajectory, or (t, θ) arrays)."""
    rho = solve_rho_of_x(x, K0)
    tx = T - rho
    th = _theta_fn(theta_history)
    tau_min = -tx / rho
    if tau < min(tau_min, 0.0) or tau >= 1.0:
        raise ValueError(f"tau = {tau} outside [tau0, 1)")
    th_x = th(tx)
    return hat_U_from_ratio(tau, lambda s: th(s * rho + tx) / th_x, params.p, constants.b_coef, K0)


def rescaled_U_field(x: float, xi, u: RadialField, theta_x: float, rho: float, p: float) -> np.ndarray:
    """𝒰 at one time level from a field u(·, t) and θ(t(x))."""
    X = np.abs(abs(x) + np.asarray(xi, dtype=float) * math.sqrt(rho))
    if np.any(X > u.grid.R):
        raise OutOfWindowError("x + ξ√ϱ leaves the domain")
    vals = np.interp(X, u.grid.nodes, u.values)
    return (rho * theta_x) ** (1.0 / (p - 1.0)) * vals


def rescaled_U(x: float, xi, tau: float, trajectory, params: ModelParameters, K0: float, T: float | None = None) -> np.ndarray:
    """𝒰(x, ξ, τ) by linear interpolation in ρ and t between snapshots."""
    T = trajectory.T_est if T is None else T
    rho = solve_rho_of_x(x, K0)
    tx = T - rho
    t = tau * rho + tx
    snaps = trajectory.snapshots
    times = np.array([s.t for s in snaps])
    if not (times[0] <= t <= times[-1]):
        raise OutOfWindowError(f"t = {t!r} is outside the snapshot range [{times[0]!r}, {times[-1]!r}]")
    if tx > trajectory.times[-1]:
        raise OutOfWindowError(f"t(x) = {tx!r} is outside the stored θ history")
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(k, len(snaps) - 2) if len(snaps) > 1 else 0
    grid = trajectory.grid
    X = np.abs(abs(x) + np.asarray(xi, dtype=float) * math.sqrt(rho))
    if np.any(X > grid.R):
        raise OutOfWindowError("x + ξ√ϱ leaves the domain")
    u0 = np.interp(X, grid.nodes, snaps[k].values)
    if len(snaps) > 1 and times[k + 1] > times[k]:
        w = (t - times[k]) / (times[k + 1] - times[k])
        u1 = np.interp(X, grid.nodes, snaps[k + 1].values)
        uv = (1 - w) * u0 + w * u1
    else:
        uv = u0
    theta_x = trajectory.theta_at(max(tx, 0.0))
    return (rho * theta_x) ** (1.0 / (params.p - 1.0)) * uv


def flatness(U_of_xi: Callable[[np.ndarray], np.ndarray], rho: float, alpha0: float, n: int = 41) -> float:
    """max |∇_ξ 𝒰| √|ln ϱ| over |ξ| ≤ α₀√|ln ϱ|, by centered differences."""
    L = abs(math.log(rho))
    xi = np.linspace(-alpha0 * math.sqrt(L), alpha0 * math.sqrt(L), n)
    vals = U_of_xi(xi)
    return float(np.max(np.abs(np.gradient(vals, xi)))) * math.sqrt(L)


def u_star(x, constants: DerivedConstants):
    """θ∞^{−1/(p−1)}[b|x|²/(2|ln|x||)]^{−1/(p−1)}[2|ln|x||]^{β/(p−1)}, 0 < |x| < 1."""
    x = np.abs(np.asarray(x, dtype=float))
    if np.any(x == 0):
        raise ValueError("u* is singular at x = 0")
    if np.any(x >= 1):
        raise ValueError("u* is defined for |x| < 1")
    p = constants.p
    e = 1.0 / (p - 1.0)
    L2 = -2.0 * np.log(x)
    return constants.theta_inf ** (-e) * (constants.b_coef * x * x / L2) ** (-e) * L2 ** (constants.nu)


def H_star(x, constants: DerivedConstants, domain_radius: float = 1.0):
    """Modified final profile; see the module docstring.

    The core includes the factor (b/2)^{−1/(p−1)} so that it coincides with
    u* and joins the profile term of the prepared data continuously.  The
    blend runs over [min(d/4, 1/2), min(d/2, 3/4)], which keeps the core away
    from |x| = 1 where u* is singular.
    """
    x = np.abs(np.asarray(x, dtype=float))
    if np.any(x == 0):
        raise ValueError("H* is singular at x = 0")
    d = float(domain_radius)
    x1 = min(d / 4.0, 0.5)
    x2 = min(d / 2.0, 0.75)
    out = np.ones_like(x)
    inner = x < x2
    if np.any(inner):
        xi = x[inner]
        w = chi0(1.0 + np.maximum(xi - x1, 0.0) / (x2 - x1))
        out[inner] = w * u_star(xi, constants) + (1.0 - w)
    return out if out.ndim else float(out)


@dataclass
class P2Sample:
    x: float
    rho: float
    tau: float
    U: float
    hat_U: float
    grad_bound: float

    @property
    def gap(self) -> float:
        return abs(self.U - self.hat_U)


def p2_diagnostic(
    u: RadialField,
    theta0: float,
    params: ModelParameters,
    constants: DerivedConstants,
    K0: float,
    T: float,
    epsilon0: float,
    alpha0: float,
    n_x: int = 40,
) -> list[P2Sample]:
    """Intermediate-region check of a field at t = 0.

    Uses points with ϱ(x) >= T (so t(x) <= 0 and θ(t(x)) = θ(0)); there
    τ₀ = 1 − T/ϱ and Û(τ₀) = ((p−1)T/ϱ + bK₀²/16)^{−1/(p−1)}.
    """
    p = params.p
    x_lo = K0 / 4.0 * math.sqrt(T * abs(math.log(T))) * 1.01
    if not x_lo < epsilon0:
        raise ValueError("epsilon0 lies below the intermediate region")
    out = []
    for x in np.geomspace(x_lo, epsilon0, n_x):
        rho = solve_rho_of_x(x, K0)
        tau0 = 1.0 - T / rho
        hU = ((p - 1.0) * T / rho + constants.b_coef * K0 * K0 / 16.0) ** (-1.0 / (p - 1.0))
        U0 = float(rescaled_U_field(x, 0.0, u, theta0, rho, p))
        gb = flatness(lambda xi: rescaled_U_field(x, xi, u, theta0, rho, p), rho, alpha0)
        out.append(P2Sample(float(x), rho, tau0, U0, hU, gb))
    return out


def p2_to_csv(samples: list[P2Sample]) -> str:
    buf = io.StringIO()
    buf.write("x,tau,U,hatU,gap,grad_bound\n")
    for s in samples:
        buf.write(",".join(repr(float(v)) for v in (s.x, s.tau, s.U, s.hat_U, s.gap, s.grad_bound)) + "\n")
    return buf.getvalue()
