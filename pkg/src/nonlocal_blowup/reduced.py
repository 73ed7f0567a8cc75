"""Finite-dimensional model systems.

* The formal inner-expansion system for (W̄0, W̄2), with W̄ = W̄0 + W̄2(|y|² − 2N).
* The model ODEs for the bulk modes q0, q1, q2 driven by
  λ̃(s) = (θ̄'/θ̄ + β/s)/(p−1).
* The mass law d/dt m = B m^{−γ} (T−t)^{−1} |ln(T−t)|^E with
  E = N/2 + β(p−1+r)/(p−1), for m = ∫ u^r.

Remainder terms of order 1/s² and cubic in the modes are dropped.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp

from .params import DerivedConstants, ModelParameters

__all__ = [
    "FormalModeState",
    "FormalTrajectory",
    "QModeState",
    "MassTrajectory",
    "formal_rhs",
    "asymptotic_branch",
    "integrate_formal",
    "q_mode_rhs",
    "q_mode_step",
    "q_mode_integrate",
    "synthetic_lambda",
    "lambda_from_theta",
    "mass_exponent_E",
    "theta_norm_closed_form",
    "theta_norm_ode",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class FormalModeState:
    s: float
    W0_bar: float
    W2_bar: float

    def __post_init__(self) -> None:
        if not self.s > 0:
            raise ValueError("s must be positive")


def formal_rhs(state: FormalModeState, constants: DerivedConstants) -> tuple[float, float]:
    """(W̄0', W̄2') of the formal inner system."""
    d0, d2 = _formal_vec(state.s, (state.W0_bar, state.W2_bar), constants)
    return float(d0), float(d2)


def _formal_vec(s, w, constants: DerivedConstants):
    p, k, beta, N = constants.p, constants.kappa, constants.beta, constants.N
    w0, w2 = w[0], w[1]
    d0 = w0 + p / (2 * k) * (w0 * w0 + 8 * N * w2 * w2) - beta * (k + w0) / ((p - 1) * s)
    d2 = 4 * p / k * w2 * w2 + p / k * w0 * w2 - beta * w2 / ((p - 1) * s)
    return np.array([d0, d2])


def asymptotic_branch(s, constants: DerivedConstants):
    """(βκ/((p−1)s), −κ(1+β)/(4ps)).

    The W̄2 equation is balanced exactly; the W̄0 equation leaves an O(1/s²)
    residual.
    """
    s = np.asarray(s, dtype=float)
    p, k, beta = constants.p, constants.kappa, constants.beta
    return beta * k / ((p - 1) * s), -k * (1 + beta) / (4 * p * s)


@dataclass
class FormalTrajectory:
    s: np.ndarray
    W0_bar: np.ndarray
    W2_bar: np.ndarray
    escaped: bool
    escape_s: float = math.nan
    mode: str = "ivp"
    message: str = ""

    def relative_deviation(self, constants: DerivedConstants) -> tuple[np.ndarray, np.ndarray]:
        b0, b2 = asymptotic_branch(self.s, constants)
        return np.abs(self.W0_bar / b0 - 1.0), np.abs(self.W2_bar / b2 - 1.0)


def integrate_formal(
    s0: float,
    s1: float,
    init: tuple[float, float],
    constants: DerivedConstants,
    mode: str = "ivp",
    n_samples: int = 200,
    escape_level: float = 1e3,
    rtol: float = 1e-10,
    atol: float = 1e-14,
) -> FormalTrajectory:
    """Integrate the formal system from s0 to s1; output is log-uniform in s.

    ``mode="ivp"`` integrates forward with adaptive Dormand–Prince steps and
    flags an escape once |W̄0| or |W̄2| exceeds ``escape_level``.  Because
    W̄0 carries the unstable eigenvalue +1, any O(1/s²) mismatch grows like
    e^{s−s0} forward in time, so tracking the asymptotic branch uses
    ``mode="track"``: a boundary value problem with W̄2(s0) from ``init``
    and W̄0(s1) on the branch, which selects the trajectory on the stable
    manifold.  In that mode ``init[0]`` is only used as a guess.
    """
    if not 0 < s0 < s1:
        raise ValueError("need 0 < s0 < s1")
    s_out = np.geomspace(s0, s1, n_samples)
    if mode == "ivp":
        def blow(s, w):
            return escape_level - max(abs(w[0]), abs(w[1]))

        blow.terminal = True
        sol = solve_ivp(
            lambda s, w: _formal_vec(s, w, constants),
            (s0, s1),
            np.array(init, dtype=float),
            method="DOP853",
            rtol=rtol,
            atol=atol,
            events=blow,
            dense_output=True,
        )
        if sol.status == -1:
            raise RuntimeError(f"formal integration failed: {sol.message}")
        escaped = sol.status == 1
        s_end = float(sol.t[-1])
        keep = s_out[s_out <= s_end]
        w = sol.sol(keep)
        return FormalTrajectory(keep, w[0], w[1], escaped, s_end if escaped else math.nan, "ivp", sol.message)
    if mode == "track":
        w2_init = float(init[1])
        w0_end = float(asymptotic_branch(s1, constants)[0])

        def bc(wa, wb):
            return np.array([wa[1] - w2_init, wb[0] - w0_end])

        mesh = np.geomspace(s0, s1, 400)
        guess = np.vstack(asymptotic_branch(mesh, constants))
        sol = solve_bvp(
            lambda s, w: _formal_vec(s, w, constants), bc, mesh, guess, tol=1e-8, max_nodes=200000
        )
        if not sol.success:
            raise RuntimeError(f"formal boundary value problem failed: {sol.message}")
        w = sol.sol(s_out)
        return FormalTrajectory(s_out, w[0], w[1], False, math.nan, "track", sol.message)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class QModeState:
    s: float
    q0: float
    q1: np.ndarray
    q2: np.ndarray
    lambda_tilde: float = 0.0

    @property
    def N(self) -> int:
        return int(np.asarray(self.q1).size)


LambdaFn = Callable[[float], float]


def synthetic_lambda(A: float, amplitude: float = 0.1) -> LambdaFn:
    """λ̃(s) = amplitude·A³ s^{−3/2} cos s, inside the envelope C A³ s^{−3/2}."""
    return lambda s: amplitude * A**3 * s**-1.5 * math.cos(s)


def lambda_from_theta(s: np.ndarray, theta_bar: np.ndarray, beta: float, p: float) -> LambdaFn:
    """λ̃ from a measured θ̄ series, by centered differences and linear interpolation."""
    s = np.asarray(s, dtype=float)
    lt = np.log(np.asarray(theta_bar, dtype=float))
    lam = (np.gradient(lt, s) + beta / s) / (p - 1.0)
    return lambda x: float(np.interp(x, s, lam))


def _pack(q0: float, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    return np.concatenate([[q0], np.ravel(q1), np.ravel(q2)])


def _unpack(v: np.ndarray, N: int) -> tuple[float, np.ndarray, np.ndarray]:
    return float(v[0]), v[1 : 1 + N].copy(), v[1 + N :].reshape(N, N).copy()


def q_mode_rhs(s: float, q0: float, q1, q2, lam: float, constants: DerivedConstants):
    """q0' = q0 + κλ̃, q1' = q1/2, q2' = −((2+β)/s)q2 + λ̃q2 − λ̃κb/((p−1)s)·I."""
    k, beta, b, p = constants.kappa, constants.beta, constants.b_coef, constants.p
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    d0 = q0 + k * lam
    d1 = 0.5 * q1
    d2 = -((2.0 + beta) / s) * q2 + lam * q2 - lam * k * b / ((p - 1.0) * s) * np.eye(q2.shape[0])
    return d0, d1, d2


def _q_vec(s, v, N, constants, lam_fn):
    q0, q1, q2 = _unpack(v, N)
    d0, d1, d2 = q_mode_rhs(s, q0, q1, q2, lam_fn(s), constants)
    return _pack(d0, d1, d2)


def q_mode_step(
    state: QModeState,
    ds: float,
    constants: DerivedConstants,
    lambda_fn: LambdaFn | None = None,
    rtol: float = 1e-12,
) -> QModeState:
    """Advance the model q-system by ds (λ̃ ≡ state.lambda_tilde if no source)."""
    N = state.N
    lam_fn = lambda_fn if lambda_fn is not None else (lambda s, c=state.lambda_tilde: c)
    v0 = _pack(state.q0, np.asarray(state.q1, float), np.asarray(state.q2, float))
    sol = solve_ivp(
        _q_vec, (state.s, state.s + ds), v0, method="DOP853", rtol=rtol, atol=1e-30, args=(N, constants, lam_fn)
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    q0, q1, q2 = _unpack(sol.y[:, -1], N)
    s1 = state.s + ds
    return QModeState(s1, q0, q1, q2, float(lam_fn(s1)))


def q_mode_integrate(
    state: QModeState,
    s_end: float,
    constants: DerivedConstants,
    lambda_fn: LambdaFn | None = None,
    s_eval=None,
    rtol: float = 1e-12,
) -> list[QModeState]:
    """Dense version of :func:`q_mode_step`; returns states at ``s_eval``."""
    N = state.N
    lam_fn = lambda_fn if lambda_fn is not None else (lambda s, c=state.lambda_tilde: c)
    if s_eval is None:
        s_eval = np.geomspace(state.s, s_end, 100)
    v0 = _pack(state.q0, np.asarray(state.q1, float), np.asarray(state.q2, float))
    sol = solve_ivp(
        _q_vec,
        (state.s, s_end),
        v0,
        method="DOP853",
        rtol=rtol,
        atol=1e-30,
        t_eval=s_eval,
        args=(N, constants, lam_fn),
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    out = []
    for s, v in zip(sol.t, sol.y.T):
        q0, q1, q2 = _unpack(v, N)
        out.append(QModeState(float(s), q0, q1, q2, float(lam_fn(s))))
    return out


def mass_exponent_E(params: ModelParameters, constants: DerivedConstants) -> float:
    """E = N/2 + β(p−1+r)/(p−1)."""
    p = params.p
    return params.N / 2.0 + constants.beta * (p - 1.0 + params.r) / (p - 1.0)


def theta_norm_closed_form(L, params: ModelParameters, constants: DerivedConstants):
    """m(L) = ((1+γ)B/(1+E))^{1/(1+γ)} L^{(1+E)/(1+γ)} with L = |ln(T−t)|."""
    g = params.gamma
    E = mass_exponent_E(params, constants)
    L = np.asarray(L, dtype=float)
    return ((1 + g) * constants.B_const / (1 + E)) ** (1 / (1 + g)) * L ** ((1 + E) / (1 + g))


@dataclass
class MassTrajectory:
    L: np.ndarray
    t: np.ndarray
    m: np.ndarray
    closed_form: np.ndarray
    theta: np.ndarray
    log_exponent: float = field(default=math.nan)

    @property
    def relative_deviation(self) -> np.ndarray:
        return np.abs(self.m / self.closed_form - 1.0)


def theta_norm_ode(
    params: ModelParameters,
    constants: DerivedConstants,
    T: float,
    t0: float | None,
    m0: float,
    L_end: float = 1e4,
    n_samples: int = 200,
    L0: float | None = None,
) -> MassTrajectory:
    """Integrate the mass law in L = |ln(T−t)| from t0 until L = L_end.

    With dL/dt = 1/(T−t) the law reads dm/dL = B m^{−γ} L^E.  The implied
    θ = |Ω|^γ m^{−γ}; ``log_exponent`` is the exact exponent of L in the
    closed form of θ, −γ(1+E)/(1+γ).  ``L0`` replaces t0 when T − t0 is
    below double precision relative to T.
    """
    if L0 is None:
        if t0 is None or not t0 < T:
            raise ValueError("t0 must be before T")
        L0 = -math.log(T - t0)
    if not m0 > 0:
        raise ValueError("initial mass must be positive")
    if not 0 < L0 < L_end:
        raise ValueError("need 0 < |ln(T − t0)| < L_end")
    g = params.gamma
    E = mass_exponent_E(params, constants)
    B = constants.B_const

    def rhs(L, m):
        if m[0] <= 0:
            raise ValueError("mass became non-positive")
        return [B * m[0] ** (-g) * L**E]

    L_out = np.geomspace(L0, L_end, n_samples)
    sol = solve_ivp(rhs, (L0, L_end), [m0], method="DOP853", rtol=1e-11, atol=0.0, t_eval=L_out)
    if not sol.success:
        raise RuntimeError(sol.message)
    m = sol.y[0]
    closed = theta_norm_closed_form(L_out, params, constants)
    theta = params.domain_measure**g * m ** (-g)
    return MassTrajectory(
        L=L_out,
        t=T - np.exp(-L_out),
        m=m,
        closed_form=closed,
        theta=theta,
        log_exponent=-g * (1 + E) / (1 + g),
    )


def trajectory_to_csv(columns: dict[str, np.ndarray]) -> str:
    """Columns in insertion order, one row per sample."""
    buf = io.StringIO()
    names = list(columns)
    buf.write(",".join(names) + "\n")
    arrs = [np.ravel(np.asarray(columns[k], dtype=float)) for k in names]
    for row in zip(*arrs):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
