"""Time integration of u_t = Δu − u + θ(t) u^p toward blowup.

Schemes
-------
``explicit-euler``
    Forward Euler for every term.  Stable for dt <= h_min²/(2N).
``imex``
    Backward Euler for Δu − u, forward Euler for θu^p with θ frozen at the
    start of the step.  First order.
``imex-rk2``
    The two-stage, second-order, L-stable IMEX Runge–Kutta scheme of
    Ascher, Ruuth and Spiteri with the same implicit/explicit split; θ is
    recomputed at the internal stage.

The implicit operator I − c(Δ − I) is tridiagonal and diagonally dominant
with non-positive off-diagonals for N <= 3, so ``imex`` preserves
positivity.
"""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.linalg import solve_banded

from .grid import RadialField, RadialGrid, apply_bands, compute_theta, field_from_csv, field_to_csv
from .params import DerivedConstants, ModelParameters

__all__ = [
    "SolverState",
    "SolverConfig",
    "Snapshot",
    "TrajectoryRecord",
    "SolverAbort",
    "initial_state",
    "step",
    "adaptive_dt",
    "run_to_blowup",
    "estimate_blowup_time",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

Scheme = Literal["explicit-euler", "imex", "imex-rk2"]
SCHEMES = ("explicit-euler", "imex", "imex-rk2")

CLAMP_TOL = 1e-13
CHECKPOINT_VERSION = 1

_ARS_G = 1.0 - 1.0 / math.sqrt(2.0)
_ARS_D = 1.0 - 1.0 / (2.0 * _ARS_G)


class SolverAbort(RuntimeError):
    """Raised when a step produces NaN or a negative value beyond tolerance."""


@dataclass(frozen=True)
class SolverState:
    t: float
    u: RadialField
    theta: float
    dt: float
    step_count: int
    params: ModelParameters


def initial_state(u0: RadialField, params: ModelParameters, dt: float = 0.0) -> SolverState:
    if np.any(u0.values < 0):
        raise ValueError("initial data must be non-negative")
    theta = compute_theta(u0, params) if np.any(u0.values) else 1.0
    return SolverState(0.0, u0, theta, dt, 0, params)


def _reaction(u: np.ndarray, theta: float, p: float) -> np.ndarray:
    if p == 2.0:
        return theta * u * u
    if p == 3.0:
        return theta * u * u * u
    return theta * np.power(u, p)


def _implicit_solve(grid: RadialGrid, c: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I − c(Δ − I)) x = rhs."""
    lo, di, up = grid.laplacian_bands
    ab = np.empty((3, grid.n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -c * up[:-1]
    ab[1] = 1.0 + c - c * di
    ab[2, :-1] = -c * lo[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _theta_of(values: np.ndarray, grid: RadialGrid, params: ModelParameters) -> float:
    if params.gamma == 0.0 or not np.any(values):
        return 1.0
    return compute_theta(RadialField(grid, values), params)


def step(state: SolverState, scheme: Scheme = "imex") -> SolverState:
    """Advance by ``state.dt``; θ is recomputed from the new field."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    grid = state.u.grid
    u = state.u.values
    dt = state.dt
    p = state.params.p
    theta = state.theta
    if not dt > 0:
        raise ValueError("dt must be positive")

    if scheme == "explicit-euler":
        new = u + dt * (apply_bands(grid.laplacian_bands, u) - u + _reaction(u, theta, p))
    elif scheme == "imex":
        new = _implicit_solve(grid, dt, u + dt * _reaction(u, theta, p))
    else:
        g, d = _ARS_G, _ARS_D
        f0 = _reaction(u, theta, p)
        u1 = _implicit_solve(grid, g * dt, u + g * dt * f0)
        u1 = np.maximum(u1, 0.0)
        f1 = _reaction(u1, _theta_of(u1, grid, state.params), p)
        lu1 = apply_bands(grid.laplacian_bands, u1) - u1
        new = _implicit_solve(grid, g * dt, u + dt * ((1.0 - g) * lu1 + d * f0 + (1.0 - d) * f1))

    new = _clamp(new, state.t + dt)
    field_new = RadialField.__new__(RadialField)
    object.__setattr__(field_new, "grid", grid)
    object.__setattr__(field_new, "values", new)
    theta_new = _theta_of(new, grid, state.params)
    return SolverState(state.t + dt, field_new, theta_new, dt, state.step_count + 1, state.params)


def _clamp(values: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise SolverAbort(f"non-finite values at t={t!r}")
    vmin = values.min()
    if vmin < 0.0:
        tol = CLAMP_TOL * max(1.0, float(values.max()))
        if vmin < -tol:
            raise SolverAbort(f"negative value {vmin!r} below clamp tolerance at t={t!r}")
        log.warning("clamping negatives down to %.3e at t=%r", vmin, t)
        values = np.maximum(values, 0.0)
    return values


def diffusion_bound(grid: RadialGrid, scheme: Scheme) -> float:
    """Largest stable dt from the diffusion term (infinite for implicit schemes)."""
    if scheme == "explicit-euler":
        return grid.h_min**2 / (2.0 * grid.N)
    return math.inf


def reaction_bound(sup: float, theta: float, p: float) -> float:
    """ODE clock 1/((p−1)θ‖u‖^{p−1}): the time for ‖u‖ to grow by O(1)."""
    rate = (p - 1.0) * theta * sup ** (p - 1.0)
    return math.inf if rate <= 0.0 else 1.0 / rate


def adaptive_dt(state: SolverState, safety: float, scheme: Scheme = "imex") -> float:
    """safety · min(diffusion bound, reaction bound)."""
    if not 0.0 < safety < 1.0:
        raise ValueError("safety must lie in (0, 1)")
    sup = state.u.sup
    bound = min(diffusion_bound(state.u.grid, scheme), reaction_bound(sup, state.theta, state.params.p))
    return safety * bound


@dataclass
class SolverConfig:
    """Run controls for :func:`run_to_blowup`.

    ``stop_unresolved``: stop (still counted as blowup) once the ODE clock
    1/((p−1)θ‖u‖^{p−1}) ~ T−t drops below (stop_unresolved·h_min)², i.e.
    when the grid can no longer resolve the similarity scale; ``None``
    disables the check and runs to ``M_stop``.

    Snapshots are taken whenever the running estimate
    s ≈ ln((p−1)θ‖u‖^{p−1}) crosses a multiple of ``snapshot_ds``, which
    samples s = −ln(T−t) roughly uniformly without knowing T in advance.
    """

    scheme: Scheme = "imex"
    safety: float = 0.05
    dt_max: float = 1e-2
    dt_fixed: float | None = None
    M_stop: float = 1e8
    max_steps: int = 1_000_000
    t_max: float = math.inf
    snapshot_ds: float = 0.25
    fit_window: int = 20
    resolve_factor: float = 20.0
    stop_unresolved: float | None = 2.0
    wall_time: float | None = None


@dataclass
class Snapshot:
    t: float
    values: np.ndarray = field(repr=False)
    theta: float
    step: int


@dataclass
class TrajectoryRecord:
    grid: RadialGrid
    params: ModelParameters
    times: np.ndarray
    sup: np.ndarray
    theta: np.ndarray
    dt: np.ndarray
    snapshots: list[Snapshot]
    T_est: float
    T_uncertainty: float
    status: str
    message: str = ""
    config: SolverConfig | None = None

    @property
    def blew_up(self) -> bool:
        return self.status == "blowup"

    def snapshot_field(self, snap: Snapshot) -> RadialField:
        return RadialField(self.grid, snap.values)

    def is_trusted(self, t: float, T: float | None = None, resolve_factor: float | None = None) -> bool:
        """Grid resolves the similarity scale √(T−t) and T−t dominates the T error."""
        T = self.T_est if T is None else T
        factor = resolve_factor if resolve_factor is not None else (
            self.config.resolve_factor if self.config else 20.0
        )
        tau = T - t
        if not tau > 0:
            return False
        if tau < 100.0 * self.T_uncertainty:
            return False
        return factor * self.grid.h_min <= math.sqrt(tau)

    def trusted_snapshots(self, T: float | None = None, resolve_factor: float | None = None) -> list[Snapshot]:
        return [sn for sn in self.snapshots if self.is_trusted(sn.t, T, resolve_factor)]

    def theta_at(self, t: float) -> float:
        """θ(t) by linear interpolation; θ(t) = θ(0) for t <= 0."""
        if t <= self.times[0]:
            return float(self.theta[0])
        if t > self.times[-1]:
            raise ValueError(f"time {t!r} beyond the recorded window [0, {self.times[-1]!r}]")
        return float(np.interp(t, self.times, self.theta))

    def series_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,sup_u,theta,dt\n")
        for row in zip(self.times, self.sup, self.theta, self.dt):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def run_to_blowup(u0: RadialField, params: ModelParameters, config: SolverConfig | None = None) -> TrajectoryRecord:
    """Integrate until ‖u‖_∞ >= M_stop or a budget is exhausted."""
    cfg = config or SolverConfig()
    state = initial_state(u0, params)
    p = params.p
    times = [0.0]
    sups = [state.u.sup]
    thetas = [state.theta]
    dts = [0.0]
    snaps = [Snapshot(0.0, state.u.values.copy(), state.theta, 0)]
    next_level = _next_level(_s_clock(sups[0], state.theta, p), cfg.snapshot_ds)
    status = "no-blowup-detected"
    message = ""
    start = time.perf_counter()

    while True:
        sup = sups[-1]
        if sup >= cfg.M_stop:
            status = "blowup"
            break
        if cfg.stop_unresolved is not None and sup > 10.0 * sups[0]:
            clock = reaction_bound(sup, state.theta, p)
            if clock < (cfg.stop_unresolved * state.u.grid.h_min) ** 2:
                status = "blowup"
                message = "stopped at the grid resolution limit"
                break
        if state.step_count >= cfg.max_steps:
            message = "step budget exhausted"
            break
        if state.t >= cfg.t_max:
            message = "time budget exhausted"
            break
        if cfg.wall_time is not None and time.perf_counter() - start > cfg.wall_time:
            message = "wall-time budget exhausted"
            break
        if params.gamma == 0.0 and sup ** (p - 1.0) < 0.5:
            # below the ODE threshold the reaction cannot beat −u
            message = "decay: sup below the blowup threshold of the γ=0 ODE"
            break
        if cfg.dt_fixed is not None:
            dt = cfg.dt_fixed
        else:
            dt = min(adaptive_dt(state, cfg.safety, cfg.scheme), cfg.dt_max)
        if math.isfinite(cfg.t_max):
            dt = min(dt, cfg.t_max - state.t) if cfg.t_max > state.t else dt
        if state.t + dt == state.t:
            status = "blowup" if sup > 10.0 * sups[0] else status
            message = "time step below the floating-point resolution of t"
            break
        state = step(replace(state, dt=dt), cfg.scheme)
        sup_new = state.u.sup
        times.append(state.t)
        sups.append(sup_new)
        thetas.append(state.theta)
        dts.append(dt)
        s_clock = _s_clock(sup_new, state.theta, p)
        if s_clock >= next_level:
            snaps.append(Snapshot(state.t, state.u.values.copy(), state.theta, state.step_count))
            next_level = _next_level(s_clock, cfg.snapshot_ds)

    if snaps[-1].step != state.step_count:
        snaps.append(Snapshot(state.t, state.u.values.copy(), state.theta, state.step_count))
    t_arr = np.array(times)
    sup_arr = np.array(sups)
    T_est, T_unc = math.nan, math.nan
    if status == "blowup":
        T_est, T_unc = estimate_blowup_time(t_arr, sup_arr, p, window=cfg.fit_window)
    return TrajectoryRecord(
        grid=u0.grid,
        params=params,
        times=t_arr,
        sup=sup_arr,
        theta=np.array(thetas),
        dt=np.array(dts),
        snapshots=snaps,
        T_est=T_est,
        T_uncertainty=T_unc,
        status=status,
        message=message,
        config=cfg,
    )


def _s_clock(sup: float, theta: float, p: float) -> float:
    rate = (p - 1.0) * theta * sup ** (p - 1.0)
    return math.log(rate) if rate > 0 else -math.inf


def _next_level(s: float, ds: float) -> float:
    if not math.isfinite(s):
        return -math.inf
    return (math.floor(s / ds) + 1.0) * ds


def estimate_blowup_time(times, sups, p: float, window: int = 20) -> tuple[float, float]:
    """Blowup time from a least-squares line through ‖u‖^{−(p−1)} on the tail.

    For Type I blowup ‖u‖^{−(p−1)} vanishes linearly at T (up to slowly
    varying log factors), so the root of the fitted line estimates T.  The
    uncertainty is the delta-method standard error of the root.
    """
    t = np.asarray(times, dtype=float)
    m = np.asarray(sups, dtype=float)
    if t.size != m.size:
        raise ValueError("times and sups differ in length")
    if t.size < 10:
        raise ValueError("need at least 10 samples")
    w = max(10, min(int(window), t.size))
    tt = t[-w:]
    mm = m[-w:]
    if np.any(np.diff(mm) <= 0) or np.any(np.diff(tt) <= 0):
        raise ValueError("sup-norm tail is not strictly increasing")
    v = mm ** (-(p - 1.0))
    tau = tt - tt[-1]
    A = np.column_stack([np.ones_like(tau), tau])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    c0, c1 = coef
    if not c1 < 0:
        raise ValueError("fitted line does not decrease toward zero")
    root = -c0 / c1
    resid = v - A @ coef
    dof = max(w - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    grad = np.array([-1.0 / c1, c0 / c1**2])
    unc = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    T_est = tt[-1] + root
    if not T_est > tt[-1]:
        # the line crosses zero inside the window; fall back to the last point's slope
        T_est = tt[-1] + v[-1] / abs(c1)
        unc = max(unc, abs(root))
    unc = max(unc, 4.0 * np.finfo(float).eps * abs(T_est))
    return float(T_est), float(unc)


def save_checkpoint(state: SolverState, constants: DerivedConstants | None = None) -> str:
    """Versioned text checkpoint: ``#`` header entries followed by the field CSV."""
    prm = state.params
    header = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "p": prm.p,
        "r": prm.r,
        "gamma": prm.gamma,
        "N": prm.N,
        "R": prm.R,
        "critical": prm.critical,
        "t": state.t,
        "dt": state.dt,
        "theta": state.theta,
        "step_count": state.step_count,
    }
    if constants is not None:
        header.update({f"const.{k}": v for k, v in constants.as_dict().items()})
    return field_to_csv(state.u, header)


def load_checkpoint(text: str) -> SolverState:
    u, meta = field_from_csv(text)
    version = int(meta.get("checkpoint_version", "-1"))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    params = ModelParameters(
        p=float(meta["p"]),
        r=float(meta["r"]),
        gamma=float(meta["gamma"]),
        N=int(meta["N"]),
        R=float(meta["R"]),
        critical=meta["critical"] == "True",
    )
    return SolverState(
        t=float(meta["t"]),
        u=u,
        theta=float(meta["theta"]),
        dt=float(meta["dt"]),
        step_count=int(meta["step_count"]),
        params=params,
    )
