"""Prepared two-parameter initial data and the entry check into the shrinking set.

With s0 = |ln T|, y = x/√T, z0 = x/√(T s0) and Θ0 = θ∞ s0^{−β},

    u(x, 0) = T^{−1/(p−1)} Θ0^{−1/(p−1)} [φ(y, s0) + (d0 A³/s0^{3/2} + (A/s0²) d1 |y|) χ₀(32|z0|/K₀)] χ₁(x, 0)
              + H*(x)(1 − χ₁(x, 0)),

χ₁(x, 0) = χ₀(|x|/(K₀√T s0)).  Radial data use |y| for d1·y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import RadialField, RadialGrid, build_grid, compute_theta, field_to_csv
from .intermediate import H_star, P2Sample, p2_diagnostic
from .params import DerivedConstants, ModelParameters
from .similarity import chi0, compute_q, profile_phi, to_similarity
from .spectral import ModeDecomposition, ShrinkingSetConfig, ShrinkingSetReport, decompose, shrinking_set_check

__all__ = [
    "PreparedDataSpec",
    "UnresolvedGridError",
    "prepared_grid",
    "prepared_values",
    "construct_initial_data",
    "InitialDataReport",
    "verify_in_S0",
    "initial_modes",
    "prepared_data_csv",
]

S0_FLOOR = 50.0


class UnresolvedGridError(ValueError):
    """The grid is too coarse for the blowup scale √(T|ln T|)."""


@dataclass(frozen=True)
class PreparedDataSpec:
    d0: float = 0.0
    d1: float = 0.0
    T: float = math.exp(-100.0)
    A: float = 4.0
    K0: float = 10.0
    s0_floor: float = S0_FLOOR
    strict: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.T < 1:
            raise ValueError("T must lie in (0, 1)")
        if self.s0 < self.s0_floor:
            raise ValueError(f"|ln T| = {self.s0:.3g} is below the floor {self.s0_floor}")
        if self.strict and (abs(self.d0) > 2 or abs(self.d1) > 2):
            raise ValueError("|d0| and |d1| must be at most 2")
        if self.A < 1 or self.K0 < 1:
            raise ValueError("A and K0 must be at least 1")

    @property
    def s0(self) -> float:
        return -math.log(self.T)

    def header(self) -> dict[str, float]:
        return {"d0": self.d0, "d1": self.d1, "T": self.T, "A": self.A, "K0": self.K0}


def prepared_grid(spec: PreparedDataSpec, params: ModelParameters, n_nodes: int = 4000, spacing_factor: float = 20.0) -> RadialGrid:
    """Origin-refined grid whose first spacing is √T/spacing_factor."""
    return build_grid(params.R, n_nodes, params.N, "origin-refined", min_spacing=math.sqrt(spec.T) / spacing_factor)


def _check_resolution(grid: RadialGrid, spec: PreparedDataSpec) -> None:
    scale = math.sqrt(spec.T * spec.s0)
    inside = grid.nodes[1:] <= scale
    h = grid.spacing[inside[: grid.spacing.size]] if np.any(inside) else grid.spacing[:1]
    if not np.any(inside) or float(h.max()) > scale / 10.0:
        raise UnresolvedGridError(
            f"grid spacing must be at most √(T|ln T|)/10 = {scale / 10.0:.3e} for ρ <= {scale:.3e}; "
            f"got {float(h.max()) if np.any(inside) else grid.spacing[0]:.3e}"
        )


def prepared_values(rho, spec: PreparedDataSpec, params: ModelParameters, constants: DerivedConstants) -> np.ndarray:
    """The prepared data evaluated at radii ``rho``."""
    rho = np.abs(np.asarray(rho, dtype=float))
    p = params.p
    T, s0, A, K0 = spec.T, spec.s0, spec.A, spec.K0
    sqT = math.sqrt(T)
    theta0 = constants.theta_inf * s0 ** (-constants.beta)
    pref = (T * theta0) ** (-1.0 / (p - 1.0))
    y = rho / sqT
    z0 = y / math.sqrt(s0)
    chi1 = chi0(rho / (K0 * sqT * s0))
    inner = profile_phi(y, s0, constants) + (spec.d0 * A**3 / s0**1.5 + A / s0**2 * spec.d1 * y) * chi0(32.0 * z0 / K0)
    out = pref * inner * chi1
    outer = chi1 < 1.0
    if np.any(outer):
        out[outer] += H_star(rho[outer], constants, params.R) * (1.0 - chi1[outer])
    return out


def construct_initial_data(
    spec: PreparedDataSpec,
    params: ModelParameters,
    constants: DerivedConstants,
    grid: RadialGrid | None = None,
) -> RadialField:
    """Prepared data on ``grid`` (default :func:`prepared_grid`)."""
    if grid is None:
        grid = prepared_grid(spec, params)
    _check_resolution(grid, spec)
    return RadialField(grid, prepared_values(grid.nodes, spec, params, constants))


def initial_modes(
    u: RadialField,
    spec: PreparedDataSpec,
    params: ModelParameters,
    constants: DerivedConstants,
    theta: float | str | None = None,
) -> tuple[ModeDecomposition, float]:
    """Decompose q(·, s0) of a field at t = 0; returns (modes, θ used).

    ``theta`` is a number, ``"measured"`` (θ of ``u``, the default) or
    ``"reference"`` (θ∞ s0^{−β}).  The reference normalization makes the map
    (d0, d1) ↦ q exactly affine; the measured θ(0) depends on the data.
    """
    if theta is None or theta == "measured":
        th = compute_theta(u, params)
    elif theta == "reference":
        th = constants.theta_inf * spec.s0 ** (-constants.beta)
    elif isinstance(theta, str):
        raise ValueError(f"unknown theta mode {theta!r}")
    else:
        th = float(theta)
    frame = to_similarity(u, 0.0, spec.T, th, spec.K0, params)
    q = compute_q(frame, constants)
    return decompose(q, frame.y_nodes, frame.s, spec.K0, N=1), th


@dataclass
class InitialDataReport:
    theta0: float
    theta_target: float
    log_exponent: float
    bulk: ShrinkingSetReport
    modes: ModeDecomposition = field(repr=False)
    p2: list[P2Sample] = field(repr=False, default_factory=list)
    delta0: float = math.nan
    C0: float = math.nan

    @property
    def theta_correction(self) -> float:
        """θ(0)/(θ∞|ln T|^{−β}) − 1."""
        return self.theta0 / self.theta_target - 1.0

    @property
    def p2_gap(self) -> float:
        return max((s.gap for s in self.p2), default=math.nan)

    @property
    def p2_flatness(self) -> float:
        return max((s.grad_bound for s in self.p2), default=math.nan)

    @property
    def p2_pass(self) -> bool:
        return bool(self.p2) and self.p2_gap <= self.delta0 and self.p2_flatness <= self.C0

    @property
    def bulk_min_margin(self) -> float:
        return min(c.margin for c in self.bulk.clauses)

    def to_text(self) -> str:
        lines = [
            f"theta(0) = {self.theta0:.10g}, theta_inf |ln T|^-beta = {self.theta_target:.10g}, "
            f"correction {self.theta_correction:+.3e}",
            f"measured log-exponent of theta(0): {self.log_exponent:.6g}",
            self.bulk.to_text(),
        ]
        if self.p2:
            lines.append(
                f"P2: max |U - hatU| = {self.p2_gap:.3e} (delta0 = {self.delta0}), "
                f"max |grad U| sqrt|ln rho| = {self.p2_flatness:.3e} (C0 = {self.C0}): "
                f"{'pass' if self.p2_pass else 'FAIL'}"
            )
        return "\n".join(lines)


def verify_in_S0(
    u: RadialField,
    spec: PreparedDataSpec,
    cfg: ShrinkingSetConfig,
    params: ModelParameters,
    constants: DerivedConstants,
) -> InitialDataReport:
    """θ(0), the stricter bulk bounds at s0 and the intermediate-region clauses.

    The log-exponent reported is ln(θ(0)/θ∞)/ln|ln T|, to be compared with −β.
    """
    dec, th = initial_modes(u, spec, params, constants)
    s0 = spec.s0
    target = constants.theta_inf * s0 ** (-constants.beta)
    bulk = shrinking_set_check(dec, cfg, stage="initial")
    exponent = math.log(th / constants.theta_inf) / math.log(s0) if params.gamma > 0 else 0.0
    p2: list[P2Sample] = []
    if cfg.epsilon0 < params.R / 2:
        p2 = p2_diagnostic(u, th, params, constants, spec.K0, spec.T, cfg.epsilon0, cfg.alpha0)
    return InitialDataReport(
        theta0=th,
        theta_target=target,
        log_exponent=exponent,
        bulk=bulk,
        modes=dec,
        p2=p2,
        delta0=cfg.delta0,
        C0=cfg.C0,
    )


def prepared_data_csv(u: RadialField, spec: PreparedDataSpec) -> str:
    return field_to_csv(u, spec.header())
