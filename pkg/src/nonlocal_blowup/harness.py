"""Experiment orchestration: configuration, runs, fits, the shooting sweep, export.

Configuration grammar
---------------------
A config file is INI text read by :mod:`configparser`: ``[section]`` headers
followed by ``key = value`` lines; ``#`` and ``;`` start comments.  Values are
parsed as bool (true/false), int, float or string, in that order.  Command
line overrides use dotted keys, ``section.key=value``.  The sections and
keys are the fields of the dataclasses below; unknown keys are rejected.
The canonical text (:meth:`RunConfig.to_ini`) lists every section and key in
declaration order with ``repr`` values, and its SHA-256 is the config hash.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .grid import RadialField, build_grid
from .initial_data import PreparedDataSpec, construct_initial_data, prepared_grid
from .intermediate import OutOfWindowError, hat_U, rescaled_U, solve_rho_of_x
from .params import DerivedConstants, ModelParameters, derive_constants
from .reduced import QModeState, q_mode_step, synthetic_lambda
from .similarity import compute_q, profile_phi, to_similarity
from .solver import SolverConfig, TrajectoryRecord, adaptive_dt, initial_state, run_to_blowup, step
from .spectral import ShrinkingSetConfig, decompose, modes_to_csv, shrinking_set_check

__all__ = [
    "ModelSection",
    "GridSection",
    "SolverSection",
    "InitialSection",
    "ShrinkingSection",
    "FitSection",
    "SweepSection",
    "RunConfig",
    "ConfigError",
    "ExperimentRecord",
    "Verdict",
    "SweepPoint",
    "SweepResult",
    "run_experiment",
    "fit_log_exponent",
    "fit_log_exponent_s",
    "shooting_sweep",
    "export",
    "read_summary",
    "OUTPUT_ENV",
    "default_output_root",
    "summary_csv",
]

OUTPUT_ENV = "NONLOCAL_BLOWUP_OUTPUT"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class StageError(RuntimeError):
    """An error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage


@dataclass(frozen=True)
class ModelSection:
    p: float = 3.0
    r: float = 1.0
    gamma: float = 0.0
    N: int = 1
    R: float = 1.0
    critical: bool = False


@dataclass(frozen=True)
class GridSection:
    n_nodes: int = 2000
    stretching: str = "origin-refined"
    refined_fraction: float = 0.8


@dataclass(frozen=True)
class SolverSection:
    scheme: str = "imex-rk2"
    safety: float = 0.02
    dt_max: float = 1e-2
    M_stop: float = 1e8
    max_steps: int = 1_000_000
    snapshot_ds: float = 0.5
    fit_window: int = 20
    resolve_factor: float = 20.0
    stop_unresolved: float = 2.0


@dataclass(frozen=True)
class InitialSection:
    kind: str = "bump"
    amplitude: float = 10.0
    width: float = 0.01
    d0: float = 0.0
    d1: float = 0.0
    log_T: float = 100.0
    spacing_factor: float = 20.0


@dataclass(frozen=True)
class ShrinkingSection:
    A: float = 4.0
    K0: float = 10.0
    epsilon0: float = 0.1
    alpha0: float = 1.0
    delta0: float = 0.1
    C0: float = 1.0
    eta0: float = 0.1

    def to_config(self) -> ShrinkingSetConfig:
        return ShrinkingSetConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class FitSection:
    L_min: float = 8.0
    profile_radius: float = 5.0
    monotone_last: int = 5
    dominance: float = 2.0


@dataclass(frozen=True)
class SweepSection:
    mode: str = "pde"
    d0_min: float = -2.0
    d0_max: float = 2.0
    n_d0: int = 5
    d1_min: float = -2.0
    d1_max: float = 2.0
    n_d1: int = 5
    log_T: float = 50.0
    horizon: float = 8.0
    check_ds: float = 0.25
    model_ds: float = 0.05
    n_nodes: int = 4000
    spacing_factor: float = 100.0
    safety: float = 0.05
    workers: int = 1


_SECTIONS = {
    "model": ModelSection,
    "grid": GridSection,
    "solver": SolverSection,
    "initial": InitialSection,
    "shrinking": ShrinkingSection,
    "fit": FitSection,
    "sweep": SweepSection,
}


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _coerce(cls, key: str, value):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[key]
    try:
        if ftype == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false")
            return value
        if ftype == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{key} must be an integer")
            return int(value)
        if ftype == "float":
            if isinstance(value, bool) or isinstance(value, str):
                raise ConfigError(f"{key} must be a number")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {key}: {value!r}") from err


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    initial: InitialSection = field(default_factory=InitialSection)
    shrinking: ShrinkingSection = field(default_factory=ShrinkingSection)
    fit: FitSection = field(default_factory=FitSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    seed: int = 0
    output: str = ""

    @classmethod
    def from_ini(cls, text: str, overrides: Sequence[str] = ()) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str  # keep key case (N, R, M_stop)
        parser.read_string(text)
        values: dict[str, dict[str, object]] = {}
        top: dict[str, object] = {}
        for sec in parser.sections():
            for key, raw in parser.items(sec):
                _assign(values, top, sec, key, _parse_value(raw))
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep or "." not in key:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            sec, _, k = key.strip().partition(".")
            _assign(values, top, sec, k, _parse_value(raw))
        sections = {name: sc(**values.get(name, {})) for name, sc in _SECTIONS.items()}
        cfg = cls(**sections, **top)
        cfg.validate()
        return cfg

    def with_overrides(self, overrides: Sequence[str]) -> "RunConfig":
        return RunConfig.from_ini(self.to_ini(), overrides)

    def to_ini(self) -> str:
        buf = io.StringIO()
        buf.write("[run]\n")
        buf.write(f"seed = {self.seed!r}\n")
        buf.write(f"output = {self.output}\n")
        for name in _SECTIONS:
            buf.write(f"\n[{name}]\n")
            sec = getattr(self, name)
            for f in dataclasses.fields(sec):
                v = getattr(sec, f.name)
                text = str(v).lower() if isinstance(v, bool) else (v if isinstance(v, str) else repr(v))
                buf.write(f"{f.name} = {text}\n")
        return buf.getvalue()

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def parameters(self) -> ModelParameters:
        m = self.model
        return ModelParameters(p=m.p, r=m.r, gamma=m.gamma, N=m.N, R=m.R, critical=m.critical)

    def validate(self) -> None:
        try:
            self.parameters()
            self.shrinking.to_config()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.grid.n_nodes < 16:
            raise ConfigError("grid.n_nodes must be at least 16")
        if self.grid.stretching not in ("uniform", "origin-refined"):
            raise ConfigError(f"unknown grid.stretching {self.grid.stretching!r}")
        if self.solver.scheme not in ("explicit-euler", "imex", "imex-rk2"):
            raise ConfigError(f"unknown solver.scheme {self.solver.scheme!r}")
        if self.initial.kind not in ("bump", "prepared"):
            raise ConfigError(f"unknown initial.kind {self.initial.kind!r}")
        if self.sweep.mode not in ("model", "pde"):
            raise ConfigError(f"unknown sweep.mode {self.sweep.mode!r}")
        if self.sweep.n_d0 < 1 or self.sweep.n_d1 < 1 or self.sweep.workers < 1:
            raise ConfigError("sweep sizes and workers must be positive")

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            scheme=s.scheme,
            safety=s.safety,
            dt_max=s.dt_max,
            M_stop=s.M_stop,
            max_steps=s.max_steps,
            snapshot_ds=s.snapshot_ds,
            fit_window=s.fit_window,
            resolve_factor=s.resolve_factor,
            stop_unresolved=s.stop_unresolved if s.stop_unresolved > 0 else None,
        )


def _assign(values: dict, top: dict, sec: str, key: str, value) -> None:
    if sec == "run":
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("seed must be an integer")
            top["seed"] = value
        elif key == "output":
            top["output"] = str(value) if value != "" else ""
        else:
            raise ConfigError(f"unknown key run.{key}")
        return
    if sec not in _SECTIONS:
        raise ConfigError(f"unknown section {sec!r}")
    cls = _SECTIONS[sec]
    if key not in {f.name for f in dataclasses.fields(cls)}:
        raise ConfigError(f"unknown key {sec}.{key}")
    values.setdefault(sec, {})[key] = _coerce(cls, key, value)


# ---------------------------------------------------------------- fitting


def fit_log_exponent(t, v, T_est: float, min_samples: int = 20, min_decades: float = 2.0) -> tuple[float, float]:
    """Least-squares slope of ln v against ln|ln(T_est − t)| and its standard error."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    tau = T_est - t
    if t.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {t.size}")
    if np.any(tau <= 0) or np.any(v <= 0):
        raise ValueError("samples must satisfy t < T_est and v > 0")
    if math.log10(tau.max() / tau.min()) < min_decades:
        raise ValueError(f"T_est − t must span at least {min_decades} decades")
    return _loglog_fit(np.abs(np.log(tau)), v)


def fit_log_exponent_s(s, v, min_samples: int = 20) -> tuple[float, float]:
    """Slope of ln v against ln s, for series already indexed by s = |ln(T−t)|."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if s.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {s.size}")
    if np.any(s <= 0) or np.any(v <= 0):
        raise ValueError("s and v must be positive")
    return _loglog_fit(s, v)


def _loglog_fit(L: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    res = stats.linregress(np.log(L), np.log(v))
    return float(res.slope), float(res.stderr)


# ---------------------------------------------------------------- experiment


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentRecord:
    config_hash: str
    summary: dict[str, float | str]
    exponents: dict[str, tuple[float, float, float, float]]
    verdicts: list[Verdict]
    tables: dict[str, str] = field(default_factory=dict, repr=False)
    config_text: str = field(default="", repr=False)

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict_text(self) -> str:
        return "\n".join(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.detail}" for v in self.verdicts)


def _initial_field(cfg: RunConfig, params: ModelParameters, constants: DerivedConstants) -> RadialField:
    ini = cfg.initial
    if ini.kind == "prepared":
        spec = PreparedDataSpec(d0=ini.d0, d1=ini.d1, T=math.exp(-ini.log_T), A=cfg.shrinking.A, K0=cfg.shrinking.K0)
        grid = prepared_grid(spec, params, cfg.grid.n_nodes, ini.spacing_factor)
        return construct_initial_data(spec, params, constants, grid)
    g = build_grid(params.R, cfg.grid.n_nodes, params.N, cfg.grid.stretching, cfg.grid.refined_fraction)
    return RadialField(g, ini.amplitude * np.exp(-g.nodes**2 / ini.width))


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as err:  # noqa: BLE001 - re-raised with the stage tag
        raise StageError(name, err) from err


def _profile_errors(rec: TrajectoryRecord, constants: DerivedConstants, cfg: RunConfig):
    """(s, sup_{|y|<=radius}|W−φ|, W(0)/κ) over trusted snapshots, cutoff-free."""
    params = rec.params
    rows = []
    frames = []
    for sn in rec.trusted_snapshots():
        if sn.t <= 0:
            continue
        fr = to_similarity(rec.snapshot_field(sn), sn.t, rec.T_est, sn.theta, cfg.shrinking.K0, params)
        if fr.s <= 1:
            continue
        m = fr.y_nodes <= cfg.fit.profile_radius
        if m.sum() < 3:
            continue
        err = float(np.max(np.abs(fr.W - profile_phi(fr.y_nodes, fr.s, constants))[m]))
        rows.append((fr.s, err, float(fr.W[0]) / constants.kappa))
        frames.append(fr)
    return rows, frames


def _p2_rows(rec: TrajectoryRecord, constants: DerivedConstants, cfg: RunConfig):
    """|𝒰(x, 0, τ) − Û(x, τ)| for τ ∈ [max(τ₀, 0), 0.9] at a few x."""
    params = rec.params
    K0 = cfg.shrinking.K0
    T = rec.T_est
    rows = []
    t_last = rec.snapshots[-1].t
    for frac in (0.5, 0.25, 0.1, 0.05):
        rho_target = frac * T
        x = K0 / 4.0 * math.sqrt(rho_target * abs(math.log(rho_target)))
        if x >= params.R / 2:
            continue
        rho = solve_rho_of_x(x, K0)
        tau0 = max(1.0 - T / rho, 0.0)
        for tau in np.linspace(tau0, 0.9, 10):
            if tau * rho + T - rho > t_last:
                break
            try:
                U = float(rescaled_U(x, 0.0, tau, rec, params, K0))
            except OutOfWindowError:
                break
            hU = hat_U(x, tau, rec, params, constants, K0, T)
            rows.append((x, tau, U, hU, abs(U - hU)))
    return rows


def run_experiment(cfg: RunConfig) -> ExperimentRecord:
    """Solver, similarity, spectral and intermediate stages for one config."""
    cfg.validate()
    params = _stage("params", cfg.parameters)
    constants = _stage("params", derive_constants, params)
    u0 = _stage("initial-data", _initial_field, cfg, params, constants)
    rec = _stage("solver", run_to_blowup, u0, params, cfg.solver_config())

    summary: dict[str, float | str] = {
        "status": rec.status,
        "message": rec.message,
        "steps": float(len(rec.times) - 1),
        "T_est": rec.T_est,
        "T_uncertainty": rec.T_uncertainty,
        "beta": constants.beta,
        "kappa": constants.kappa,
        "theta_inf": constants.theta_inf,
        "h_min": rec.grid.h_min,
    }
    verdicts: list[Verdict] = []
    exponents: dict[str, tuple[float, float, float, float]] = {}
    tables = {"series": rec.series_csv()}

    if not rec.blew_up:
        verdicts.append(Verdict("blowup", False, f"status {rec.status}: {rec.message}"))
        return ExperimentRecord(cfg.config_hash, summary, exponents, verdicts, tables, cfg.to_ini())
    verdicts.append(Verdict("blowup", True, f"T_est = {rec.T_est:.12g} ± {rec.T_uncertainty:.2e}"))

    rows, frames = _stage("similarity", _profile_errors, rec, constants, cfg)
    tables["profile_error"] = _csv(["s", "profile_error", "W0_over_kappa"], rows)
    k = cfg.fit.monotone_last
    if len(rows) >= k:
        errs = [r[1] for r in rows[-k:]]
        mono = all(b < a for a, b in zip(errs, errs[1:]))
        verdicts.append(Verdict("profile-error-decreasing", mono, f"last {k}: " + ", ".join(f"{e:.3e}" for e in errs)))
        w0 = rows[-1][2]
        verdicts.append(Verdict("W0-near-kappa", 0.8 <= w0 <= 1.2, f"(T−t)^(1/(p−1)) θ^(1/(p−1)) u(0)/κ = {w0:.4f}"))
        summary["final_s"] = rows[-1][0]
        summary["final_profile_error"] = rows[-1][1]
        summary["final_W0_over_kappa"] = w0
    else:
        verdicts.append(Verdict("profile-error-decreasing", False, f"only {len(rows)} trusted frames"))

    decs = []
    for fr in frames:
        q = compute_q(fr, constants)
        decs.append(_stage("spectral", decompose, q, fr.y_nodes, fr.s, cfg.shrinking.K0))
    tables["modes"] = modes_to_csv(decs)

    if params.gamma > 0:
        dom = rec.sup >= cfg.fit.dominance * rec.sup[0]
        th = rec.theta[dom]
        mono = bool(th.size > 1 and np.all(np.diff(th) < 0))
        verdicts.append(Verdict("theta-decreasing", mono, f"{th.size} samples with sup >= {cfg.fit.dominance}·sup(0)"))
        trusted = np.array([rec.is_trusted(t) for t in rec.times])
        tau = rec.T_est - rec.times
        with np.errstate(divide="ignore", invalid="ignore"):
            L = np.where(tau > 0, -np.log(np.where(tau > 0, tau, 1.0)), 0.0)
        sel = trusted & (L >= cfg.fit.L_min)
        try:
            slope, err = _stage("fit", fit_log_exponent, rec.times[sel], rec.theta[sel], rec.T_est)
            lo, hi = _ci(slope, err, int(sel.sum()))
            exponents["theta"] = (slope, err, lo, hi)
            bias = slope + constants.beta
            ratio = slope / -constants.beta
            ok = slope < 0 and 0.3 <= ratio <= 3.0
            verdicts.append(
                Verdict("theta-log-exponent", ok, f"{slope:.5f} ± {err:.1e} vs −β = {-constants.beta:.5f}; ratio {ratio:.3f}, window bias {bias:+.5f}")
            )
            summary["theta_exponent"] = slope
            summary["theta_exponent_bias"] = bias
            summary["fit_L_min"] = float(L[sel].min())
            summary["fit_L_max"] = float(L[sel].max())
        except StageError as err:
            verdicts.append(Verdict("theta-log-exponent", False, str(err)))
        tables["theta"] = _csv(["L", "theta"], zip(L[sel], rec.theta[sel]))

    p2 = _stage("intermediate", _p2_rows, rec, constants, cfg)
    tables["p2"] = _csv(["x", "tau", "U", "hatU", "gap"], p2)
    if p2:
        summary["p2_max_gap"] = max(r[4] for r in p2)

    return ExperimentRecord(cfg.config_hash, summary, exponents, verdicts, tables, cfg.to_ini())


def _ci(slope: float, err: float, n: int, level: float = 0.95) -> tuple[float, float]:
    q = stats.t.ppf(0.5 + level / 2, max(n - 2, 1))
    return slope - q * err, slope + q * err


def _csv(cols: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------- shooting


@dataclass(frozen=True)
class SweepPoint:
    d0: float
    d1: float
    initial_member: bool
    exit_clause: str
    exit_s: float
    exit_sign: int
    censored: bool
    on_boundary: bool
    steps: int


@dataclass
class SweepResult:
    mode: str
    s0: float
    points: list[SweepPoint]

    @property
    def sign_change(self) -> bool:
        """q0-exit directions of both signs occur across the grid."""
        signs = {p.exit_sign for p in self.points if p.exit_clause == "q0"}
        return {-1, 1} <= signs

    @property
    def boundary_points(self) -> list[SweepPoint]:
        return [p for p in self.points if p.on_boundary]

    @property
    def boundary_exits_via_q01(self) -> bool:
        pts = self.boundary_points
        return bool(pts) and all(p.exit_clause in ("q0", "q1") for p in pts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d0,d1,initial_member,exit_clause,exit_s,exit_sign,censored,on_boundary,steps\n")
        for p in self.points:
            buf.write(
                f"{float(p.d0)!r},{float(p.d1)!r},{int(p.initial_member)},{p.exit_clause},{float(p.exit_s)!r},"
                f"{p.exit_sign},{int(p.censored)},{int(p.on_boundary)},{p.steps}\n"
            )
        return buf.getvalue()

    def map_text(self) -> str:
        """Exit map: rows d1 (descending), columns d0; '+'/'-' q0 exits, '>'/'<' q1 exits."""
        d0s = sorted({p.d0 for p in self.points})
        d1s = sorted({p.d1 for p in self.points}, reverse=True)
        look = {(p.d0, p.d1): p for p in self.points}
        sym = {("q0", 1): "+", ("q0", -1): "-", ("q1", 1): ">", ("q1", -1): "<"}
        lines = []
        for d1 in d1s:
            cells = []
            for d0 in d0s:
                p = look[(d0, d1)]
                cells.append("." if p.censored else sym.get((p.exit_clause, p.exit_sign), "?"))
            lines.append(f"d1={d1:+.2f} " + " ".join(cells))
        return "\n".join(lines)


def _model_point(d0: float, d1: float, cfg: RunConfig, constants: DerivedConstants, s0: float, on_boundary: bool) -> SweepPoint:
    A = cfg.shrinking.A
    lam = synthetic_lambda(A)
    N = cfg.model.N
    q1 = np.zeros(N)
    q1[0] = d1 * A / s0**2
    st = QModeState(s0, d0 * A**3 / s0**1.5, q1, np.zeros((N, N)), lam(s0))
    horizon = s0 + cfg.sweep.horizon
    n = 0
    while True:
        clause = _model_clause(st, A)
        if clause is not None:
            name, sign = clause
            return SweepPoint(d0, d1, n > 0, name, st.s, sign, False, on_boundary, n)
        if st.s >= horizon:
            return SweepPoint(d0, d1, True, "none", st.s, 0, True, on_boundary, n)
        st = q_mode_step(st, cfg.sweep.model_ds, constants, lam)
        n += 1


def _model_clause(st: QModeState, A: float):
    s = st.s
    if abs(st.q0) > A**3 / s**1.5:
        return "q0", int(np.sign(st.q0))
    i = int(np.argmax(np.abs(st.q1)))
    if abs(st.q1[i]) > A / s**2:
        return "q1", int(np.sign(st.q1[i]))
    if np.max(np.abs(st.q2)) > A**4 / s**1.5:
        return "q2", int(np.sign(st.q2.flat[np.argmax(np.abs(st.q2))]))
    return None


def _pde_point(d0: float, d1: float, cfg: RunConfig, on_boundary: bool) -> SweepPoint:
    params = cfg.parameters()
    constants = derive_constants(params)
    sw = cfg.sweep
    sc = cfg.shrinking.to_config()
    T = math.exp(-sw.log_T)
    spec = PreparedDataSpec(d0=d0, d1=d1, T=T, A=sc.A, K0=sc.K0, strict=False)
    grid = prepared_grid(spec, params, sw.n_nodes, sw.spacing_factor)
    u = construct_initial_data(spec, params, constants, grid)
    st = initial_state(u, params)
    s0 = spec.s0
    s_check = s0
    n = 0
    e = 1.0 / (params.p - 1.0)
    while True:
        fr = to_similarity(st.u, st.t, T, st.theta, sc.K0, params)
        dec = decompose(compute_q(fr, constants), fr.y_nodes, fr.s, sc.K0)
        rep = shrinking_set_check(dec, sc)
        if not rep.member:
            name = rep.failed[0]
            val = dec.q0 if name == "q0" else (float(dec.q1[0]) if name == "q1" else 0.0)
            return SweepPoint(d0, d1, n > 0, name, fr.s, int(np.sign(val)), False, on_boundary, n)
        if fr.s >= s0 + sw.horizon:
            return SweepPoint(d0, d1, True, "none", fr.s, 0, True, on_boundary, n)
        s_check += sw.check_ds
        t_target = T - math.exp(-s_check)
        while st.t < t_target:
            dt = min(adaptive_dt(st, sw.safety, "imex"), t_target - st.t)
            w0 = ((T - st.t) * st.theta) ** e * st.u.sup
            if st.t + dt == st.t or w0 > 10.0 * constants.kappa:
                # blowing up before T: the q0 mode has left upward
                return SweepPoint(d0, d1, True, "q0", -math.log(T - st.t), 1, False, on_boundary, n)
            st = step(replace(st, dt=dt), "imex")
            n += 1


def _sweep_task(args):
    mode, d0, d1, cfg_text, on_boundary = args
    cfg = RunConfig.from_ini(cfg_text)
    if mode == "model":
        constants = derive_constants(cfg.parameters())
        return _model_point(d0, d1, cfg, constants, cfg.sweep.log_T, on_boundary)
    return _pde_point(d0, d1, cfg, on_boundary)


def shooting_sweep(cfg: RunConfig, d0_values=None, d1_values=None, mode: str | None = None) -> SweepResult:
    """Exit map over a (d0, d1) grid; points are independent runs.

    Model mode starts the q-system at q0 = d0 A³/s0^{3/2}, q1 = d1 A/s0²,
    q2 = 0 with a synthetic λ̃, so |d0| = 1 or |d1| = 1 is the boundary of
    the (q0, q1) box.  PDE mode runs the solver from prepared data with
    T = e^{−log_T} and checks the shrinking set every ``check_ds`` in s.
    """
    sw = cfg.sweep
    mode = mode or sw.mode
    if d0_values is None:
        d0_values = np.linspace(sw.d0_min, sw.d0_max, sw.n_d0)
    if d1_values is None:
        d1_values = np.linspace(sw.d1_min, sw.d1_max, sw.n_d1)
    d0_values = [float(v) for v in d0_values]
    d1_values = [float(v) for v in d1_values]
    text = cfg.to_ini()
    tasks = []
    for d1 in d1_values:
        for d0 in d0_values:
            if mode == "model":
                edge = math.isclose(max(abs(d0), abs(d1)), 1.0)
            else:
                edge = d0 in (d0_values[0], d0_values[-1]) or d1 in (d1_values[0], d1_values[-1])
            tasks.append((mode, d0, d1, text, edge))
    if sw.workers > 1:
        with ProcessPoolExecutor(max_workers=sw.workers) as pool:
            points = list(pool.map(_sweep_task, tasks))
    else:
        points = [_sweep_task(t) for t in tasks]
    return SweepResult(mode, float(sw.log_T), points)


# ---------------------------------------------------------------- export

PLOT_SCRIPT = '''"""Regenerate the diagnostic figures from the CSV files in this directory."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        return None
    head, body = rows[0], rows[1:]
    cols = {h: [] for h in head}
    for r in body:
        for h, v in zip(head, r):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(v)
    return cols


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name), dpi=120)
    plt.close(fig)


def main():
    made = []
    d = read("series.csv")
    if d and d["t"]:
        fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
        ax[0].semilogy(d["t"], d["sup_u"])
        ax[0].set_xlabel("t")
        ax[0].set_ylabel("sup u")
        ax[1].plot(d["t"], d["theta"])
        ax[1].set_xlabel("t")
        ax[1].set_ylabel("theta")
        save(fig, "series.png")
        made.append("series.png")
    d = read("theta.csv")
    if d and d["L"]:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.loglog(d["L"], d["theta"], ".")
        ax.set_xlabel("|ln(T-t)|")
        ax.set_ylabel("theta")
        save(fig, "theta_decay.png")
        made.append("theta_decay.png")
    d = read("profile_error.csv")
    if d and d["s"]:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.semilogy(d["s"], d["profile_error"], "o-", label="sup |W - phi|")
        ax.semilogy(d["s"], [s ** -0.5 for s in d["s"]], "--", label="1/sqrt(s)")
        ax.set_xlabel("s")
        ax.legend()
        save(fig, "profile_error.png")
        made.append("profile_error.png")
    d = read("modes.csv")
    if d and d["s"]:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for key in d:
            if key != "s":
                ax.semilogy(d["s"], [abs(v) + 1e-300 for v in d[key]], label=key)
        ax.set_xlabel("s")
        ax.legend(fontsize=7)
        save(fig, "modes.png")
        made.append("modes.png")
    d = read("p2.csv")
    if d and d["x"]:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.plot(d["tau"], d["gap"], ".")
        ax.set_xlabel("tau")
        ax.set_ylabel("|U - hatU|")
        save(fig, "p2_flatness.png")
        made.append("p2_flatness.png")
    print("\\n".join(made))
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''

_TABLE_FILES = {
    "series": ("series.csv", "t,sup_u,theta,dt\n"),
    "profile_error": ("profile_error.csv", "s,profile_error,W0_over_kappa\n"),
    "modes": ("modes.csv", "s,q0,q1_0,q2_00,q_minus_weighted,q_e_sup\n"),
    "theta": ("theta.csv", "L,theta\n"),
    "p2": ("p2.csv", "x,tau,U,hatU,gap\n"),
}


def summary_csv(record: ExperimentRecord) -> str:
    buf = io.StringIO()
    buf.write("key,value\n")
    buf.write(f"config_hash,{record.config_hash}\n")
    for k, v in record.summary.items():
        buf.write(f"summary.{k},{_fmt(v)}\n")
    for k, (slope, err, lo, hi) in record.exponents.items():
        buf.write(f"exponent.{k}," + ";".join(repr(float(x)) for x in (slope, err, lo, hi)) + "\n")
    for v in record.verdicts:
        detail = v.detail.replace(",", ";").replace("\n", " ")
        buf.write(f"verdict.{v.name},{int(v.passed)};{detail}\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, str):
        return "s:" + v.replace(",", ";").replace("\n", " ")
    return repr(float(v))


def read_summary(text: str) -> ExperimentRecord:
    """Parse :func:`summary_csv` output back into a record (tables empty)."""
    chash = ""
    summary: dict[str, float | str] = {}
    exponents: dict[str, tuple[float, float, float, float]] = {}
    verdicts: list[Verdict] = []
    for line in text.splitlines()[1:]:
        key, _, val = line.partition(",")
        if key == "config_hash":
            chash = val
        elif key.startswith("summary."):
            summary[key[8:]] = val[2:] if val.startswith("s:") else float(val)
        elif key.startswith("exponent."):
            parts = tuple(float(x) for x in val.split(";"))
            exponents[key[9:]] = parts  # type: ignore[assignment]
        elif key.startswith("verdict."):
            flag, _, detail = val.partition(";")
            verdicts.append(Verdict(key[8:], flag == "1", detail))
    return ExperimentRecord(chash, summary, exponents, verdicts)


def export(record: ExperimentRecord, outdir: str | os.PathLike, formats: Sequence[str] = ("csv", "plot-script")) -> list[Path]:
    """Write the record's CSVs, config and plot script; returns the paths."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    written = []
    for fmt in formats:
        if fmt == "csv":
            for key, (name, header) in _TABLE_FILES.items():
                text = record.tables.get(key) or header
                written.append(_write(out / name, text))
            written.append(_write(out / "summary.csv", summary_csv(record)))
            if record.config_text:
                written.append(_write(out / "config.ini", record.config_text))
        elif fmt == "plot-script":
            written.append(_write(out / "plot_diagnostics.py", PLOT_SCRIPT))
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    return written


def _write(path: Path, text: str) -> Path:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "nonlocal_blowup_runs"))
