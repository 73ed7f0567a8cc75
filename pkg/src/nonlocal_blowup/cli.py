"""Command line entry point.

Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on an
execution error.  Outputs go to ``--output``, else ``[run] output`` from the
config, else ``$NONLOCAL_BLOWUP_OUTPUT/<verb>-<config hash prefix>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    RunConfig,
    default_output_root,
    export,
    fit_log_exponent,
    fit_log_exponent_s,
    read_summary,
    run_experiment,
    shooting_sweep,
)
from .initial_data import PreparedDataSpec, construct_initial_data, prepared_data_csv, prepared_grid, verify_in_S0
from .params import derive_constants

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


def _load_config(args) -> RunConfig:
    text = Path(args.config).read_text() if args.config else ""
    return RunConfig.from_ini(text, args.set or [])


def _outdir(args, cfg: RunConfig, verb: str) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    if cfg.output:
        return Path(cfg.output)
    return default_output_root() / f"{verb}-{cfg.config_hash[:12]}"


def cmd_constants(args) -> int:
    cfg = _load_config(args)
    c = derive_constants(cfg.parameters(), sphere_factor=not args.no_sphere_factor)
    print(c.to_text())
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    rec = run_experiment(cfg)
    out = _outdir(args, cfg, "simulate")
    export(rec, out)
    print(rec.verdict_text())
    print(f"outputs: {out}")
    return EXIT_OK if rec.all_pass else EXIT_VERDICT


def _read_table(path: Path) -> dict[str, np.ndarray]:
    text = "".join(line for line in path.read_text().splitlines(True) if not line.startswith("#"))
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return {}
    head = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(head))
    return {h: data[:, i] for i, h in enumerate(head)}


def cmd_diagnose(args) -> int:
    """Re-derive the verdicts of an exported run from its CSV files."""
    run = Path(args.run_dir)
    rec = read_summary((run / "summary.csv").read_text())
    cfg = RunConfig.from_ini((run / "config.ini").read_text()) if (run / "config.ini").exists() else RunConfig()
    ok = True
    pe = _read_table(run / "profile_error.csv") if (run / "profile_error.csv").exists() else {}
    k = cfg.fit.monotone_last
    if pe and pe["s"].size >= k:
        errs = pe["profile_error"][-k:]
        mono = bool(np.all(np.diff(errs) < 0))
        w0 = float(pe["W0_over_kappa"][-1])
        band = 0.8 <= w0 <= 1.2
        print(f"{'PASS' if mono else 'FAIL'}  profile error decreasing over the last {k} frames")
        print(f"{'PASS' if band else 'FAIL'}  W(0)/kappa = {w0:.4f} at s = {pe['s'][-1]:.3f}")
        ok &= mono and band
    th = _read_table(run / "theta.csv") if (run / "theta.csv").exists() else {}
    if th and th["L"].size >= 20:
        slope, err = fit_log_exponent_s(th["L"], th["theta"])
        beta = float(rec.summary.get("beta", math.nan))
        ratio = slope / -beta if beta > 0 else math.nan
        good = slope < 0 and 0.3 <= ratio <= 3.0
        print(f"{'PASS' if good else 'FAIL'}  theta log-exponent {slope:.5f} ± {err:.1e} (ratio to -beta {ratio:.3f})")
        ok &= good
    for v in rec.verdicts:
        print(f"recorded {'PASS' if v.passed else 'FAIL'}  {v.name}: {v.detail}")
        ok &= v.passed
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    res = shooting_sweep(cfg, mode=args.mode)
    out = _outdir(args, cfg, "sweep")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(res.to_csv())
    (out / "config.ini").write_text(cfg.to_ini())
    print(res.map_text())
    print(f"sign change in q0 exits: {res.sign_change}")
    print(f"boundary points exit via (q0, q1): {res.boundary_exits_via_q01}")
    print(f"outputs: {out}")
    return EXIT_OK if res.sign_change and res.boundary_exits_via_q01 else EXIT_VERDICT


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    params = cfg.parameters()
    constants = derive_constants(params)
    ini = cfg.initial
    spec = PreparedDataSpec(d0=ini.d0, d1=ini.d1, T=math.exp(-ini.log_T), A=cfg.shrinking.A, K0=cfg.shrinking.K0)
    grid = prepared_grid(spec, params, cfg.grid.n_nodes if args.n_nodes is None else args.n_nodes, ini.spacing_factor)
    u = construct_initial_data(spec, params, constants, grid)
    rep = verify_in_S0(u, spec, cfg.shrinking.to_config(), params, constants)
    out = _outdir(args, cfg, "initial-data")
    out.mkdir(parents=True, exist_ok=True)
    (out / "prepared_data.csv").write_text(prepared_data_csv(u, spec))
    print(rep.to_text())
    print(f"outputs: {out}")
    return EXIT_OK if rep.bulk.member else EXIT_VERDICT


def cmd_fit(args) -> int:
    tab = _read_table(Path(args.csv))
    v = tab[args.v_col]
    if args.s_col:
        slope, err = fit_log_exponent_s(tab[args.s_col], v)
    else:
        if args.T_est is None:
            raise ValueError("--T-est is required unless --s-col is given")
        slope, err = fit_log_exponent(tab[args.t_col], v, args.T_est)
    print(f"exponent {slope!r} stderr {err!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal-blowup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
        p.add_argument("--output", help="output directory")

    p = sub.add_parser("constants", help="print the derived constants")
    common(p)
    p.add_argument("--no-sphere-factor", action="store_true", help="omit |S^(N-1)| from the mass constant")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", help="run the solver and all diagnostics")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="re-check the verdicts of an exported run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="shooting sweep over (d0, d1)")
    common(p)
    p.add_argument("--mode", choices=("model", "pde"), default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-initial-data", help="build prepared data and check it enters the shrinking set")
    common(p)
    p.add_argument("--n-nodes", type=int, default=None, help="grid size (default grid.n_nodes)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", help="fit a log-exponent to a CSV column")
    p.add_argument("csv")
    p.add_argument("--t-col", default="t")
    p.add_argument("--v-col", default="theta")
    p.add_argument("--s-col", default=None, help="column holding |ln(T-t)| directly")
    p.add_argument("--T-est", type=float, default=None)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as err:  # noqa: BLE001 - reported as an execution error
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
