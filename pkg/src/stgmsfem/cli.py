"""Command-line entry point: ``stgmsfem <subcommand> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .coefficient import save_field
from .config import ConfigError, ExperimentConfig, load
from .diagnostics import REPORT_HEADER, write_report_csv
from .fem import SolverError, dump_nodal_csv
from .offline import write_coarse_csv
from .online import write_history_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.replace(**changes) if changes else cfg


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _local(problem, cfg: ExperimentConfig, count: int) -> dict:
    return next(iter(ex.build_local(problem, [cfg.seed], count).values()))


def cmd_solve_fine(cfg: ExperimentConfig, args) -> list[Path]:
    problem = ex.build_problem(cfg)
    out, paths = _out(cfg), []
    for u in problem.u_h:
        p = out / f"fine_slab{u.slab}.csv"
        dump_nodal_csv(p, problem.mesh, u, ex.header_lines(cfg))
        paths.append(p)
    return paths


def cmd_solve_offline(cfg: ExperimentConfig, args) -> list[Path]:
    problem = ex.build_problem(cfg)
    local = _local(problem, cfg, cfg.L + cfg.p_bf)
    run = ex.offline_run(problem, local, cfg.L, cfg.p_bf, cfg.seed)
    out, head = _out(cfg), ex.header_lines(cfg)
    report = out / "offline.csv"
    write_report_csv(report, [run.report], head)
    coeffs = out / "coarse_coefficients.csv"
    write_coarse_csv(coeffs, run.coarse, head)
    r = run.report
    print(f"L={r.L} p_bf={r.p_bf} dim_off={r.dim_off} e1={r.e1:.4%} e2={r.e2:.4%} "
          f"1/Lambda*={r.inv_lambda_star:.4g}")
    return [report, coeffs]


def cmd_solve_online(cfg: ExperimentConfig, args) -> list[Path]:
    problem = ex.build_problem(cfg)
    local = _local(problem, cfg, cfg.L + cfg.p_bf)
    tables = ex.run_online_table(problem, local, [cfg.L], cfg.theta)
    path = _out(cfg) / "online_history.csv"
    write_history_csv(path, tables[cfg.L], ex.header_lines(cfg))
    for h in tables[cfg.L]:
        if h["slab"] == 1:
            print(f"level {h['level']}: dof={h['dof']} e1={h['e1']:.4e} e2={h['e2']:.4e}")
    return [path]


def cmd_table_offline(cfg: ExperimentConfig, args) -> list[Path]:
    problem = ex.build_problem(cfg)
    local = _local(problem, cfg, ex.needed_snapshots(cfg, args.sweep))
    reports = ex.run_offline_table(problem, local, args.sweep, seed=cfg.seed)
    path = _out(cfg) / f"offline_table_{args.sweep}.csv"
    write_report_csv(path, reports, ex.header_lines(cfg))
    print(",".join(REPORT_HEADER))
    for r in reports:
        print(",".join(str(v) for v in r.row()))
    return [path]


def cmd_table_online(cfg: ExperimentConfig, args) -> list[Path]:
    problem = ex.build_problem(cfg)
    local = _local(problem, cfg, max(cfg.L_list) + cfg.p_bf)
    tables = ex.run_online_table(problem, local, cfg.L_list, cfg.theta)
    out, head = _out(cfg), ex.header_lines(cfg)
    paths = [ex.write_online_table(out / "online_table.csv", tables, head)]
    if cfg.theta is None:
        n = len(problem.mesh.interior_coarse_nodes)
        for key in ("e1", "e2"):
            paths.append(ex.write_online_wide(out / f"online_table_{key}.csv", tables, n, key,
                                              head))
    return paths


def cmd_corr_study(cfg: ExperimentConfig, args) -> list[Path]:
    Ls = [L for L in cfg.L_list if L >= cfg.corr_min_L]
    problem = ex.build_problem(cfg)
    local = _local(problem, cfg, max(Ls, default=cfg.L) + cfg.p_bf)
    reports = ex.run_offline_table(problem, local, "L", Ls, seed=cfg.seed)
    study = ex.run_correlation_study(reports)
    path = ex.write_correlation_csv(_out(cfg) / "corr_study.csv", study, ex.header_lines(cfg))
    print(f"corrcoef(1/Lambda*, e2^2) = {study.corr:.6f}")
    return [path]


def cmd_dump_field(cfg: ExperimentConfig, args) -> list[Path]:
    mesh = ex.make_mesh(cfg)
    kappa = ex.make_field(cfg, mesh)
    path = _out(cfg) / "field.csv"
    save_field(kappa, path, ex.header_lines(cfg))
    return [path]


COMMANDS = {
    "solve-fine": (cmd_solve_fine, "fine space-time reference solve"),
    "solve-offline": (cmd_solve_offline, "offline multiscale solve for one L, p_bf"),
    "solve-online": (cmd_solve_online, "offline solve followed by online enrichment sweeps"),
    "table-offline": (cmd_table_offline, "error table over L (p_bf fixed) or p_bf (L fixed)"),
    "table-online": (cmd_table_online, "online error histories for every L in L_list"),
    "corr-study": (cmd_corr_study, "correlation of 1/Lambda* with e2^2 over L_list"),
    "dump-field": (cmd_dump_field, "write the coefficient field as CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stgmsfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value file (defaults otherwise)")
        p.add_argument("--seed", type=int, help="snapshot seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads, 0 = one per CPU")
        if name == "table-offline":
            p.add_argument("--sweep", choices=("L", "p_bf"), default="L")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
