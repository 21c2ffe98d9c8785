"""Experiment orchestration: problem setup, local snapshot data, offline/online/correlation tables."""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficient import (CoefficientField, constant_field, field_four_channels_rotated,
                          field_four_channels_translated, field_translated_inclusions)
from .config import ExperimentConfig
from .diagnostics import ErrorNorms, ErrorReport, compute_errors, corrcoef, lambda_star
from .fem import assemble_slab, solve_fine
from .grid import GridSpec, MeshIndex, TimePartition, build_mesh, neighborhood, oversample
from .offline import CoarseSolution, OfflineBasis, build_offline, local_spectral_data, solve_coarse
from .online import run_online
from .pou import compute_partition
from .snapshot import (full_snapshot_count, generate_full, generate_randomized, generator_id,
                       region_system, snapshot_ratio)


def make_mesh(cfg: ExperimentConfig) -> MeshIndex:
    return build_mesh(GridSpec(cfg.n_coarse, cfg.n_coarse, cfg.fine_per_coarse),
                      TimePartition(cfg.t_end, cfg.n_slabs, cfg.steps_per_slab))


def make_field(cfg: ExperimentConfig, mesh: MeshIndex) -> CoefficientField:
    if cfg.field == "translated":
        return field_translated_inclusions(mesh, cfg.contrast, (cfg.motion_x, cfg.motion_y),
                                           cfg.update_period, n_inclusions=cfg.n_inclusions,
                                           n_channels=cfg.n_channels,
                                           geometry_seed=cfg.geometry_seed)
    if cfg.field == "channels_translated":
        return field_four_channels_translated(mesh, cfg.contrast, (cfg.motion_x, cfg.motion_y),
                                              cfg.update_period)
    if cfg.field == "channels_rotated":
        return field_four_channels_rotated(mesh, cfg.contrast, cfg.degrees_per_step)
    return constant_field(mesh, 1.0)


@dataclass
class Problem:
    cfg: ExperimentConfig
    mesh: MeshIndex
    kappa: CoefficientField
    beta: np.ndarray = field(repr=False)
    systems: list = field(repr=False)
    u_h: list = field(repr=False)
    norms: ErrorNorms = field(repr=False)

    @property
    def f(self) -> float:
        return self.cfg.source


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Mesh, coefficient, fine reference solution and reusable slab systems."""
    mesh = make_mesh(cfg)
    kappa = make_field(cfg, mesh)
    xy = mesh.node_coords
    beta = cfg.initial_amplitude * np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])
    systems = [assemble_slab(mesh, kappa, n) for n in range(1, cfg.n_slabs + 1)]
    u_h = solve_fine(mesh, kappa, cfg.source, beta, systems)
    return Problem(cfg, mesh, kappa, beta, systems, u_h, ErrorNorms(mesh, kappa))


def _workers(threads: int) -> int:
    return (os.cpu_count() or 1) if threads == 0 else threads


def build_local(problem: Problem, seeds, count: int) -> dict:
    """Local spectral data per seed: ``{seed: {(node, slab): LocalSpectralData}}``.

    One factorization per (node, slab) region serves every seed.  With full
    snapshots the seed list collapses to ``[None]``.  Results are keyed, so the
    thread count never changes the numbers.
    """
    cfg, mesh, kappa = problem.cfg, problem.mesh, problem.kappa
    seeds = [None] if cfg.full_snapshots else list(seeds)
    const = cfg.lateral_data == "constant"
    out = {s: {} for s in seeds}
    for slab in range(1, cfg.n_slabs + 1):
        chis = compute_partition(mesh, kappa, slab)

        def work(node):
            nb = neighborhood(mesh, node)
            if cfg.full_snapshots:
                snaps = generate_full(mesh, kappa, nb, slab)
                system = region_system(mesh, kappa, snaps.region)
                res = [local_spectral_data(mesh, kappa, chis, snaps, system)]
            else:
                region = oversample(mesh, nb, cfg.layers, cfg.time_extension, slab)
                system = region_system(mesh, kappa, region)
                res = []
                for seed in seeds:
                    snaps = generate_randomized(mesh, kappa, region, count, seed, system=system,
                                                constant_in_time=const)
                    res.append(local_spectral_data(mesh, kappa, chis, snaps, system))
            system.release()
            return node, res

        nodes = mesh.interior_coarse_nodes
        n_workers = _workers(cfg.threads)
        if n_workers > 1:
            with ThreadPoolExecutor(n_workers) as pool:
                results = list(pool.map(work, nodes))
        else:
            results = [work(node) for node in nodes]
        for node, res in results:
            for seed, data in zip(seeds, res):
                out[seed][(node, slab)] = data
    return out


def interior_full_count(mesh: MeshIndex) -> int:
    """Full-snapshot count of an interior neighborhood of slab 1 (no oversampling)."""
    nodes = mesh.interior_coarse_nodes
    node = nodes[len(nodes) // 2]
    return full_snapshot_count(oversample(mesh, neighborhood(mesh, node), 0, 0, 1))


@dataclass
class OfflineRun:
    report: ErrorReport
    basis: OfflineBasis = field(repr=False)
    coarse: CoarseSolution = field(repr=False)


def offline_run(problem: Problem, local: dict, L: int, p_bf: int, seed=None) -> OfflineRun:
    mesh = problem.mesh
    basis = build_offline(mesh, local, L, p_bf)
    sol = solve_coarse(mesh, problem.kappa, problem.f, problem.beta, basis, problem.systems)
    e1, e2 = compute_errors(problem.u_h, sol.solutions, problem.norms)
    try:
        lam = lambda_star(basis.entries.values())
    except ValueError:
        lam = math.nan  # no discarded eigenvalue (p_bf = 0 or saturated local space)
    dims = sol.dims()
    report = ErrorReport(L, p_bf, dims[0], snapshot_ratio(L, p_bf, interior_full_count(mesh)),
                         e1, e2, lam, seed, problem.cfg.digest())
    return OfflineRun(report, basis, sol)


def run_offline_table(problem: Problem, local: dict, sweep: str = "L",
                      values=None, seed=None) -> list[ErrorReport]:
    """One report per value of ``L`` (p_bf fixed) or of ``p_bf`` (L fixed)."""
    cfg = problem.cfg
    if sweep not in ("L", "p_bf"):
        raise ValueError(f"sweep must be 'L' or 'p_bf', got {sweep!r}")
    if values is None:
        values = cfg.L_list if sweep == "L" else cfg.p_bf_list
    reports = []
    for v in values:
        L, p = (v, cfg.p_bf) if sweep == "L" else (cfg.L, v)
        reports.append(offline_run(problem, local, L, p, seed).report)
    return reports


def needed_snapshots(cfg: ExperimentConfig, sweep: str = "L", values=None) -> int:
    if values is None:
        values = cfg.L_list if sweep == "L" else cfg.p_bf_list
    values = list(values) or [cfg.L if sweep == "L" else cfg.p_bf]
    if sweep == "L":
        return max(values) + cfg.p_bf
    return cfg.L + max(values)


@dataclass
class CorrelationStudy:
    L: list
    inv_lambda_star: list
    e1_sq: list
    e2_sq: list
    corr: float


def run_correlation_study(reports: list[ErrorReport]) -> CorrelationStudy:
    """corrcoef(1/Lambda*, e2^2) over the given reports; NaN when undefined."""
    inv = [r.inv_lambda_star for r in reports]
    e2s = [r.e2 ** 2 for r in reports]
    if len(reports) < 2:
        warnings.warn("correlation needs at least two runs", RuntimeWarning, stacklevel=2)
        corr = math.nan
    elif not all(np.isfinite(inv)):
        warnings.warn("1/Lambda* is not finite for every run", RuntimeWarning, stacklevel=2)
        corr = math.nan
    else:
        corr = corrcoef(inv, e2s)
    return CorrelationStudy([r.L for r in reports], inv, [r.e1 ** 2 for r in reports], e2s,
                            corr)


def run_online_table(problem: Problem, local: dict, L_list, theta=None,
                     sweeps: int | None = None) -> dict:
    """``{L: history}`` of online enrichment started from each offline space."""
    cfg = problem.cfg
    sweeps = cfg.sweeps if sweeps is None else sweeps
    out = {}
    for L in L_list:
        basis = build_offline(problem.mesh, local, L, cfg.p_bf)
        history, _ = run_online(problem.mesh, problem.f, problem.beta, basis, problem.systems,
                                problem.u_h, problem.norms, sweeps, theta)
        out[L] = history
    return out


# ---- output -------------------------------------------------------------------------------

def header_lines(cfg: ExperimentConfig, seed=None) -> list[str]:
    """Provenance block written at the top of every CSV."""
    gen = "delta" if cfg.full_snapshots else generator_id(cfg.lateral_data == "constant")
    lines = [f"stgmsfem {__version__}", f"config_hash = {cfg.digest()}",
             f"seed = {cfg.seed if seed is None else seed}", f"generator_id = {gen}"]
    # out and threads never change a number, so they stay out of the echo
    return lines + [f"config: {ln}" for ln in cfg.echo()
                    if ln.split(" = ")[0] not in ("out", "threads")]


def _write(path, header, columns, rows, footer=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
        for line in footer:
            fh.write(f"# {line}\n")
    return path


def _r(x) -> str:
    return repr(float(x))


def write_correlation_csv(path, study: CorrelationStudy, header=()) -> Path:
    rows = [[L, _r(a), _r(b), _r(c)]
            for L, a, b, c in zip(study.L, study.inv_lambda_star, study.e1_sq, study.e2_sq)]
    return _write(path, header, ["L", "inv_lambda_star", "e1_sq", "e2_sq"], rows,
                  [f"corrcoef(inv_lambda_star, e2_sq) = {_r(study.corr)}"])


def write_online_table(path, tables: dict, header=()) -> Path:
    """Long-format history: one row per (L, level, slab)."""
    cols = ["L", "level", "slab", "dof", "e1", "e2", "max_r", "selected_count"]
    rows = [[L, h["level"], h["slab"], h["dof"], _r(h["e1"]), _r(h["e2"]), _r(h["max_r"]),
             h["selected_count"]] for L, hist in tables.items() for h in hist]
    return _write(path, header, cols, rows)


def online_wide(tables: dict, n_coarse_nodes: int, key: str = "e1") -> tuple[list, list]:
    """Table shaped by total basis count per neighborhood: rows k(n*k), one column per L.

    Only non-adaptive histories line up this way (every sweep adds one function
    per neighborhood).
    """
    per_k = {}
    for L, hist in tables.items():
        for h in hist:
            if h["slab"] != 1:
                continue
            per_k.setdefault(h["dof"], {})[L] = h[key]
    Ls = list(tables)
    cols = ["dof"] + [f"{key}_L{L}" for L in Ls]
    rows = []
    for dof in sorted(per_k):
        k = dof // n_coarse_nodes
        label = f"{k}({dof})" if dof % n_coarse_nodes == 0 else str(dof)
        rows.append([label] + [_r(per_k[dof][L]) if L in per_k[dof] else "" for L in Ls])
    return cols, rows


def write_online_wide(path, tables: dict, n_coarse_nodes: int, key="e1", header=()) -> Path:
    cols, rows = online_wide(tables, n_coarse_nodes, key)
    return _write(path, header, cols, rows)

