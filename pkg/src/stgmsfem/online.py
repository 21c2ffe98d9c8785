"""Residual-driven online enrichment of the coarse slab spaces, optionally theta-adaptive."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import ErrorNorms, compute_errors
from .fem import SlabSystem, SolverError, SpaceTimeFunction
from .grid import MeshIndex, neighborhood, nonoverlapping_groups
from .offline import GalerkinSpace, OfflineBasis, local_columns, slab_space

HISTORY_HEADER = ["level", "slab", "dof", "e1", "e2", "max_r", "selected_count"]


class LocalResidualSolver:
    """Slab form on the interior nodes of omega_i at every level, factorized once."""

    def __init__(self, mesh: MeshIndex, system: SlabSystem, node):
        nb = neighborhood(mesh, node)
        self.node = node
        self.rect = nb.rect
        inner = nb.fine_nodes[~nb.rect.local_boundary_mask()]
        inner = inner[~mesh.boundary_mask[inner]]
        self.dofs = (np.arange(system.n_levels)[:, None] * system.n_nodes + inner[None, :]).ravel()
        self.local_pos = np.searchsorted(nb.fine_nodes, inner)
        self.n_levels = system.n_levels
        a = system.matrix[self.dofs][:, self.dofs].tocsc()
        try:
            self.lu = spla.splu(a)
        except RuntimeError as exc:
            raise SolverError(f"online solve at node {node}, slab {system.slab}: {exc}") from exc

    def solve(self, residual: np.ndarray) -> tuple[np.ndarray, float]:
        """(phi on omega_i nodes per level, energy norm of phi)."""
        rhs = residual.ravel()[self.dofs]
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"online solve at node {self.node}: non-finite result")
        r = float(np.sqrt(max(x @ rhs, 0.0)))
        phi = np.zeros((self.n_levels, self.rect.n_nodes))
        phi[:, self.local_pos] = x.reshape(self.n_levels, -1)
        return phi, r


def online_basis(solver: LocalResidualSolver, residual: np.ndarray) -> tuple[np.ndarray, float]:
    """Local Riesz representative of the residual functional and its energy norm.

    ``residual[level, node]`` is the load-vector form of F(v) - a(u_ms, v).
    """
    return solver.solve(residual)


def select_adaptive(residuals: dict, theta: float | None) -> list:
    """Nodes to enrich: all with r > 0, or the smallest leading set holding theta of sum r^2."""
    live = [(n, r) for n, r in residuals.items() if r > 0]
    if theta is None or not live:
        return [n for n, _ in live]
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    live.sort(key=lambda nr: -nr[1])  # stable: ties keep group order
    r2 = np.cumsum([r * r for _, r in live])
    k = int(np.searchsorted(r2, theta * r2[-1], side="left")) + 1
    k = min(k, len(live))
    while k < len(live) and live[k][1] == live[k - 1][1]:
        k += 1
    return [n for n, _ in live[:k]]


@dataclass
class SlabOnline:
    system: SlabSystem
    space: GalerkinSpace
    load: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False, default=None)
    u: np.ndarray = field(repr=False, default=None)
    n_added: dict = field(default_factory=dict)
    solvers: dict = field(default_factory=dict, repr=False)

    def resolve(self) -> None:
        self.coefficients, self.u = self.space.solve(self.load)

    def residual(self) -> np.ndarray:
        r = self.load - self.system.matrix @ self.u
        r[self.system.fixed_dofs] = 0.0
        return r.reshape(self.system.n_levels, self.system.n_nodes)

    def solution(self) -> SpaceTimeFunction:
        return SpaceTimeFunction(self.system.slab,
                                 self.u.reshape(self.system.n_levels, self.system.n_nodes))


@dataclass
class OnlineState:
    level: int
    slabs: list
    residual_log: list = field(default_factory=list)  # (level, slab, node, r)

    def solutions(self) -> list[SpaceTimeFunction]:
        return [s.solution() for s in self.slabs]


def _solver(mesh: MeshIndex, st: SlabOnline, node) -> LocalResidualSolver:
    if node not in st.solvers:
        st.solvers[node] = LocalResidualSolver(mesh, st.system, node)
    return st.solvers[node]


def enrich_sweep(mesh: MeshIndex, st: SlabOnline, groups, theta: float | None = None,
                 base_sizes: dict | None = None, log=None, level: int = 0) -> tuple[float, int]:
    """One pass over the groups of one slab; returns (max r_i seen, functions added)."""
    max_r, added = 0.0, 0
    base_sizes = base_sizes or {}
    for group in groups:
        res = st.residual()
        found = {}
        for node in group:
            phi, r = online_basis(_solver(mesh, st, node), res)
            found[node] = (phi, r)
            if log is not None:
                log.append((level, st.system.slab, node, r))
        r_of = {n: r for n, (_, r) in found.items()}
        if r_of:
            max_r = max(max_r, max(r_of.values()))
        chosen = select_adaptive(r_of, theta)
        if not chosen:
            continue
        cols, labels = [], []
        for node in chosen:
            k = st.n_added.get(node, 0)
            cols.append(local_columns(mesh, neighborhood(mesh, node).rect,
                                      found[node][0][None]))
            labels.append((mesh.coarse_node_id(node), base_sizes.get(node, 0) + k))
            st.n_added[node] = k + 1
        st.space.extend(sp.hstack(cols, format="csc"), labels)
        st.resolve()
        added += len(chosen)
    return max_r, added


def run_online(mesh: MeshIndex, f, beta, basis: OfflineBasis, systems: list[SlabSystem],
               u_h: list[SpaceTimeFunction], norms: ErrorNorms, sweeps: int,
               theta: float | None = None, groups=None):
    """Offline solve, then ``sweeps`` level-synchronous enrichment passes over all slabs.

    Returns (history rows, final state).  Each level re-solves the slabs in time
    order with the incoming state taken from the previous slab at that level.
    """
    groups = nonoverlapping_groups(mesh) if groups is None else groups
    history = []
    g = np.asarray(beta, dtype=float)
    slabs = []
    for system in systems:
        st = SlabOnline(system, slab_space(mesh, system, basis, system.slab),
                        system.load(f, g))
        st.resolve()
        slabs.append(st)
        g = st.u.reshape(system.n_levels, system.n_nodes)[-1]
    state = OnlineState(0, slabs)
    _record(history, state, u_h, norms, [(float("nan"), 0)] * len(slabs))

    for m in range(1, sweeps + 1):
        g = np.asarray(beta, dtype=float)
        stats = []
        for st in state.slabs:
            sizes = {e.node: e.size for e in basis.slab_entries(st.system.slab)}
            st.load = st.system.load(f, g)
            st.resolve()
            stats.append(enrich_sweep(mesh, st, groups, theta, sizes, state.residual_log, m))
            g = st.u.reshape(st.system.n_levels, st.system.n_nodes)[-1]
        state.level = m
        _record(history, state, u_h, norms, stats)
    return history, state


def _record(history, state: OnlineState, u_h, norms, stats) -> None:
    e1, e2 = compute_errors(u_h, state.solutions(), norms)
    for st, (max_r, added) in zip(state.slabs, stats):
        history.append({"level": state.level, "slab": st.system.slab, "dof": st.space.dim,
                        "e1": e1, "e2": e2, "max_r": max_r, "selected_count": added})


def write_history_csv(path, history: list[dict], header_lines=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for h in history:
            w.writerow([h["level"], h["slab"], h["dof"], repr(float(h["e1"])),
                        repr(float(h["e2"])), repr(float(h["max_r"])), h["selected_count"]])
