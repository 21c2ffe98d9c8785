"""Q1-in-space, continuous P1-in-time Galerkin discretisation on one time slab.

Slab unknowns are nodal values ``u[l, node]`` at the fine levels
``l = 0..p`` of the slab (level 0 is ``T_{n-1}^+``) and are flattened
time-major, ``dof = l * n_nodes + node``.  The slab form is

    a(u, v) = int int u_t v + int int kappa grad u . grad v + int u(T+) v(T+)

and the load is ``F(v) = int int f v + int g v(T+)``.  With P1 hats in time
and kappa constant per fine step every time integral is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficient import CoefficientField
from .grid import MeshIndex, Rect, cell_connectivity


class SolverError(RuntimeError):
    """A linear solve failed; the message names the slab/region involved."""


def q1_element(hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear mass and unit-coefficient stiffness on an ``hx x hy`` cell."""
    mx = hx / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    my = hy / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    kx = 1.0 / hx * np.array([[1.0, -1.0], [-1.0, 1.0]])
    ky = 1.0 / hy * np.array([[1.0, -1.0], [-1.0, 1.0]])
    # local order (0,0), (1,0), (0,1), (1,1): index = 2 * jy + ix
    return np.kron(my, mx), np.kron(my, kx) + np.kron(ky, mx)


def nested_dissection(nx: int, ny: int, leaf: int = 16) -> np.ndarray:
    """Nested-dissection ordering of an ``nx x ny`` lexicographic node grid."""
    out: list[np.ndarray] = []
    stack = [(0, nx, 0, ny, False)]
    # explicit stack; separators are emitted after both halves
    while stack:
        x0, x1, y0, y1, emit = stack.pop()
        w, h = x1 - x0, y1 - y0
        if w <= 0 or h <= 0:
            continue
        if emit or w * h <= leaf:
            jj, ii = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")
            out.append((jj * nx + ii).ravel())
            continue
        if w >= h:
            m = (x0 + x1) // 2
            stack.append((m, m + 1, y0, y1, True))
            stack.append((m + 1, x1, y0, y1, False))
            stack.append((x0, m, y0, y1, False))
        else:
            m = (y0 + y1) // 2
            stack.append((x0, x1, m, m + 1, True))
            stack.append((x0, x1, m + 1, y1, False))
            stack.append((x0, x1, y0, m, False))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


class SpaceOperators:
    """Q1 mass/stiffness assembly on a rectangle of ``nx x ny`` fine cells."""

    def __init__(self, nx: int, ny: int, hx: float, hy: float):
        self.nx, self.ny, self.hx, self.hy = nx, ny, hx, hy
        self.n_nodes = (nx + 1) * (ny + 1)
        self.conn = cell_connectivity(nx, ny)
        self.m_loc, self.k_loc = q1_element(hx, hy)
        self._rows = np.repeat(self.conn, 4, axis=1).ravel()
        self._cols = np.tile(self.conn, (1, 4)).ravel()

    def _assemble(self, cell_weights: np.ndarray, loc: np.ndarray) -> sp.csr_matrix:
        w = np.asarray(cell_weights, dtype=float).ravel()
        data = (w[:, None] * loc.ravel()[None, :]).ravel()
        return sp.csr_matrix((data, (self._rows, self._cols)),
                             shape=(self.n_nodes, self.n_nodes))

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble(np.ones(self.nx * self.ny), self.m_loc)

    def stiffness(self, kappa_cells: np.ndarray) -> sp.csr_matrix:
        return self._assemble(kappa_cells, self.k_loc)

    def weighted_mass(self, w_cells: np.ndarray) -> sp.csr_matrix:
        return self._assemble(w_cells, self.m_loc)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return Rect(0, self.nx, 0, self.ny).local_boundary_mask()

    @cached_property
    def interior_nd_order(self) -> np.ndarray:
        """Interior node ids in nested-dissection order."""
        nix, niy = self.nx - 1, self.ny - 1
        order = nested_dissection(nix, niy)
        jj, ii = np.divmod(order, max(nix, 1))
        return (jj + 1) * (self.nx + 1) + (ii + 1)


def time_step_blocks(n_levels: int, k: int, tau: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(derivative, mass) time matrices of fine step k; rows = test level."""
    r = np.array([k, k, k + 1, k + 1])
    c = np.array([k, k + 1, k, k + 1])
    d = 0.5 * np.array([-1.0, 1.0, -1.0, 1.0])
    m = tau / 6.0 * np.array([2.0, 1.0, 1.0, 2.0])
    shape = (n_levels, n_levels)
    return sp.csr_matrix((d, (r, c)), shape=shape), sp.csr_matrix((m, (r, c)), shape=shape)


@dataclass
class SpaceTimeFunction:
    """Nodal values ``values[level, node]`` of a slab function."""

    slab: int
    values: np.ndarray

    @property
    def n_levels(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def initial(self) -> np.ndarray:
        return self.values[0]

    def final(self) -> np.ndarray:
        return self.values[-1]


class _Factorization:
    def __init__(self, matrix: sp.csr_matrix, perm: np.ndarray, label: str):
        self.perm = perm
        try:
            self.lu = spla.splu(matrix[perm][:, perm].tocsc(), permc_spec="NATURAL")
        except RuntimeError as exc:
            raise SolverError(f"{label}: factorization failed ({exc})") from exc
        self.label = label

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.empty_like(b)
        y = self.lu.solve(np.ascontiguousarray(b[self.perm]))
        if not np.all(np.isfinite(y)):
            raise SolverError(f"{self.label}: singular system")
        x[self.perm] = y
        return x


class SlabSystem:
    """Slab bilinear form on a rectangle, with Dirichlet nodes on its boundary.

    ``kappa_steps`` has shape ``(p, ny, nx)``; ``times`` are the ``p + 1``
    absolute level times; ``origin`` is the physical position of the
    rectangle's lower-left node.
    """

    def __init__(self, space: SpaceOperators, kappa_steps: np.ndarray, times: np.ndarray,
                 slab: int = 1, origin=(0.0, 0.0), label: str = "slab"):
        kappa_steps = np.asarray(kappa_steps, dtype=float)
        times = np.asarray(times, dtype=float)
        if kappa_steps.shape != (len(times) - 1, space.ny, space.nx):
            raise ValueError(f"kappa shape {kappa_steps.shape} does not match "
                             f"({len(times) - 1}, {space.ny}, {space.nx})")
        self.space = space
        self.kappa_steps = kappa_steps
        self.times = times
        self.taus = np.diff(times)
        self.slab = slab
        self.origin = origin
        self.label = label
        self.n_levels = len(times)
        self.n_nodes = space.n_nodes
        self.stiffness = [space.stiffness(kappa_steps[k]) for k in range(len(self.taus))]
        self._factor: _Factorization | None = None

    @cached_property
    def time_derivative(self) -> sp.csr_matrix:
        L = self.n_levels
        c = sp.csr_matrix((L, L))
        for k, tau in enumerate(self.taus):
            c = c + time_step_blocks(L, k, tau)[0]
        return c

    @cached_property
    def time_mass(self) -> sp.csr_matrix:
        L = self.n_levels
        m = sp.csr_matrix((L, L))
        for k, tau in enumerate(self.taus):
            m = m + time_step_blocks(L, k, tau)[1]
        return m

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Full slab operator over every (level, node) pair, boundary included."""
        L = self.n_levels
        M = self.space.mass
        e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(L, L))
        a = sp.kron(self.time_derivative + e0, M, format="csr")
        for k, tau in enumerate(self.taus):
            a = a + sp.kron(time_step_blocks(L, k, tau)[1], self.stiffness[k], format="csr")
        return a.tocsr()

    @cached_property
    def fixed_mask(self) -> np.ndarray:
        return np.tile(self.space.boundary_mask, self.n_levels)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_mask)

    @cached_property
    def fixed_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.fixed_mask)

    @cached_property
    def node_coords(self) -> np.ndarray:
        s = self.space
        x = self.origin[0] + np.arange(s.nx + 1) * s.hx
        y = self.origin[1] + np.arange(s.ny + 1) * s.hy
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def factorize(self) -> _Factorization:
        if self._factor is None:
            # free dofs are interior nodes at every level; order node-major along ND
            n_int = self.space.n_nodes - int(self.space.boundary_mask.sum())
            pos = np.full(self.n_nodes, -1)
            pos[~self.space.boundary_mask] = np.arange(n_int)
            nd = pos[self.space.interior_nd_order]
            perm = (np.arange(self.n_levels)[None, :] * n_int + nd[:, None]).ravel()
            a = self.matrix[self.free_dofs][:, self.free_dofs]
            self._factor = _Factorization(a, perm, self.label)
        return self._factor

    def release(self) -> None:
        self._factor = None

    def nodal(self, f) -> np.ndarray:
        """Nodal values (levels, nodes) of a source given as scalar, callable or array."""
        shape = (self.n_levels, self.n_nodes)
        if f is None:
            return np.zeros(shape)
        if callable(f):
            xy = self.node_coords
            return np.stack([np.broadcast_to(f(xy[:, 0], xy[:, 1], t), (self.n_nodes,))
                             for t in self.times]).astype(float)
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return np.full(shape, float(arr))
        if arr.shape != shape:
            raise ValueError(f"source shape {arr.shape} does not match {shape}")
        return arr

    def load(self, f=None, g=None) -> np.ndarray:
        """Full load vector of F(v) = int int f v + int g v(T+)."""
        b = np.zeros((self.n_levels, self.n_nodes))
        if f is not None:
            F = self.nodal(f)
            b += self.time_mass @ (self.space.mass @ F.T).T
        if g is not None:
            g = np.asarray(g, dtype=float)
            if g.shape != (self.n_nodes,):
                raise ValueError(f"incoming state has shape {g.shape}, expected ({self.n_nodes},)")
            b[0] += self.space.mass @ g
        return b.ravel()

    def solve(self, load: np.ndarray, dirichlet: np.ndarray | None = None) -> np.ndarray:
        """Solve with prescribed boundary values; accepts one or several loads (columns).

        ``dirichlet`` holds values at the fixed dofs (boundary nodes, every level)
        in dof order, with the same trailing shape as ``load``.
        """
        load = np.asarray(load, dtype=float)
        x = np.zeros_like(load)
        rhs = load[self.free_dofs]
        if dirichlet is not None:
            d = np.asarray(dirichlet, dtype=float)
            x[self.fixed_dofs] = d
            rhs = rhs - self.matrix[self.free_dofs][:, self.fixed_dofs] @ d
        x[self.free_dofs] = self.factorize().solve(rhs)
        return x

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(u).ravel()


def slab_system(mesh: MeshIndex, kappa: CoefficientField, rect: Rect, first_level: int,
                last_level: int, slab: int = 1, label: str | None = None) -> SlabSystem:
    """Slab operator on ``rect`` over absolute fine levels ``first_level..last_level``."""
    steps = range(first_level, last_level)
    times = mesh.time.times[first_level:last_level + 1]
    space = SpaceOperators(rect.nx, rect.ny, mesh.hx, mesh.hy)
    return SlabSystem(space, kappa.window(rect, steps), times, slab,
                      origin=(rect.i0 * mesh.hx, rect.j0 * mesh.hy),
                      label=label or f"slab {slab} on {rect}")


def assemble_slab(mesh: MeshIndex, kappa: CoefficientField, slab: int) -> SlabSystem:
    kappa.check_mesh(mesh)
    levels = mesh.time.slab_levels(slab)
    return slab_system(mesh, kappa, mesh.rect, levels[0], levels[-1], slab,
                       label=f"fine slab {slab}")


def solve_fine(mesh: MeshIndex, kappa: CoefficientField, f, beta,
               systems: list[SlabSystem] | None = None,
               keep_factorization: bool = False) -> list[SpaceTimeFunction]:
    """Sequential slab solves with jump coupling; u = 0 on the domain boundary."""
    if systems is None:
        systems = [assemble_slab(mesh, kappa, n)
                   for n in range(1, mesh.time.n_coarse_intervals + 1)]
    g = np.asarray(beta, dtype=float)
    if g.shape != (mesh.n_nodes,):
        raise ValueError(f"initial data has shape {g.shape}, expected ({mesh.n_nodes},)")
    out = []
    for system in systems:
        u = system.solve(system.load(f, g)).reshape(system.n_levels, system.n_nodes)
        if not keep_factorization:
            system.release()
        out.append(SpaceTimeFunction(system.slab, u))
        g = u[-1]
    return out


def solve_local(system: SlabSystem, dirichlet: np.ndarray, initial: np.ndarray,
                f=None) -> SpaceTimeFunction:
    """Local slab solve with boundary data ``dirichlet[level, boundary_node]``.

    The initial state enters weakly through the jump term; boundary nodes at
    level 0 take their value from ``dirichlet[0]``.
    """
    n_b = int(system.space.boundary_mask.sum())
    d = np.asarray(dirichlet, dtype=float)
    if d.shape != (system.n_levels, n_b):
        raise ValueError(f"incomplete boundary data: shape {d.shape}, expected "
                         f"({system.n_levels}, {n_b})")
    u = system.solve(system.load(f, initial), d.ravel())
    return SpaceTimeFunction(system.slab, u.reshape(system.n_levels, system.n_nodes))


def _flat(u) -> np.ndarray:
    return (u.values if isinstance(u, SpaceTimeFunction) else np.asarray(u)).ravel()


def apply_form(system: SlabSystem, u, v) -> float:
    """a_n(u, v)."""
    uu, vv = _flat(u), _flat(v)
    n = system.n_levels * system.n_nodes
    if uu.shape != (n,) or vv.shape != (n,):
        raise ValueError(f"shape mismatch: expected {n} slab values")
    return float(vv @ (system.matrix @ uu))


def residual_functional(system: SlabSystem, u, f=None, g=None) -> np.ndarray:
    """Load-vector representation of R(v) = F(v) - a(u, v) over test functions in V_h.

    Entries at boundary dofs are zero (test functions vanish there).
    """
    uu = _flat(u)
    if uu.shape != (system.n_levels * system.n_nodes,):
        raise ValueError("shape mismatch between u and the slab system")
    r = system.load(f, g) - system.matrix @ uu
    r[system.fixed_dofs] = 0.0
    return r.reshape(system.n_levels, system.n_nodes)


def dump_nodal_csv(path, mesh: MeshIndex, u: SpaceTimeFunction, header_lines=()) -> None:
    """CSV ``time_level,node_i,node_j,value`` for one slab (levels are absolute)."""
    levels = mesh.time.slab_levels(u.slab)
    nx1 = mesh.nfx + 1
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_level", "node_i", "node_j", "value"])
        for l, lev in enumerate(levels):
            for node, val in enumerate(u.values[l]):
                j, i = divmod(node, nx1)
                w.writerow([lev, i, j, repr(float(val))])
