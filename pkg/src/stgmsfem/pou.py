"""Multiscale partition of unity: kappa(., T_{n-1})-harmonic extensions of hat data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .coefficient import CoefficientField
from .fem import SolverError, SpaceOperators
from .grid import MeshIndex, Rect, neighborhood


def _hat_data(f: int) -> np.ndarray:
    """Bilinear corner functions on an (f+1)^2 node block, shape (4, nodes).

    Corner order (0,0), (1,0), (0,1), (1,1) relative to the coarse cell.
    """
    s = np.linspace(0.0, 1.0, f + 1)
    yy, xx = np.meshgrid(s, s, indexing="ij")
    x, y = xx.ravel(), yy.ravel()
    return np.stack([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y])


def cell_harmonic_extensions(kappa_cells: np.ndarray, hx: float, hy: float,
                             refine: int = 2) -> np.ndarray:
    """Discrete kappa-harmonic extensions of the four hat traces on one coarse cell.

    ``kappa_cells`` has shape ``(f, f)``; returns ``(4, (f+1)^2)``.  A couple of
    iterative-refinement sweeps keep the result accurate at 1e6 contrast.
    """
    f = kappa_cells.shape[1]
    ops = SpaceOperators(kappa_cells.shape[1], kappa_cells.shape[0], hx, hy)
    K = ops.stiffness(kappa_cells).tocsr()
    bnd = ops.boundary_mask
    g = _hat_data(f) if kappa_cells.shape[0] == f else None
    if g is None:
        raise ValueError("coarse cells must be square in fine cells")
    out = g.copy()
    inner = np.flatnonzero(~bnd)
    if inner.size == 0:
        return out
    kii = K[inner][:, inner].tocsc()
    try:
        lu = spla.splu(kii)
    except RuntimeError as exc:
        raise SolverError(f"partition of unity: singular cell system ({exc})") from exc
    rhs = -(K[inner][:, np.flatnonzero(bnd)] @ g[:, bnd].T)
    x = lu.solve(rhs)
    for _ in range(refine):
        x += lu.solve(rhs - kii @ x)
    # the four extensions sum to the extension of 1, which is 1; spread the
    # round-off defect evenly so the local sum is exact to machine precision
    x -= (x.sum(axis=1, keepdims=True) - 1.0) / 4.0
    out[:, inner] = x.T
    return out


@dataclass
class PartitionOfUnity:
    """chi_i for every interior coarse node, frozen at kappa(., T_{n-1}) of one slab."""

    mesh: MeshIndex
    slab: int
    chi: dict = field(repr=False)  # node -> values on the (2f+1)^2 nodes of omega_i

    def rect(self, node) -> Rect:
        return neighborhood(self.mesh, node).rect

    def global_values(self, node) -> np.ndarray:
        out = np.zeros(self.mesh.n_nodes)
        out[self.mesh.rect_nodes(self.rect(node))] = self.chi[node]
        return out

    def on(self, node, rect: Rect) -> np.ndarray:
        """chi_i sampled on the nodes of ``rect``, zero outside omega_i."""
        own = self.rect(node)
        i0, i1 = max(own.i0, rect.i0), min(own.i1, rect.i1)
        j0, j1 = max(own.j0, rect.j0), min(own.j1, rect.j1)
        out = np.zeros(rect.n_nodes)
        if i0 > i1 or j0 > j1:
            return out
        overlap = Rect(i0, i1, j0, j1)
        out[rect.sub_index(overlap)] = self.chi[node][own.sub_index(overlap)]
        return out

    def sum(self) -> np.ndarray:
        total = np.zeros(self.mesh.n_nodes)
        for node, vals in self.chi.items():
            total[self.mesh.rect_nodes(self.rect(node))] += vals
        return total

    def grad_sq_sum(self) -> np.ndarray:
        """sum_i |grad chi_i|^2 at fine-cell midpoints, shape (nfy, nfx)."""
        m = self.mesh
        out = np.zeros((m.nfy, m.nfx))
        for node, vals in self.chi.items():
            r = self.rect(node)
            u = vals.reshape(r.ny + 1, r.nx + 1)
            gx = ((u[:-1, 1:] - u[:-1, :-1]) + (u[1:, 1:] - u[1:, :-1])) / (2 * m.hx)
            gy = ((u[1:, :-1] - u[:-1, :-1]) + (u[1:, 1:] - u[:-1, 1:])) / (2 * m.hy)
            out[r.j0:r.j1, r.i0:r.i1] += gx ** 2 + gy ** 2
        return out


def compute_partition(mesh: MeshIndex, kappa: CoefficientField, slab: int) -> PartitionOfUnity:
    """All chi_i of a slab; one harmonic solve (four right-hand sides) per coarse cell."""
    step = mesh.time.slab_steps(slab)[0]
    k0 = kappa.steps([step])[0]
    f = mesh.fpc
    corners = ((0, 0), (1, 0), (0, 1), (1, 1))
    chi = {node: np.zeros((2 * f + 1) ** 2) for node in mesh.interior_coarse_nodes}
    for cj in range(mesh.ncy):
        for ci in range(mesh.ncx):
            cell_rect = mesh.coarse_cell_rect((ci, cj))
            ext = cell_harmonic_extensions(
                k0[cell_rect.j0:cell_rect.j1, cell_rect.i0:cell_rect.i1], mesh.hx, mesh.hy)
            for c, (di, dj) in enumerate(corners):
                node = (ci + di, cj + dj)
                if node in chi:
                    own = Rect((node[0] - 1) * f, (node[0] + 1) * f,
                               (node[1] - 1) * f, (node[1] + 1) * f)
                    idx = own.sub_index(cell_rect)
                    # shared edges get identical values from both cells
                    chi[node][idx] = ext[c]
    return PartitionOfUnity(mesh, slab, chi)


def compute_chi(mesh: MeshIndex, kappa: CoefficientField, slab: int, coarse_node) -> np.ndarray:
    """chi_i on the nodes of omega_i for a single interior coarse node."""
    nb = neighborhood(mesh, coarse_node)
    step = mesh.time.slab_steps(slab)[0]
    k0 = kappa.steps([step])[0]
    I, J = coarse_node
    out = np.zeros(nb.rect.n_nodes)
    for ci, cj in nb.coarse_cells:
        cell_rect = mesh.coarse_cell_rect((ci, cj))
        ext = cell_harmonic_extensions(
            k0[cell_rect.j0:cell_rect.j1, cell_rect.i0:cell_rect.i1], mesh.hx, mesh.hy)
        corner = (I - ci) + 2 * (J - cj)
        out[nb.rect.sub_index(cell_rect)] = ext[corner]
    return out


def compute_chi_plus(chis: PartitionOfUnity) -> PartitionOfUnity:
    """chi_i^+ as the zero extension of chi_i to the oversampled neighborhood.

    The returned object samples any rectangle via :meth:`PartitionOfUnity.on`,
    which already extends by zero; gradients and sums are unchanged.
    """
    return PartitionOfUnity(chis.mesh, chis.slab, dict(chis.chi))
