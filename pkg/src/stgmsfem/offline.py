"""Local spectral reduction, offline basis construction and the sequential coarse solve."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coefficient import CoefficientField, weighted_kappa_tilde
from .fem import SlabSystem, SolverError, SpaceOperators, SpaceTimeFunction, assemble_slab
from .grid import MeshIndex, Rect
from .pou import PartitionOfUnity


@dataclass
class SpectralPair:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, S-orthonormal


def _sym_gram(P: np.ndarray, B, Q: np.ndarray | None = None) -> np.ndarray:
    """P B Q^T for P, Q of shape (count, nodes); symmetrised when Q is None."""
    if Q is None:
        g = P @ (B @ P.T)
        return 0.5 * (g + g.T)
    return P @ (B @ Q.T)


def _time_p1_form(psi: np.ndarray, taus, weights) -> np.ndarray:
    """sum_k int_{t_k}^{t_k+1} (psi W_k psi) dt with P1-in-time interpolation, exact."""
    c = psi.shape[0]
    out = np.zeros((c, c))
    for k, (tau, W) in enumerate(zip(taus, weights)):
        a, b = psi[:, k], psi[:, k + 1]
        cross = _sym_gram(a, W, b)
        out += tau / 6.0 * (2 * _sym_gram(a, W) + 2 * _sym_gram(b, W) + cross + cross.T)
    return out


def assemble_spectral_forms(psi: np.ndarray, space: SpaceOperators, kappa_steps: np.ndarray,
                            kappa_tilde_steps: np.ndarray, taus) -> tuple[np.ndarray, np.ndarray]:
    """Dense (A, S) over snapshots ``psi[s, level, node]`` already restricted to the slab.

    A(u, v) = (u v at the last level + u v at the first level)/2 + int int kappa grad u . grad v
    S(u, v) = u v at the first level + int int kappa_tilde u v
    """
    taus = np.asarray(taus, dtype=float)
    if psi.shape[1] != len(taus) + 1:
        raise ValueError(f"{psi.shape[1]} levels but {len(taus)} steps")
    M = space.mass
    first = _sym_gram(psi[:, 0], M)
    last = _sym_gram(psi[:, -1], M)
    stiff = [space.stiffness(k) for k in kappa_steps]
    wmass = [space.weighted_mass(k) for k in kappa_tilde_steps]
    A = 0.5 * (first + last) + _time_p1_form(psi, taus, stiff)
    S = first + _time_p1_form(psi, taus, wmass)
    return 0.5 * (A + A.T), 0.5 * (S + S.T)


def solve_spectral(A: np.ndarray, S: np.ndarray, ridge: float = 1e-12,
                   label: str = "neighborhood") -> SpectralPair:
    """Ascending generalized eigenpairs of A v = lambda S v, S regularised by a scaled ridge."""
    n = A.shape[0]
    if n == 0:
        return SpectralPair(np.zeros(0), np.zeros((0, 0)))
    shift = ridge * np.trace(S) / n
    Sr = S + shift * np.eye(n)
    try:
        vals, vecs = sla.eigh(A, Sr)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(Sr)
        raise SolverError(f"{label}: snapshot mass matrix is numerically singular "
                          f"(condition ~{cond:.3e})") from exc
    return SpectralPair(vals, vecs)


def build_offline_basis(pair: SpectralPair, psi: np.ndarray, chi: np.ndarray, L: int) -> np.ndarray:
    """chi * (dominant combinations of restricted snapshots); shape (L, levels, nodes)."""
    if L > pair.eigenvectors.shape[1]:
        raise ValueError(f"L={L} exceeds the {pair.eigenvectors.shape[1]} available modes")
    coeff = pair.eigenvectors[:, :L]
    comb = np.tensordot(coeff.T, psi, axes=(1, 0))
    return comb * chi[None, None, :]


@dataclass
class LocalSpectralData:
    """Everything needed to form offline functions of one (node, slab) for any prefix count."""

    node: tuple[int, int]
    slab: int
    rect: Rect  # omega_i
    psi_omega: np.ndarray = field(repr=False)  # snapshots restricted to omega_i x slab
    A: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    chi: np.ndarray = field(repr=False)
    randomized: bool = True  # prefixes of a randomized set are valid smaller sets

    @property
    def count(self) -> int:
        return self.A.shape[0]

    def spectral(self, count: int | None = None) -> SpectralPair:
        c = self.count if count is None else count
        if c > self.count:
            raise ValueError(f"asked for {c} snapshots, only {self.count} generated")
        return solve_spectral(self.A[:c, :c], self.S[:c, :c],
                              label=f"node {self.node}, slab {self.slab}")


def local_spectral_data(mesh: MeshIndex, kappa: CoefficientField, chis: PartitionOfUnity,
                        snaps, system: SlabSystem) -> LocalSpectralData:
    """Spectral forms on omega_i^+ x (T_{n-1}, T_n) from a snapshot set and its region system."""
    region = snaps.region
    node, slab = region.base.center, region.slab
    off = region.slab_offset
    psi_plus = snaps.values[:, off:]
    steps = mesh.time.slab_steps(slab)
    kt = weighted_kappa_tilde(kappa, chis, steps).window(region.rect, steps)
    A, S = assemble_spectral_forms(psi_plus, system.space, system.kappa_steps[off:], kt,
                                   system.taus[off:])
    omega = region.base.rect
    return LocalSpectralData(node, slab, omega, snaps.restrict(omega), A, S, chis.chi[node],
                             randomized=snaps.seed is not None)


@dataclass
class LocalBasis:
    node: tuple[int, int]
    slab: int
    rect: Rect
    functions: np.ndarray = field(repr=False)  # (L, levels, nodes of omega_i)
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.functions.shape[0]


@dataclass
class OfflineBasis:
    entries: dict  # (node, slab) -> LocalBasis

    def slab_entries(self, slab: int) -> list[LocalBasis]:
        return [e for (node, n), e in sorted(self.entries.items(),
                                             key=lambda kv: (kv[0][1], kv[0][0][1], kv[0][0][0]))
                if n == slab]

    def dim(self, slab: int) -> int:
        return sum(e.size for e in self.slab_entries(slab))


def offline_entry(data: LocalSpectralData, L: int, p_bf: int) -> LocalBasis:
    c = L + p_bf if data.randomized else data.count
    pair = data.spectral(c)
    return LocalBasis(data.node, data.slab, data.rect,
                      build_offline_basis(pair, data.psi_omega[:c], data.chi, L), pair.eigenvalues)


def local_columns(mesh: MeshIndex, rect: Rect, functions: np.ndarray) -> sp.csc_matrix:
    """Slab-dof columns (time-major) for functions given on ``rect`` at every slab level."""
    k, n_lev, n_loc = functions.shape
    nodes = mesh.rect_nodes(rect)
    rows = (np.arange(n_lev)[:, None] * mesh.n_nodes + nodes[None, :]).ravel()
    order = np.argsort(rows, kind="stable")
    data = functions.reshape(k, -1)[:, order].T
    rows = rows[order]
    nz = np.any(data != 0, axis=1)
    rows, data = rows[nz], data[nz]
    indptr = np.arange(k + 1) * rows.size
    return sp.csc_matrix((data.T.ravel(), np.tile(rows, k), indptr),
                         shape=(n_lev * mesh.n_nodes, k))


class GalerkinSpace:
    """Span of sparse columns on one slab with the projected matrix kept current."""

    def __init__(self, system: SlabSystem, columns: sp.csc_matrix, labels: list):
        self.system = system
        self.A = system.matrix
        self._At = self.A.T.tocsr()
        self.phi = sp.csc_matrix(columns)
        self.labels = list(labels)
        self.G = np.asarray((self.phi.T @ (self.A @ self.phi)).todense())
        self.dropped: list = []

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    def extend(self, columns: sp.csc_matrix, labels) -> None:
        N = sp.csc_matrix(columns)
        if N.shape[1] == 0:
            return
        AN, AtN = self.A @ N, self._At @ N
        g12 = np.asarray((self.phi.T @ AN).todense())
        g21 = np.asarray((self.phi.T @ AtN).todense()).T
        g22 = np.asarray((N.T @ AN).todense())
        self.G = np.block([[self.G, g12], [g21, g22]])
        self.phi = sp.hstack([self.phi, N], format="csc")
        self.labels += list(labels)

    def solve(self, load: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Galerkin coefficients and the fine-dof reconstruction."""
        b = self.phi.T @ load
        self.dropped = []
        if self.dim == 0:
            return np.zeros(0), np.zeros(self.A.shape[0])
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                c = sla.solve(self.G, b)
            except (sla.LinAlgWarning, np.linalg.LinAlgError):
                c = self._rank_revealing_solve(b)
        return c, self.phi @ c

    def _rank_revealing_solve(self, b: np.ndarray) -> np.ndarray:
        # keep a well-conditioned subset of columns chosen by pivoted QR
        _, R, piv = sla.qr(self.G, pivoting=True, mode="economic")
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > d[0] * 1e3 * np.finfo(float).eps * self.dim))
        keep = np.sort(piv[:rank])
        self.dropped = sorted(set(range(self.dim)) - set(keep.tolist()))
        c = np.zeros(self.dim)
        c[keep] = sla.solve(self.G[np.ix_(keep, keep)], b[keep])
        return c


@dataclass
class CoarseSolution:
    spaces: list  # GalerkinSpace per slab
    coefficients: list
    solutions: list  # SpaceTimeFunction per slab on the whole mesh

    def dims(self) -> list[int]:
        return [s.dim for s in self.spaces]


def slab_space(mesh: MeshIndex, system: SlabSystem, basis: OfflineBasis, slab: int) -> GalerkinSpace:
    cols, labels = [], []
    for e in basis.slab_entries(slab):
        cols.append(local_columns(mesh, e.rect, e.functions))
        nid = mesh.coarse_node_id(e.node)
        labels += [(nid, j) for j in range(e.size)]
    n = system.n_levels * system.n_nodes
    phi = sp.hstack(cols, format="csc") if cols else sp.csc_matrix((n, 0))
    return GalerkinSpace(system, phi, labels)


def solve_coarse(mesh: MeshIndex, kappa: CoefficientField, f, beta, basis: OfflineBasis,
                 systems: list[SlabSystem] | None = None) -> CoarseSolution:
    """Sequential Galerkin slab solves on the offline spaces, handing u_H(T_n^-) forward."""
    if systems is None:
        systems = [assemble_slab(mesh, kappa, n)
                   for n in range(1, mesh.time.n_coarse_intervals + 1)]
    g = np.asarray(beta, dtype=float)
    spaces, coeffs, sols = [], [], []
    for system in systems:
        space = slab_space(mesh, system, basis, system.slab)
        c, u = space.solve(system.load(f, g))
        u = u.reshape(system.n_levels, system.n_nodes)
        spaces.append(space)
        coeffs.append(c)
        sols.append(SpaceTimeFunction(system.slab, u))
        g = u[-1]
    return CoarseSolution(spaces, coeffs, sols)


def write_coarse_csv(path, solution: CoarseSolution, header_lines=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slab", "coarse_node", "eig_index", "coefficient"])
        for space, c in zip(solution.spaces, solution.coefficients):
            for (nid, j), v in zip(space.labels, c):
                w.writerow([space.system.slab, nid, j, repr(float(v))])


def build_offline(mesh: MeshIndex, local: dict, L: int, p_bf: int) -> OfflineBasis:
    """Offline basis for every (node, slab) in ``local`` (a dict of LocalSpectralData)."""
    return OfflineBasis({key: offline_entry(d, L, p_bf) for key, d in local.items()})

