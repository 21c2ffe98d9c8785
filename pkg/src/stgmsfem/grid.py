"""Structured fine/coarse meshes, time partitions and coarse neighborhoods.

Fine nodes are numbered lexicographically, ``node = j * (nfx + 1) + i`` with
``i`` along x.  Fine cells use ``cell = j * nfx + i``.  Coarse nodes are
addressed by their integer position ``(I, J)``; the fine node under a coarse
node is ``(I * fine_per_coarse, J * fine_per_coarse)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    n_coarse_x: int = 10
    n_coarse_y: int = 10
    fine_per_coarse: int = 10
    domain_x: float = 1.0
    domain_y: float = 1.0

    def __post_init__(self):
        for name in ("n_coarse_x", "n_coarse_y", "fine_per_coarse"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.domain_x <= 0 or self.domain_y <= 0:
            raise ValueError("domain extents must be positive")


@dataclass(frozen=True)
class TimePartition:
    t_end: float = 1.6
    n_coarse_intervals: int = 2
    fine_per_coarse_t: int = 8

    def __post_init__(self):
        if self.n_coarse_intervals < 1 or self.fine_per_coarse_t < 1:
            raise ValueError("time partition counts must be >= 1")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")

    @property
    def n_steps(self) -> int:
        return self.n_coarse_intervals * self.fine_per_coarse_t

    @property
    def tau(self) -> float:
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        """Fine time levels t_0 = 0 < ... < t_K = t_end."""
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    @property
    def coarse_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_coarse_intervals + 1)

    def check_slab(self, slab: int) -> None:
        if not 1 <= slab <= self.n_coarse_intervals:
            raise ValueError(f"slab must be in 1..{self.n_coarse_intervals}, got {slab}")

    def slab_steps(self, slab: int) -> range:
        """Absolute fine step indices k (interval (t_k, t_{k+1})) inside slab n."""
        self.check_slab(slab)
        p = self.fine_per_coarse_t
        return range((slab - 1) * p, slab * p)

    def slab_levels(self, slab: int) -> range:
        """Absolute fine level indices T_{n-1} .. T_n of slab n (inclusive)."""
        self.check_slab(slab)
        p = self.fine_per_coarse_t
        return range((slab - 1) * p, slab * p + 1)


@dataclass(frozen=True)
class Rect:
    """Inclusive fine-node index box ``[i0, i1] x [j0, j1]``."""

    i0: int
    i1: int
    j0: int
    j1: int

    @property
    def nx(self) -> int:
        """Number of fine cells along x."""
        return self.i1 - self.i0

    @property
    def ny(self) -> int:
        return self.j1 - self.j0

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def contains(self, other: "Rect") -> bool:
        return (self.i0 <= other.i0 and other.i1 <= self.i1
                and self.j0 <= other.j0 and other.j1 <= self.j1)

    def local_boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.ny + 1, self.nx + 1), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    def sub_index(self, inner: "Rect") -> np.ndarray:
        """Positions of ``inner``'s nodes inside this rect's local numbering."""
        if not self.contains(inner):
            raise ValueError(f"{inner} is not contained in {self}")
        jj, ii = np.meshgrid(np.arange(inner.j0, inner.j1 + 1),
                             np.arange(inner.i0, inner.i1 + 1), indexing="ij")
        return ((jj - self.j0) * (self.nx + 1) + (ii - self.i0)).ravel()


@dataclass(frozen=True)
class Neighborhood:
    center: tuple[int, int]
    coarse_cells: tuple[tuple[int, int], ...]
    rect: Rect
    fine_nodes: np.ndarray = field(repr=False, compare=False)
    boundary_fine_nodes: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class OversampledRegion:
    base: Neighborhood
    slab: int
    space_layers: int
    time_extension: int  # effective, after clipping at t = 0
    rect: Rect
    initial_level: int  # absolute fine level of T*_{n-1}
    final_level: int  # absolute fine level of T_n
    fine_nodes: np.ndarray = field(repr=False, compare=False)
    boundary_fine_nodes: np.ndarray = field(repr=False, compare=False)
    clipped_space: bool = False
    clipped_time: bool = False

    @property
    def n_levels(self) -> int:
        return self.final_level - self.initial_level + 1

    @property
    def slab_offset(self) -> int:
        """Local level index of T_{n-1} inside the oversampled time range."""
        return self.time_extension


class MeshIndex:
    """Node/cell/DOF bookkeeping for a :class:`GridSpec` and :class:`TimePartition`."""

    def __init__(self, spec: GridSpec, time: TimePartition):
        self.spec = spec
        self.time = time
        self.fpc = spec.fine_per_coarse
        self.ncx, self.ncy = spec.n_coarse_x, spec.n_coarse_y
        self.nfx = self.ncx * self.fpc
        self.nfy = self.ncy * self.fpc
        self.hx = spec.domain_x / self.nfx
        self.hy = spec.domain_y / self.nfy
        self.Hx = spec.domain_x / self.ncx
        self.Hy = spec.domain_y / self.ncy
        self.rect = Rect(0, self.nfx, 0, self.nfy)

    @property
    def n_nodes(self) -> int:
        return (self.nfx + 1) * (self.nfy + 1)

    @property
    def n_cells(self) -> int:
        return self.nfx * self.nfy

    @cached_property
    def node_coords(self) -> np.ndarray:
        x = np.arange(self.nfx + 1) * self.hx
        y = np.arange(self.nfy + 1) * self.hy
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def cell_centers(self) -> np.ndarray:
        x = (np.arange(self.nfx) + 0.5) * self.hx
        y = (np.arange(self.nfy) + 0.5) * self.hy
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) node ids ordered (0,0), (1,0), (0,1), (1,1)."""
        return cell_connectivity(self.nfx, self.nfy)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.rect.local_boundary_mask()

    def node(self, i: int, j: int) -> int:
        return j * (self.nfx + 1) + i

    def rect_nodes(self, rect: Rect) -> np.ndarray:
        return self.rect.sub_index(rect)

    def rect_cells(self, rect: Rect) -> np.ndarray:
        jj, ii = np.meshgrid(np.arange(rect.j0, rect.j1), np.arange(rect.i0, rect.i1),
                             indexing="ij")
        return (jj * self.nfx + ii).ravel()

    @cached_property
    def coarse_nodes(self) -> list[tuple[int, int]]:
        return [(I, J) for J in range(self.ncy + 1) for I in range(self.ncx + 1)]

    @cached_property
    def interior_coarse_nodes(self) -> list[tuple[int, int]]:
        return [(I, J) for J in range(1, self.ncy) for I in range(1, self.ncx)]

    def coarse_node_id(self, node: tuple[int, int]) -> int:
        I, J = node
        return J * (self.ncx + 1) + I

    def is_interior_coarse(self, node: tuple[int, int]) -> bool:
        I, J = node
        return 0 < I < self.ncx and 0 < J < self.ncy

    def coarse_cell_rect(self, cell: tuple[int, int]) -> Rect:
        ci, cj = cell
        f = self.fpc
        return Rect(ci * f, (ci + 1) * f, cj * f, (cj + 1) * f)

    def coarse_cell_fine_cells(self, cell: tuple[int, int]) -> np.ndarray:
        """Coarse-to-fine embedding: fine cell ids tiling coarse cell ``cell``."""
        return self.rect_cells(self.coarse_cell_rect(cell))


def cell_connectivity(nx: int, ny: int) -> np.ndarray:
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n00 = (jj * (nx + 1) + ii).ravel()
    return np.column_stack([n00, n00 + 1, n00 + nx + 1, n00 + nx + 2])


def build_mesh(spec: GridSpec, time: TimePartition) -> MeshIndex:
    return MeshIndex(spec, time)


def neighborhood(mesh: MeshIndex, coarse_node: tuple[int, int]) -> Neighborhood:
    """Union of the coarse cells sharing an interior coarse node."""
    I, J = coarse_node
    if not mesh.is_interior_coarse(coarse_node):
        raise ValueError(f"coarse node {coarse_node} lies on the domain boundary")
    cells = tuple((ci, cj) for cj in (J - 1, J) for ci in (I - 1, I))
    f = mesh.fpc
    rect = Rect((I - 1) * f, (I + 1) * f, (J - 1) * f, (J + 1) * f)
    nodes = mesh.rect_nodes(rect)
    return Neighborhood(coarse_node, cells, rect, nodes,
                        nodes[rect.local_boundary_mask()])


def oversample(mesh: MeshIndex, nbhd: Neighborhood, space_layers: int,
               time_extension: int, slab: int) -> OversampledRegion:
    """Enlarge ``nbhd`` by fine-cell layers and extend the slab leftward in time.

    Both extensions are clipped silently at the domain boundary and at t = 0;
    the clipping is recorded on the returned region.
    """
    mesh.time.check_slab(slab)
    if space_layers < 0 or time_extension < 0:
        raise ValueError("oversampling amounts must be non-negative")
    r = nbhd.rect
    rect = Rect(max(r.i0 - space_layers, 0), min(r.i1 + space_layers, mesh.nfx),
                max(r.j0 - space_layers, 0), min(r.j1 + space_layers, mesh.nfy))
    clipped_space = rect != Rect(r.i0 - space_layers, r.i1 + space_layers,
                                 r.j0 - space_layers, r.j1 + space_layers)
    levels = mesh.time.slab_levels(slab)
    start = levels[0] - time_extension
    initial = max(start, 0)
    nodes = mesh.rect_nodes(rect)
    return OversampledRegion(
        base=nbhd, slab=slab, space_layers=space_layers,
        time_extension=levels[0] - initial, rect=rect,
        initial_level=initial, final_level=levels[-1],
        fine_nodes=nodes, boundary_fine_nodes=nodes[rect.local_boundary_mask()],
        clipped_space=clipped_space, clipped_time=start < 0)


def nonoverlapping_groups(mesh: MeshIndex) -> list[list[tuple[int, int]]]:
    """Four-colour the interior coarse nodes by index parity.

    Two nodes of equal parity are at least 2H apart in one direction, so their
    neighborhoods share no interior point.
    """
    nodes = mesh.interior_coarse_nodes
    if not nodes:
        raise ValueError("mesh has no interior coarse nodes")
    groups = []
    for pi, pj in ((1, 1), (0, 1), (1, 0), (0, 0)):
        g = [n for n in nodes if n[0] % 2 == pi and n[1] % 2 == pj]
        if g:
            groups.append(g)
    return groups
