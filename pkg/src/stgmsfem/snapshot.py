"""Local space-time snapshots: randomized Gaussian boundary data and full delta data."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficient import CoefficientField
from .fem import SlabSystem, SolverError, SpaceTimeFunction, slab_system
from .grid import MeshIndex, Neighborhood, OversampledRegion, Rect, oversample

GENERATOR_ID = "numpy-Philox4x64-10/SeedSequence(seed;I,J,slab,index)/ziggurat-normal"


@dataclass
class SnapshotSet:
    """Snapshots on ``region`` (all levels initial_level..final_level).

    ``values[s, l, node]``: snapshot ``s`` at local level ``l`` on region node ``node``.
    """

    region: OversampledRegion
    slab: int
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    generator_id: str = GENERATOR_ID

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def functions(self) -> list[SpaceTimeFunction]:
        return [SpaceTimeFunction(self.slab, v) for v in self.values]

    def levels(self) -> range:
        return range(self.region.initial_level, self.region.final_level + 1)

    def restrict(self, target: Rect, levels=None) -> np.ndarray:
        """Sub-sample onto ``target`` and the slab levels (default); shape (count, levels, nodes)."""
        if levels is None:
            levels = range(self.region.initial_level + self.region.slab_offset,
                           self.region.final_level + 1)
        return restrict(self.values, self.region.rect, self.levels(), target, levels)


def restrict(values: np.ndarray, source: Rect, source_levels, target: Rect,
             target_levels) -> np.ndarray:
    """Nodal restriction of ``values[..., level, node]`` from one space-time box to a nested one."""
    source_levels, target_levels = list(source_levels), list(target_levels)
    if not source.contains(target):
        raise ValueError(f"target {target} is not inside source {source}")
    if not target_levels or target_levels[0] < source_levels[0] \
            or target_levels[-1] > source_levels[-1]:
        raise ValueError(f"levels {target_levels[:1]}..{target_levels[-1:]} are not inside "
                         f"{source_levels[0]}..{source_levels[-1]}")
    lev = np.asarray(target_levels) - source_levels[0]
    idx = source.sub_index(target)
    return values[..., lev[:, None], idx[None, :]]


def snapshot_rng(seed: int, node, slab: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, coarse node, slab, snapshot index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(node[0]), int(node[1]), int(slab),
                                                      int(index)))
    return np.random.Generator(np.random.Philox(ss))


def region_system(mesh: MeshIndex, kappa: CoefficientField, region: OversampledRegion) -> SlabSystem:
    return slab_system(mesh, kappa, region.rect, region.initial_level, region.final_level,
                       region.slab, label=f"snapshots at node {region.base.center}, "
                                         f"slab {region.slab}")


def generator_id(constant_in_time: bool = False) -> str:
    return GENERATOR_ID + ("/lateral-constant-in-time" if constant_in_time else "")


def random_data(mesh: MeshIndex, region: OversampledRegion, count: int, seed: int,
                zero_on_domain_boundary: bool = True,
                constant_in_time: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian initial-face values (count, nodes) and lateral values (count, levels-1, n_bnd).

    Lateral values are redrawn at every level unless ``constant_in_time``, in
    which case one draw per boundary node is held over the whole time extent.
    """
    n_nodes = region.rect.n_nodes
    bmask = region.rect.local_boundary_mask()
    n_b = int(bmask.sum())
    init = np.empty((count, n_nodes))
    lateral = np.empty((count, region.n_levels - 1, n_b))
    for s in range(count):
        rng = snapshot_rng(seed, region.base.center, region.slab, s)
        init[s] = rng.standard_normal(n_nodes)
        if constant_in_time:
            lateral[s] = rng.standard_normal(n_b)
        else:
            lateral[s] = rng.standard_normal((region.n_levels - 1, n_b))
    if zero_on_domain_boundary:
        on_dom = mesh.boundary_mask[region.fine_nodes]
        init[:, on_dom] = 0.0
        lateral[:, :, on_dom[bmask]] = 0.0
    return init, lateral


def _solve_batch(system: SlabSystem, init: np.ndarray, lateral: np.ndarray) -> np.ndarray:
    """Homogeneous local solves for a batch of (initial, lateral) data; (count, levels, nodes)."""
    count = init.shape[0]
    bmask = system.space.boundary_mask
    loads = np.zeros((system.n_levels, system.n_nodes, count))
    loads[0] = system.space.mass @ init.T
    dirichlet = np.concatenate([init[:, None, bmask], lateral], axis=1)  # (count, levels, n_b)
    d = dirichlet.reshape(count, -1).T
    x = system.solve(loads.reshape(-1, count), d)
    return x.T.reshape(count, system.n_levels, system.n_nodes)


def generate_randomized(mesh: MeshIndex, kappa: CoefficientField, region: OversampledRegion,
                        count: int, seed: int, system: SlabSystem | None = None,
                        zero_on_domain_boundary: bool = True,
                        constant_in_time: bool = False) -> SnapshotSet:
    """Randomized snapshots on an oversampled region.

    Passing a prebuilt ``system`` lets callers reuse one factorization across seeds.
    Data at nodes on the global boundary are zeroed by default, since every
    fine solution vanishes there.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if system is None:
        system = region_system(mesh, kappa, region)
    init, lateral = random_data(mesh, region, count, seed, zero_on_domain_boundary,
                                constant_in_time)
    try:
        values = _solve_batch(system, init, lateral)
    except SolverError as exc:
        raise SolverError(f"{exc} (snapshots 0..{count - 1}, seed {seed})") from exc
    return SnapshotSet(region, region.slab, values, seed=seed,
                       generator_id=generator_id(constant_in_time))


def full_snapshot_count(region) -> int:
    """Initial-face nodes plus boundary nodes times the remaining levels."""
    rect = region.rect
    n_b = int(rect.local_boundary_mask().sum())
    n_levels = region.n_levels
    return rect.n_nodes + (n_levels - 1) * n_b


def generate_full(mesh: MeshIndex, kappa: CoefficientField, nbhd: Neighborhood, slab: int,
                  max_count: int = 5000, system: SlabSystem | None = None) -> SnapshotSet:
    """Delta-data snapshots: one per initial-face node, then one per (boundary node, level >= 1)."""
    region = oversample(mesh, nbhd, 0, 0, slab)
    count = full_snapshot_count(region)
    if count > max_count:
        raise ValueError(f"full snapshot set of {count} exceeds the cap of {max_count}")
    if system is None:
        system = region_system(mesh, kappa, region)
    n_nodes = region.rect.n_nodes
    n_b = int(region.rect.local_boundary_mask().sum())
    init = np.zeros((count, n_nodes))
    init[np.arange(n_nodes), np.arange(n_nodes)] = 1.0
    lateral = np.zeros((count, (region.n_levels - 1) * n_b))
    lateral[n_nodes + np.arange(count - n_nodes), np.arange(count - n_nodes)] = 1.0
    values = _solve_batch(system, init, lateral.reshape(count, region.n_levels - 1, n_b))
    return SnapshotSet(region, slab, values, seed=None, generator_id="delta")


def snapshot_ratio(L: int, p_bf: int, full_count: int) -> float:
    """(L + p_bf) / number of full snapshots of the neighborhood."""
    if L + p_bf <= 0 or full_count <= 0:
        raise ValueError("counts must be positive")
    return (L + p_bf) / full_count


def region_hash(mesh: MeshIndex, kappa: CoefficientField, region: OversampledRegion) -> str:
    h = hashlib.sha256()
    r = region.rect
    h.update(json.dumps([r.i0, r.i1, r.j0, r.j1, region.initial_level, region.final_level,
                         region.slab, mesh.hx, mesh.hy, mesh.time.t_end,
                         mesh.time.n_steps]).encode())
    steps = range(region.initial_level, region.final_level)
    h.update(np.ascontiguousarray(kappa.window(r, steps)).tobytes())
    return h.hexdigest()


def save_snapshots(path, snaps: SnapshotSet, digest: str) -> None:
    meta = {"seed": snaps.seed, "generator_id": snaps.generator_id, "region_hash": digest,
            "slab": snaps.slab, "center": list(snaps.region.base.center)}
    np.savez(Path(path), values=snaps.values, meta=json.dumps(meta, sort_keys=True))


def load_snapshots(path, region: OversampledRegion, digest: str, seed: int | None = None):
    """Cached set, or ``None`` when the file is missing or was made for other inputs."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta["region_hash"] != digest or meta["seed"] != seed:
            return None
        values = data["values"]
    return SnapshotSet(region, meta["slab"], values, seed=meta["seed"],
                       generator_id=meta["generator_id"])
