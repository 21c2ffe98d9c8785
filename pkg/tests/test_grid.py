import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgmsfem.grid import (GridSpec, Rect, TimePartition, build_mesh, neighborhood,
                           nonoverlapping_groups, oversample)


def test_time_partition_levels():
    tp = TimePartition(1.6, 2, 8)
    assert tp.n_steps == 16
    assert tp.tau == pytest.approx(0.1)
    assert list(tp.slab_levels(2)) == list(range(8, 17))
    assert list(tp.slab_steps(1)) == list(range(8))
    with pytest.raises(ValueError):
        tp.slab_steps(3)


def test_neighborhood_shape(toy_mesh):
    nb = neighborhood(toy_mesh, (1, 1))
    assert nb.rect == Rect(0, 8, 0, 8)
    assert nb.fine_nodes.size == 81
    assert nb.boundary_fine_nodes.size == 32
    with pytest.raises(ValueError):
        neighborhood(toy_mesh, (0, 2))


def test_interior_neighborhood_100_mesh():
    mesh = build_mesh(GridSpec(10, 10, 10), TimePartition())
    nb = neighborhood(mesh, (5, 5))
    assert nb.fine_nodes.size == 21 * 21
    assert len(mesh.interior_coarse_nodes) == 81


def test_oversample_clips(toy_mesh):
    nb = neighborhood(toy_mesh, (1, 1))
    reg = oversample(toy_mesh, nb, 2, 2, 1)
    assert reg.clipped_space and reg.clipped_time
    assert reg.rect == Rect(0, 10, 0, 10)
    assert reg.initial_level == 0 and reg.time_extension == 0
    reg2 = oversample(toy_mesh, neighborhood(toy_mesh, (2, 2)), 2, 2, 2)
    assert not reg2.clipped_space and not reg2.clipped_time
    assert reg2.initial_level == 2 and reg2.slab_offset == 2 and reg2.n_levels == 7


@given(st.integers(3, 9), st.integers(3, 9))
@settings(max_examples=20, deadline=None)
def test_groups_do_not_overlap(ncx, ncy):
    mesh = build_mesh(GridSpec(ncx, ncy, 2), TimePartition(1.0, 1, 1))
    groups = nonoverlapping_groups(mesh)
    assert sorted(n for g in groups for n in g) == sorted(mesh.interior_coarse_nodes)
    for g in groups:
        for a in g:
            for b in g:
                if a != b:
                    ra, rb = neighborhood(mesh, a).rect, neighborhood(mesh, b).rect
                    # open interiors are disjoint
                    assert (ra.i1 <= rb.i0 or rb.i1 <= ra.i0 or ra.j1 <= rb.j0
                            or rb.j1 <= ra.j0)


@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 3), st.integers(0, 3))
def test_sub_index_roundtrip(i0, j0, di, dj):
    outer = Rect(0, 8, 0, 8)
    inner = Rect(i0, min(i0 + di, 8), j0, min(j0 + dj, 8))
    idx = outer.sub_index(inner)
    jj, ii = np.divmod(idx, outer.nx + 1)
    assert ii.min() == inner.i0 and ii.max() == inner.i1
    assert jj.min() == inner.j0 and jj.max() == inner.j1
