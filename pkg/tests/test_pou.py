import numpy as np
import pytest

from stgmsfem.coefficient import constant_field
from stgmsfem.grid import neighborhood
from stgmsfem.pou import (cell_harmonic_extensions, compute_chi, compute_chi_plus,
                          compute_partition)


def bilinear_hat(mesh, node):
    xy = mesh.node_coords
    H = mesh.fpc * mesh.hx
    cx, cy = node[0] * H, node[1] * H
    return (np.clip(1 - np.abs(xy[:, 0] - cx) / H, 0, None)
            * np.clip(1 - np.abs(xy[:, 1] - cy) / H, 0, None))


def test_unit_kappa_gives_bilinear_hats(toy_mesh, unit_field):
    chis = compute_partition(toy_mesh, unit_field, 1)
    for node in toy_mesh.interior_coarse_nodes:
        assert np.allclose(chis.global_values(node), bilinear_hat(toy_mesh, node), atol=1e-13)


def test_cell_extensions_sum_to_one():
    rng = np.random.default_rng(3)
    kap = np.exp(rng.uniform(0, np.log(1e6), size=(8, 8)))
    ext = cell_harmonic_extensions(kap, 0.1, 0.1)
    assert np.abs(ext.sum(axis=0) - 1).max() < 1e-13
    assert ext.min() > -1e-12 and ext.max() < 1 + 1e-12  # discrete maximum principle


def test_partition_sums_to_one_away_from_boundary(toy_mesh, toy_field):
    chis = compute_partition(toy_mesh, toy_field, 2)
    total = chis.sum().reshape(toy_mesh.nfy + 1, toy_mesh.nfx + 1)
    f = toy_mesh.fpc
    inner = total[f:-f, f:-f]
    assert np.abs(inner - 1).max() < 1e-10


def test_single_node_matches_partition(toy_mesh, toy_field):
    chis = compute_partition(toy_mesh, toy_field, 1)
    for node in [(1, 1), (2, 3)]:
        assert np.allclose(compute_chi(toy_mesh, toy_field, 1, node), chis.chi[node],
                           atol=1e-14)


def test_chi_vanishes_on_neighborhood_boundary(toy_mesh, toy_field):
    chis = compute_partition(toy_mesh, toy_field, 1)
    nb = neighborhood(toy_mesh, (2, 2))
    assert np.all(chis.chi[(2, 2)][nb.rect.local_boundary_mask()] == 0)


def test_chi_plus_is_zero_extension(toy_mesh, toy_field):
    plus = compute_chi_plus(compute_partition(toy_mesh, toy_field, 1))
    from stgmsfem.grid import oversample
    reg = oversample(toy_mesh, neighborhood(toy_mesh, (2, 2)), 2, 0, 1)
    vals = plus.on((2, 2), reg.rect)
    own = reg.rect.sub_index(plus.rect((2, 2)))
    outside = np.setdiff1d(np.arange(reg.rect.n_nodes), own)
    assert np.all(vals[outside] == 0)
    assert np.array_equal(vals[own], plus.chi[(2, 2)])


def test_grad_sum_matches_per_node_gradients(toy_mesh, unit_field):
    chis = compute_partition(toy_mesh, unit_field, 1)
    g = chis.grad_sq_sum()
    assert g.shape == (toy_mesh.nfy, toy_mesh.nfx)
    assert g.min() >= 0
    # translation invariance of bilinear hats in the interior
    f = toy_mesh.fpc
    assert np.allclose(g[f:2 * f, f:2 * f], g[2 * f:3 * f, 2 * f:3 * f])
