import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stgmsfem.diagnostics import (ErrorNorms, ErrorReport, compute_errors, corrcoef,
                                  lambda_star, v_norm, write_report_csv)
from stgmsfem.fem import SpaceTimeFunction, apply_form, assemble_slab
from stgmsfem.offline import LocalBasis


def test_corrcoef_hand_value():
    # by hand: dx = (-1, 0, 1), dy = (-2.0333.., -0.0333.., 2.0666..)
    dy = np.array([2, 4, 6.1]) - 4.0333333333333333
    hand = (-1 * dy[0] + 1 * dy[2]) / (np.sqrt(2) * np.sqrt(dy @ dy))
    assert corrcoef([1, 2, 3], [2, 4, 6.1]) == pytest.approx(hand, rel=1e-14)
    assert round(hand, 5) == 0.9999


def test_corrcoef_extremes_and_degenerate():
    assert corrcoef([1, 2, 5], [1, 2, 5]) == pytest.approx(1.0)
    assert corrcoef([1, 2, 5], [-1, -2, -5]) == pytest.approx(-1.0)
    assert abs(corrcoef([0, 1], [3, 7])) == 1.0
    with pytest.warns(RuntimeWarning):
        assert np.isnan(corrcoef([1, 1, 1], [1, 2, 3]))


@given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)))
def test_corrcoef_bounded_and_symmetric(x, y):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a, b = corrcoef(x, y), corrcoef(y, x)
    if np.isnan(a):
        assert np.isnan(b)
    else:
        assert -1 <= a <= 1 and a == pytest.approx(b, abs=1e-12)


def test_errors_of_identical_and_doubled(toy_mesh, toy_field):
    rng = np.random.default_rng(0)
    norms = ErrorNorms(toy_mesh, toy_field)
    u = [SpaceTimeFunction(n, rng.standard_normal((5, toy_mesh.n_nodes))) for n in (1, 2)]
    assert compute_errors(u, u, norms) == (0.0, 0.0)
    e1, e2 = compute_errors(u, [SpaceTimeFunction(v.slab, 2 * v.values) for v in u], norms)
    assert e1 == pytest.approx(1.0) and e2 == pytest.approx(1.0)
    # invariance under common scaling
    w = [SpaceTimeFunction(v.slab, v.values + 0.1) for v in u]
    a = compute_errors(u, w, norms)
    b = compute_errors([SpaceTimeFunction(v.slab, 3 * v.values) for v in u],
                       [SpaceTimeFunction(v.slab, 3 * v.values) for v in w], norms)
    assert np.allclose(a, b)
    with pytest.raises(ZeroDivisionError):
        zero = [SpaceTimeFunction(v.slab, 0 * v.values) for v in u]
        compute_errors(zero, u, norms)


def test_v_norm_of_constant_is_area(toy_mesh, toy_field):
    u = SpaceTimeFunction(1, np.ones((5, toy_mesh.n_nodes)))
    assert v_norm(u, toy_field, toy_mesh) == pytest.approx(1.0)
    assert v_norm(SpaceTimeFunction(1, 0 * u.values), toy_field, toy_mesh) == 0.0


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2]))
@settings(max_examples=15, deadline=None)
def test_energy_identity(seed, slab):
    from stgmsfem.coefficient import field_translated_inclusions
    from stgmsfem.grid import GridSpec, TimePartition, build_mesh
    mesh = build_mesh(GridSpec(4, 4, 3), TimePartition(1.0, 2, 3))
    kappa = field_translated_inclusions(mesh, contrast=1e3, n_inclusions=5, n_channels=1)
    s = assemble_slab(mesh, kappa, slab)
    u = np.random.default_rng(seed).standard_normal((s.n_levels, s.n_nodes))
    a = apply_form(s, u, u)
    assert v_norm(SpaceTimeFunction(slab, u), kappa, mesh) ** 2 == pytest.approx(a, rel=1e-10)


def _basis(vals):
    return LocalBasis((1, 1), 1, None, np.zeros((2, 1, 1)), np.asarray(vals))


def test_lambda_star():
    assert lambda_star([_basis([0.1, 0.2, 0.5])]) == 0.5
    assert lambda_star([_basis([0.1, 0.2, 0.5]), _basis([0.0, 0.1, 0.3])]) == 0.3
    with pytest.raises(ValueError, match="p_bf"):
        lambda_star([_basis([0.1, 0.2])])


def test_report_csv(tmp_path):
    r = ErrorReport(10, 8, 810, 18 / 761, 0.07, 0.55, 50.0)
    write_report_csv(tmp_path / "r.csv", [r], ["hello"])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "L,p_bf,dim_off,snapshot_ratio,e1,e2,inv_lambda_star"
    assert lines[2].startswith("10,8,810,") and lines[2].endswith(",0.02")
