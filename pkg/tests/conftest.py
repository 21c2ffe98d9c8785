import numpy as np
import pytest

from stgmsfem.coefficient import constant_field, field_translated_inclusions
from stgmsfem.grid import GridSpec, TimePartition, build_mesh

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def toy_mesh():
    return build_mesh(GridSpec(4, 4, 4), TimePartition(1.0, 2, 4))


@pytest.fixture(scope="session")
def toy_field(toy_mesh):
    return field_translated_inclusions(toy_mesh, contrast=1e4, n_inclusions=6, n_channels=1)


@pytest.fixture(scope="session")
def unit_field(toy_mesh):
    return constant_field(toy_mesh, 1.0)


@pytest.fixture(scope="session")
def toy_beta(toy_mesh):
    xy = toy_mesh.node_coords
    return np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])
