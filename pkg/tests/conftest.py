import time

import numpy as np
import pytest

from tbdoa.design import design_minimax_sidelobe
from tbdoa.geometry import VirtualStructure, build_sector_grid, irregular_array, receive_subset

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}

SCENE_THETAS = np.array([33.0, 39.0])
SCENE_PHIS = np.array([66.0, 71.0])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_tx():
    return irregular_array()


@pytest.fixture(scope="session")
def default_rx(default_tx):
    return receive_subset(default_tx)


@pytest.fixture(scope="session")
def default_grid():
    return build_sector_grid()


def _timed_design(tx, virtual, grid, delta):
    t0 = time.perf_counter()
    d = design_minimax_sidelobe(tx, virtual, grid, delta)
    return d, time.perf_counter() - t0


@pytest.fixture(scope="session")
def design_01(default_tx, default_grid):
    """(design, seconds) for Δ = 0.1 onto the 4×4 URA."""
    return _timed_design(default_tx, VirtualStructure("ura", 4, 4), default_grid, 0.1)


@pytest.fixture(scope="session")
def design_001(default_tx, default_grid):
    return _timed_design(default_tx, VirtualStructure("ura", 4, 4), default_grid, 0.01)


@pytest.fixture(scope="session")
def design_l01(default_tx, default_grid):
    return _timed_design(default_tx, VirtualStructure("l_shaped", 4, 4), default_grid, 0.1)


@pytest.fixture(scope="session")
def small_problem():
    """A 9-element irregular array mapped onto a 2×2 URA over coarse grids."""
    tx = irregular_array(0, n_side=3, aperture=1.5)
    grid = build_sector_grid(in_step=3.0, out_step=10.0)
    return tx, VirtualStructure("ura", 2, 2), grid
