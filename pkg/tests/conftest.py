import numpy as np
import pytest
from hypothesis import settings

from gauzecut import mesh
from gauzecut.contour import SHAPES_DIR, load_contour

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sagged_15():
    """15x15 sheet settled under the training gravity."""
    sheet = mesh.new_sheet(mesh.SimParams(resolution=15, gravity_magnitude=2500.0))
    mesh.settle(sheet, 3000)
    sheet.time_step = 0
    return sheet


@pytest.fixture
def flat_15():
    return mesh.new_sheet(mesh.SimParams(resolution=15))


@pytest.fixture(scope="session")
def v_contour():
    return load_contour(SHAPES_DIR / "v.json", 14.0)


# -- acceptance ledger: one line per criterion, printed after the run ----------------
_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    def record(number, ok, detail):
        _CRITERIA.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
