import numpy as np
import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Store one PASS/FAIL line per acceptance criterion for the summary."""

    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(ACCEPTANCE_LINES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def cmac_pool():
    """The fixed 1000-state sample set of the multiple-access example."""
    from pddssca.apps import sample_gains

    return sample_gains(np.random.default_rng(1), 1000, 2)


@pytest.fixture(scope="session")
def ellipsoid_result(cmac_pool):
    """Dual ellipsoid run driven until its final width is far below the price scale."""
    from pddssca.apps import CmacInstance, dual_ellipsoid_baseline

    return dual_ellipsoid_baseline(CmacInstance(), cmac_pool, volume_tol=1e-18)
