import logging

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    logging.getLogger("spatial_iva").setLevel(logging.ERROR)
    yield


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_pd(rng, K, M):
    A = crandn(rng, K, M, M)
    return A @ np.swapaxes(A, 1, 2).conj() + 0.1 * np.eye(M)


# acceptance criteria register a one-line verdict here; it is printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
