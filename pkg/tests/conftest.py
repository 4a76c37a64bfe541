from __future__ import annotations

import numpy as np
import pytest

from liftlab import EstimatorConfig, IndexedSets, validate_schedule
from liftlab.models import random_unit_sets


@pytest.fixture
def unit_sets_4():
    return random_unit_sets(3, 3, 4, 4, seed=7)


@pytest.fixture
def sets_3():
    """Unequal norms, l_x = l_y = 3."""
    rng = np.random.default_rng(11)
    return IndexedSets.from_arrays(rng.standard_normal((3, 3)), rng.standard_normal((3, 2)))


@pytest.fixture
def sched_r1():
    return validate_schedule([1, 0.6, 0], [1, 0.7, 0], [1, 0.5, 0])


@pytest.fixture
def sched_r2():
    return validate_schedule([1, 0.7, 0.4, 0], [1, 0.8, 0.3, 0], [1, 0.6, 0.3, 0])


@pytest.fixture
def sched_r2_open():
    """p0, q0 < 1 so the boundary terms are active."""
    return validate_schedule([0.8, 0.5, 0.2, 0], [0.9, 0.4, 0.3, 0], [1, 0.6, 0.3, 0])


def single_pair(a: float = 1.0, b: float = 1.0, n: int = 3, m_dim: int = 2) -> IndexedSets:
    x = np.zeros(n)
    x[0] = a
    y = np.zeros(m_dim)
    y[-1] = b
    return IndexedSets.from_arrays([x], [y])


def cfg(*counts, seed=0, **kw) -> EstimatorConfig:
    return EstimatorConfig(samples_per_level=tuple(counts), seed=seed, **kw)


# one summary line per acceptance criterion, printed after the run whether or
# not output capture is on
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance_line():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
