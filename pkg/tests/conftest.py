import functools

import numpy as np
import pytest

from hdivmg import verify

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def cached_level_ops(L, k, strategy="inherited"):
    return tuple(verify.level_operators(L, k, strategy=strategy))


@pytest.fixture
def level_ops():
    return cached_level_ops


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
