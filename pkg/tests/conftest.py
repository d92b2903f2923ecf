from __future__ import annotations

import numpy as np
import pytest

from voterpam import core

ACCEPTANCE_LINES: list[str] = []


def record(line: str) -> None:
    """Collect a one-line verdict for the end-of-session summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def compiled():
    if core.compiled is None:
        pytest.skip("compiled core not built")
    return core.compiled


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
