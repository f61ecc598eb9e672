from __future__ import annotations

import numpy as np
import pytest

from rslab.states import ModelParams


@pytest.fixture
def params2():
    return ModelParams(N=2, n=2)


@pytest.fixture
def params3():
    return ModelParams(N=3, n=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Registry ``{criterion: (passed, summary)}`` printed at the end of the run."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
