"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from missadf import MissingSeries

_ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)`` tuples; printed in the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(_ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"{crit}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_series(values):
    """Build a MissingSeries from a list with ``None`` for missing entries."""
    obs = np.array([v is not None for v in values])
    vals = np.array([0.0 if v is None else float(v) for v in values])
    return MissingSeries(vals, obs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
