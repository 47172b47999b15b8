import dataclasses
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from auvpath.vehicle import default_vehicle_params  # noqa: E402


@pytest.fixture(scope="session")
def params():
    return default_vehicle_params()


@pytest.fixture(scope="session")
def neutral(params):
    """Neutrally buoyant copy of the default vehicle."""
    return dataclasses.replace(params, B=params.W)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
