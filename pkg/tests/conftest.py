import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from claimsbacklog import ModelConfig  # noqa: E402


@pytest.fixture
def paper():
    return ModelConfig.paper()


@pytest.fixture
def small():
    return ModelConfig.small()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k].line())
