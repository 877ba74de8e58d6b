import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marketalign.constructions import make_public_example  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_public():
    # 3 messages and 4 actions keeps exhaustive sweeps at 27 rules per provider
    return make_public_example(0.1, 0.25, 3, 2)


@pytest.fixture(scope="session")
def public_6():
    return make_public_example(0.1, 0.5, 6, 2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
