import pathlib
import sys

import pytest

TESTS = pathlib.Path(__file__).parent
ROOT = TESTS.parent
sys.path.insert(0, str(TESTS))

from mcmpst import parse_file  # noqa: E402

COURTHOUSE = ROOT / "protocols" / "courthouse.mcp"


@pytest.fixture(scope="session")
def courthouse():
    return parse_file(COURTHOUSE.read_text())


@pytest.fixture(scope="session")
def courthouse_path():
    return str(COURTHOUSE)
