import sys
from pathlib import Path

import pytest

from mbnas.costs import HardwareProfile
from mbnas.space import SearchSpaceConfig

TESTS_DIR = Path(__file__).parent
MOCK_SCRIPT = TESTS_DIR / "mock_evaluator.py"


@pytest.fixture
def toy_config() -> SearchSpaceConfig:
    return SearchSpaceConfig(num_layers=4)


@pytest.fixture
def default_config() -> SearchSpaceConfig:
    return SearchSpaceConfig()


@pytest.fixture
def unit_profile() -> HardwareProfile:
    return HardwareProfile(name="unit", coefficients={})


def mock_command(mode: str) -> str:
    return f"{sys.executable} {MOCK_SCRIPT} {mode}"


@pytest.fixture
def mock_cmd():
    return mock_command


@pytest.fixture(scope="session")
def client():
    import warnings

    with warnings.catch_warnings():
        # the vendored test client import warns about its own httpx pin
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from mbnas.service import app

    with TestClient(app) as test_client:
        yield test_client
