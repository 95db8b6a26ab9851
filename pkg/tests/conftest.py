import pytest

from cddclock.config import parse_config


@pytest.fixture(scope="session")
def resonant():
    return parse_config(preset="resonant").cdd()


@pytest.fixture(scope="session")
def magic():
    return parse_config(preset="magic").cdd()
