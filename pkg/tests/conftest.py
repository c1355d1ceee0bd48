from pathlib import Path

import pytest

NETWORKS = Path(__file__).resolve().parent.parent / "networks"


@pytest.fixture
def networks_dir() -> Path:
    return NETWORKS
