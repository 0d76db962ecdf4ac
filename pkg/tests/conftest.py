import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from headcond import gen_synthetic_assets


@pytest.fixture(scope="session")
def assets():
    """Standard mid-size synthetic head used across tests."""
    return gen_synthetic_assets(seed=7, v_target=1000, tex_res=64)


@pytest.fixture(scope="session")
def small_assets():
    """Small head for operations that loop over many parameter draws."""
    return gen_synthetic_assets(seed=11, v_target=250, tex_res=32)
