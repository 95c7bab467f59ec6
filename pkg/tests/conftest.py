import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from podgp.models import generate_dataset  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def restenosis_64():
    return generate_dataset(64)


@pytest.fixture(scope="session")
def restenosis_256():
    return generate_dataset(256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
