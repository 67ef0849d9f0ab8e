import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from heatstab import build_model, synthesize  # noqa: E402
from heatstab.io import canonical_config  # noqa: E402
from heatstab.verification import default_calibration  # noqa: E402


@pytest.fixture(scope="session")
def config():
    return canonical_config()


@pytest.fixture(scope="session")
def model(config):
    return build_model(config.model)


@pytest.fixture(scope="session")
def calibration(model):
    return default_calibration(model)


@pytest.fixture(scope="session")
def law(model, calibration):
    return synthesize(model, 0.5, 1.0, calibration.C0, calibration.safety_factor)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
