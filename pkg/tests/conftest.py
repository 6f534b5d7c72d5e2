import pytest

from chiplet_gym.calibration import Calibration


@pytest.fixture
def cal():
    return Calibration()
