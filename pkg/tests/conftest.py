import pytest

from mmwave_coex import ChannelParams, DeploymentConfig, deploy_gnbs


@pytest.fixture
def flat_channel():
    """LOS geometry, no shadowing."""
    return ChannelParams(sigma_los_db=0.0, sigma_nlos_db=0.0)


@pytest.fixture
def square_km():
    return DeploymentConfig.square(1000.0, ue_count=200)


@pytest.fixture
def grid25(square_km):
    return deploy_gnbs(square_km)
