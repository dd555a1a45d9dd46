"""Monte Carlo simulator for 5G mmWave interference into 70/80 GHz fixed stations."""

from .antenna import GNB_ARRAY, UE_ARRAY, ArrayConfig, FsAntennaMask, default_fs_mask, make_codebook
from .channel import ChannelParams
from .errors import (
    CoexError,
    DegenerateGeometry,
    EmptyDatabase,
    EmptyDeployment,
    EmptyNetworkWarning,
    InvalidConfig,
    InvalidPattern,
    InvalidQuery,
    RegionMostlyIndoor,
)
from .geom import Building
from .interference import InrSampleSet, SimulationResult, UeTxState, run_monte_carlo
from .mitigation import MitigationPolicy
from .scenario import DeploymentConfig, FixedStation, GnbSite, Scenario, deploy_gnbs

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig", "Building", "ChannelParams", "CoexError", "DegenerateGeometry", "DeploymentConfig",
    "EmptyDatabase", "EmptyDeployment", "EmptyNetworkWarning", "FixedStation", "FsAntennaMask", "GNB_ARRAY",
    "GnbSite", "InrSampleSet", "InvalidConfig", "InvalidPattern", "InvalidQuery", "MitigationPolicy",
    "RegionMostlyIndoor", "Scenario", "SimulationResult", "UE_ARRAY", "UeTxState", "default_fs_mask",
    "deploy_gnbs", "make_codebook", "run_monte_carlo",
]
