"""Exception and warning types raised across the simulator."""


class CoexError(Exception):
    """Base class for simulator errors."""


class DegenerateGeometry(CoexError, ValueError):
    """Coincident points or zero-length segments where a direction is required."""


class InvalidPattern(CoexError, ValueError):
    pass


class InvalidConfig(CoexError, ValueError):
    """A configuration value or combination of values is not usable."""


class InvalidQuery(CoexError, ValueError):
    pass


class EmptyDatabase(CoexError):
    pass


class EmptyDeployment(CoexError):
    pass


class RegionMostlyIndoor(CoexError):
    """UE rejection sampling rejected more than 99% of candidate positions."""


class EmptyNetworkWarning(UserWarning):
    """Every sector/beam of every gNB was excluded by the mitigation policy."""
