"""Exception types shared across the package."""


class MinimaxError(Exception):
    """Base class for all package errors."""


class DomainError(MinimaxError, ValueError):
    """Argument outside the domain of a special function or kernel."""


class NearFieldError(MinimaxError):
    """Target point too close to a source curve or region for plain quadrature."""


class SeparationViolation(MinimaxError):
    """Two geometric objects are closer than the configured threshold."""


class SingularSystem(MinimaxError):
    """A dense or sparse solve is singular or too badly conditioned."""


class RegionViolation(MinimaxError):
    """A region does not fit inside the computational annulus."""


class NegativeSigmaSquared(MinimaxError):
    """The computed worst-case error squared came out negative."""


class ConfigError(MinimaxError):
    """Scenario configuration is malformed."""
