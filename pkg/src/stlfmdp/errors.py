class ConfigError(ValueError):
    """Invalid experiment or learner configuration."""


class ResourceCapError(RuntimeError):
    """A state space or model would exceed its configured size cap."""
