class DataError(ValueError):
    """Input data is malformed or inconsistent."""


class ConfigError(ValueError):
    """Configuration is invalid or references missing inputs."""
