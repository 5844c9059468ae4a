"""Exception types shared across the package."""


class LumenrecError(Exception):
    """Base class for package-specific errors."""


class ConfigError(LumenrecError):
    """Invalid configuration value. Message names the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class TrajectoryParseError(LumenrecError):
    """Malformed trajectory file. Carries the 1-based line number."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class DepthFormatError(LumenrecError):
    """Depth image is not in the expected 16-bit single-channel format."""


class ManifestError(LumenrecError):
    """Dataset manifest is missing, malformed, or references absent files."""


class CheckpointMismatchError(LumenrecError):
    """Checkpoint was produced by a network with an incompatible spec."""


class RegistrationError(LumenrecError):
    """Point-cloud registration failed (correspondence collapse)."""
