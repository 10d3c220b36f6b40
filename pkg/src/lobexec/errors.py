"""Exception types raised across the package."""


class LobexecError(Exception):
    """Base class for all package-specific errors."""


class DataError(LobexecError):
    """A day file is malformed or fails validation beyond repair."""


class ConfigError(LobexecError):
    """A configuration value is missing, malformed, or out of range."""


class StatsError(LobexecError):
    """A statistical routine received input it cannot handle."""


class ProtocolError(LobexecError):
    """A bridge message violates the wire protocol."""
