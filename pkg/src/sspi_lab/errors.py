"""Exception hierarchy shared by every module."""


class SSPIError(Exception):
    """Base class for all library errors."""


class ConfigError(SSPIError, ValueError):
    """Malformed distribution, instance or experiment configuration."""


class InputError(SSPIError, ValueError):
    """An argument does not fit the instance it is used with (bad order, wrong kind, ...)."""


class SizeError(SSPIError):
    """An exact routine was asked to work above its configured cap."""

    def __init__(self, message, *, instance=None):
        super().__init__(message)
        self.instance = instance


class UnsupportedModeError(SSPIError):
    """Exact mode requested on a distribution that cannot be enumerated."""


class ContractViolation(SSPIError):
    """A policy produced a decision that breaks the feasibility contract."""
