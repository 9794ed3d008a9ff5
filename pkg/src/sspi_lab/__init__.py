"""Single-sample prophet inequality policies with offline oracles and an experiment harness."""

from .core import (ZERO_KEY, DistributionSpec, Edge, Instance, RandomSource, Realization, draw_realization,
                   enumerate_realizations, load_instance, realization_from_values, save_instance)
from .errors import ConfigError, ContractViolation, InputError, SizeError, SSPIError, UnsupportedModeError

__version__ = "0.1.0"

__all__ = [
    "ZERO_KEY", "DistributionSpec", "Edge", "Instance", "RandomSource", "Realization", "draw_realization",
    "enumerate_realizations", "load_instance", "realization_from_values", "save_instance",
    "ConfigError", "ContractViolation", "InputError", "SizeError", "SSPIError", "UnsupportedModeError",
]
