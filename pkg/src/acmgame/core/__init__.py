"""Shared types, random streams, configuration and errors."""

from .config import BasisSpec, SimConfig, load_config, loads_config, config_from_dict, validate_config
from .errors import (
    AcmError,
    DegenerateDensity,
    DimensionMismatch,
    EmptyGroup,
    EmptyTrajectory,
    NonFiniteResidual,
    NumericalAbort,
    NumericalBlowup,
    OutOfGridWarning,
    ParseError,
    ResidualConsistencyError,
    RoleMismatch,
    SingularR,
    ValidationError,
    WeightGuardTripped,
)
from .rng import RngStream, StreamBank, gaussian_increment
from .types import GroupId, Grid, as_vec2, vec2

__all__ = [
    "AcmError", "BasisSpec", "DegenerateDensity", "DimensionMismatch", "EmptyGroup",
    "EmptyTrajectory", "Grid", "GroupId", "NonFiniteResidual", "NumericalAbort",
    "NumericalBlowup", "OutOfGridWarning", "ParseError", "ResidualConsistencyError",
    "RngStream", "RoleMismatch", "SimConfig", "SingularR", "StreamBank", "ValidationError",
    "WeightGuardTripped", "as_vec2", "config_from_dict", "gaussian_increment", "load_config",
    "loads_config", "validate_config", "vec2",
]
