"""Universal coding and prediction for large alphabets with tilted Stirling-ratio distributions."""
from ._backend import NAME as BACKEND
from .errors import (
    CorruptStreamError,
    FormatError,
    InstanceTooLargeError,
    TiltcodeError,
    TiltFloorError,
)
from .stirling import (
    TiltedStirling,
    TiltSolution,
    build_tilted,
    expected_count,
    expected_count_second_moment,
    log_stirling_ratio,
    solve_tilt,
    tilted_pmf,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CorruptStreamError",
    "FormatError",
    "InstanceTooLargeError",
    "TiltcodeError",
    "TiltFloorError",
    "TiltedStirling",
    "TiltSolution",
    "build_tilted",
    "expected_count",
    "expected_count_second_moment",
    "log_stirling_ratio",
    "solve_tilt",
    "tilted_pmf",
]
