"""Dynamic watermark authentication for IoT device streams and the
gateway-vs-attacker authentication game."""

from .errors import (
    FormatError,
    InfeasibleError,
    InsufficientDataError,
    IotwmError,
    ParameterError,
    ShapeError,
    StateError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "InfeasibleError",
    "InsufficientDataError",
    "IotwmError",
    "ParameterError",
    "ShapeError",
    "StateError",
    "TrainingDivergedError",
]
