"""Exception hierarchy shared by every gnslab module.

Each exception carries the process exit code the CLI uses when it surfaces:
1 generic, 2 configuration, 3 data, 4 numeric divergence.
"""

from __future__ import annotations

from collections.abc import Sequence


class GnsLabError(Exception):
    """Base class for all gnslab errors."""

    exit_code: int = 1


class ShapeError(GnsLabError, ValueError):
    """Raised when tensor or feature dimensions do not line up."""


class ContractError(GnsLabError):
    """Raised when an operation is called outside its preconditions."""


class ConfigError(GnsLabError):
    """Raised for invalid configuration values or incompatible options."""

    exit_code = 2


class UnsatisfiableSpecError(ConfigError):
    """Raised when a scene spec cannot produce a scene under the particle cap."""


class ArchitectureMismatchError(ConfigError):
    """Raised when a checkpoint does not match the target model architecture.

    Attributes:
        tensors: Names of the tensors whose presence or shape differ.
    """

    def __init__(self, message: str, tensors: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.tensors: list[str] = list(tensors)


class DataError(GnsLabError):
    """Raised for unreadable or inconsistent data files."""

    exit_code = 3


class HeaderError(DataError):
    """Raised when a binary file header is missing, corrupt or unsupported."""


class StatsError(DataError):
    """Raised when normalization statistics are undefined or degenerate."""


class DivergenceError(GnsLabError):
    """Base class for numeric divergence."""

    exit_code = 4


class SimulationDivergedError(DivergenceError):
    """Raised when the fluid solver produces non-finite particle positions."""


class PressureSolveError(DivergenceError):
    """Raised when the pressure solve does not reach its tolerance.

    Attributes:
        residual: Largest per-cell divergence left after the solve.
    """

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual: float = residual


class RolloutDivergedError(DivergenceError):
    """Raised when a learned rollout produces non-finite positions.

    Attributes:
        step: Rollout step index at which the divergence was detected.
    """

    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step: int = step


class NonFiniteGradientError(DivergenceError):
    """Raised by the optimizer when a gradient contains NaN or inf.

    Attributes:
        index: Position of the parameter in the optimizer's parameter list.
        name: Parameter name, when known.
    """

    def __init__(self, message: str, index: int, name: str | None = None) -> None:
        super().__init__(message)
        self.index: int = index
        self.name: str | None = name


class NonFiniteLossError(DivergenceError):
    """Raised when a training loss is NaN or inf.

    Attributes:
        samples: (trajectory index, frame index) pairs of the offending batch.
    """

    def __init__(self, message: str, samples: Sequence[tuple[int, int]]) -> None:
        super().__init__(message)
        self.samples: list[tuple[int, int]] = list(samples)


class TransportError(GnsLabError):
    """Raised when an optimal transport solve returns an infeasible plan."""


__all__: list[str] = [
    "GnsLabError",
    "ShapeError",
    "ContractError",
    "ConfigError",
    "UnsatisfiableSpecError",
    "ArchitectureMismatchError",
    "DataError",
    "HeaderError",
    "StatsError",
    "DivergenceError",
    "SimulationDivergedError",
    "PressureSolveError",
    "RolloutDivergedError",
    "NonFiniteGradientError",
    "NonFiniteLossError",
    "TransportError",
]
