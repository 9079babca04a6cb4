"""
Exception hierarchy for the IMEX-RK integrator, gradient sweeps and optimizer.
Every error can carry the index of the time step it was raised in.
"""
from typing import Any, Iterable, Optional


class ImexError(Exception):
    """Base class for all integrator and optimizer errors."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.step = step

    def at_step(self, step: int) -> "ImexError":
        """Annotate the error with a step index (first annotation wins)."""
        if self.step is None:
            self.step = step
        return self

    def __str__(self) -> str:
        if self.step is None:
            return self.message
        return f"step {self.step}: {self.message}"


class UnknownSchemeError(ImexError, ValueError):
    """Requested tableau pair is not registered."""

    def __init__(self, name: str, valid: Iterable[str]):
        self.name = name
        self.valid = tuple(valid)
        super().__init__(f"unknown scheme '{name}', valid schemes: {', '.join(self.valid)}")


class NewtonConvergenceError(ImexError):
    """Implicit stage equation did not converge."""

    def __init__(self, stage: int, subsystem: int, residual_norm: float, iterations: int):
        self.stage = stage
        self.subsystem = subsystem
        self.residual_norm = residual_norm
        self.iterations = iterations
        super().__init__(
            f"Newton failed at stage {stage}, subsystem {subsystem}: "
            f"|F|_inf = {residual_norm:.3e} after {iterations} iterations"
        )


class NonFiniteStateError(ImexError):
    """NaN or Inf detected in a stage state or velocity."""


class NonPhysicalStateError(ImexError, ValueError):
    """Fluid state with nonpositive density or pressure."""


class SingularSystemError(ImexError):
    """Linear system in a stage solve or gradient sweep is singular."""


class TrajectoryFormatError(ImexError, ValueError):
    """Trajectory file is truncated, has the wrong magic or inconsistent sizes."""


class TrajectoryMismatchError(ImexError):
    """Trajectory does not belong to the system it is swept with."""


class LineSearchError(ImexError):
    """Backtracking step underflowed; keeps the last accepted iterate."""

    def __init__(self, message: str, last_iterate: Any = None, last_value: Optional[float] = None,
                 trace: Any = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.last_value = last_value
        self.trace = trace


class NonFiniteObjectiveError(ImexError):
    """Objective or gradient evaluated to NaN/Inf."""
