"""Shared job-lifecycle primitives for the frontend APIs.

Data generation, training and evaluation all follow one contract: a *plan*
describes the work and whether it can proceed, a *job* executes it, and a
:class:`JobResult` reports the outcome without ever raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

from .._errors import GnsLabError
from .._progress import ProgressCallback

__all__ = ["Job", "JobResult", "ProgressCallback", "exit_code_for", "prepare_output_dir"]


@dataclass
class JobResult:
    """Holds the result of a data-generation, training or evaluation job.

    Attributes:
        ok: Indicates if the job was successful.
        error: The error encountered, if any.
        plan: The associated plan.
        outputs: Files the job wrote, in the order it wrote them.
    """

    ok: bool
    error: BaseException | None
    plan: object
    outputs: list[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else exit_code_for(self.error)


def exit_code_for(error: BaseException | None) -> int:
    """Process exit code of an error: its own code for gnslab errors, else 1."""
    if error is None:
        return 0
    return error.exit_code if isinstance(error, GnsLabError) else 1


def prepare_output_dir(path: Path, force: bool) -> str | None:
    """Check an output directory can be written.

    Returns:
        Why it cannot, or None. A non-empty directory needs ``force``.
    """
    if path.exists() and not path.is_dir():
        return f"Output path exists and is not a directory: {path}"
    if path.is_dir() and any(path.iterdir()) and not force:
        return f"Output directory is not empty (use --force to overwrite): {path}"
    return None


@runtime_checkable
class Job(Protocol):
    """Structural contract shared by every frontend job.

    A job exposes the ``plan`` it will execute and a ``run`` method that
    performs the work and returns a :class:`JobResult` (never raising).
    """

    plan: object

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Execute the job and return its result."""
        ...
