"""Progress reporting shared by the backend engines and the frontend jobs."""

from __future__ import annotations

from typing import Callable

# Progress callback signature: (fraction, done_units, total_units).
ProgressCallback = Callable[[float, int, int], None]
