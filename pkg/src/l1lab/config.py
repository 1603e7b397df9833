"""Process-wide resource limits.

All hard numeric guards live here so that the CLI, the library and the test
suite agree on what "too big" means.  The sample budget can be overridden with
the LLAB_BUDGET_SAMPLES environment variable (read once at import time); the
CLI re-reads it on startup so shell overrides always win.
"""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass
class Limits:
    # largest |coordinate| accepted anywhere; generators refuse beyond it
    coord_bound: int = 2**40
    # most points any generator will materialize into a single set
    set_points_budget: int = 2**22
    # hard cap on total grid samples for any single evaluation
    samples_budget: int = 2**27
    # above this many samples the L1 path streams instead of materializing
    stream_threshold: int = 2**22
    # default total-sample budget for the 2-D measurement grid of bound_2d
    measure_budget: int = 2**22
    # accumulation chunk for compensated sums
    chunk: int = 2**16
    # worker cap for parallel kernels (1 = fully sequential)
    threads: int = 1


def _env_samples_budget() -> int | None:
    raw = os.environ.get("LLAB_BUDGET_SAMPLES")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        return None
    return value if value > 0 else None


LIMITS = Limits()
_env = _env_samples_budget()
if _env is not None:
    LIMITS.samples_budget = _env


def refresh_from_env() -> None:
    """Re-read environment overrides (the CLI calls this on startup)."""
    value = _env_samples_budget()
    if value is not None:
        LIMITS.samples_budget = value
