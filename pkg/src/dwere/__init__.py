"""Deterministic walks in excited random environments: simulation and checks."""

from dwere.env import (
    CookieDistribution,
    Environment,
    apply_patch,
    cookie,
    make_distribution,
    sample_environment,
    uniform,
)
from dwere.walk import HittingQuery, WalkOutcome, WalkState, detect_loop, run, step

__version__ = "0.1.0"
