"""Guaranteed multi-source acoustic energy localization.

From one snapshot of energy readings, compute per-source bounding sets
(an energy interval and a position ellipsoid each) that are guaranteed to
contain the true sources whenever the measurement noise respects its known
bounds, plus a point-estimation baseline and a Monte Carlo harness.
"""

from .geometry import Ball, Box, Ellipsoid, Interval, SourceSet
from .model import NoiseModel, Scenario, Sensor, SourceState
from .solver import IterationTrace, SolverConfig, run_alg1, run_alg2, run_alg3
from .baseline import PointEstimate, nls_estimate
from .harness import (ExperimentSpec, ResultRow, load_scenario,
                      random_initial_sets, run_experiment)

__all__ = [
    "Ball", "Box", "Ellipsoid", "Interval", "SourceSet",
    "NoiseModel", "Scenario", "Sensor", "SourceState",
    "IterationTrace", "SolverConfig", "run_alg1", "run_alg2", "run_alg3",
    "PointEstimate", "nls_estimate",
    "ExperimentSpec", "ResultRow", "load_scenario", "random_initial_sets",
    "run_experiment",
]

__version__ = "1.0.0"
