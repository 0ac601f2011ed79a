"""Shared fixtures: deterministic RNG and small reference scenarios."""

import numpy as np
import pytest

from setloc.geometry import Ellipsoid, Interval, SourceSet
from setloc.model import NoiseModel, Scenario, Sensor, SourceState


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def quad_scenario():
    """One-source scenario with four well-separated sensors, tiny noise."""
    sensors = tuple(Sensor(p) for p in ([-15.0, 0.0], [15.0, 5.0],
                                        [0.0, -12.0], [5.0, 18.0]))
    noise = NoiseModel("truncated_gaussian_mixture", np.full(4, 0.02))
    return Scenario(sensors, 2, 2.0, noise,
                    true_sources=(SourceState(50.0, [1.0, 2.0]),))


@pytest.fixture
def quad_initial():
    """Initial bound containing the quad_scenario truth with margin."""
    return SourceSet(Interval(40.0, 70.0),
                     Ellipsoid([2.0, 1.0], 9.0 * np.eye(2)))


@pytest.fixture
def grid_scenario():
    """Two-source reference scenario on the 3x3 sensor grid."""
    from setloc import harness
    return harness.load_scenario("scenarios/two_source_grid.yaml")


def make_scenario(sensor_positions, b, sources, decay=2.0, gain=1.0):
    sensors = tuple(Sensor(p, gain) for p in sensor_positions)
    noise = NoiseModel("truncated_gaussian_mixture",
                       np.full(len(sensors), float(b)))
    return Scenario(sensors, len(sources[0].position), decay, noise,
                    true_sources=tuple(sources))
