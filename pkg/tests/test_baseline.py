"""Point-estimate least squares: recovery, fixed points, stopping behavior."""

import numpy as np
import pytest

from setloc import baseline, model
from setloc.baseline import nls_estimate
from setloc.model import SourceState


class TestRecovery:
    def test_noiseless_truth_is_fixed_point(self, quad_scenario):
        truth = list(quad_scenario.true_sources)
        y = model.measure(truth, quad_scenario, 2.0)
        est = nls_estimate(quad_scenario, y, truth)
        assert est.cost <= 1e-10
        assert not est.diverged
        assert est.states[0].energy == pytest.approx(truth[0].energy,
                                                     abs=1e-8)
        assert np.allclose(est.states[0].position, truth[0].position,
                           atol=1e-8)

    def test_recovers_from_offset_start(self, quad_scenario):
        truth = list(quad_scenario.true_sources)
        y = model.measure(truth, quad_scenario, 2.0)
        start = [SourceState(truth[0].energy + 8.0,
                             truth[0].position + np.array([2.0, -1.5]))]
        est = nls_estimate(quad_scenario, y, start)
        assert not est.diverged
        assert np.linalg.norm(est.states[0].position - truth[0].position) < 1e-4
        assert abs(est.states[0].energy - truth[0].energy) < 1e-3

    def test_two_sources(self, grid_scenario, rng):
        truth = list(grid_scenario.true_sources)
        y = (model.measure(truth, grid_scenario, 2.0)
             + model.sample_noise(grid_scenario.noise, rng))
        start = [SourceState(t.energy * 0.9, t.position + 1.5) for t in truth]
        est = nls_estimate(grid_scenario, y, start)
        assert not est.diverged
        # wide noise box (b = 4) leaves a residual offset of a few meters
        for s, t in zip(est.states, truth):
            assert np.linalg.norm(s.position - t.position) < 6.0


class TestStopping:
    def test_plateau_stops_well_before_cap(self, rng):
        from tests.conftest import make_scenario
        positions = model.grid_sensor_positions(9)
        truths = [SourceState(6000.0, [-20.0, 0.0]),
                  SourceState(6500.0, [20.0, 32.0]),
                  SourceState(6800.0, [20.0, -20.0])]
        scenario = make_scenario(positions, 1.0, truths)
        y = (model.measure(truths, scenario, 2.0)
             + model.sample_noise(scenario.noise, rng))
        start = [SourceState(t.energy + 300.0, t.position + 3.0)
                 for t in truths]
        est = nls_estimate(scenario, y, start)
        assert est.iterations < baseline.MAX_ITERATIONS

    def test_divergence_flagged_far_from_data(self, quad_scenario):
        truth = list(quad_scenario.true_sources)
        y = model.measure(truth, quad_scenario, 2.0)
        # a start this bad keeps every damped step from improving the cost
        start = [SourceState(1e9, [1e6, 1e6])]
        est = nls_estimate(quad_scenario, y, start)
        assert est.diverged or est.cost > 1.0

    def test_iterations_counted(self, quad_scenario):
        truth = list(quad_scenario.true_sources)
        y = model.measure(truth, quad_scenario, 2.0)
        est = nls_estimate(quad_scenario, y, truth)
        assert est.iterations <= 2
