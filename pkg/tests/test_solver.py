"""Outer refinement loops: convergence, guarantees, and mutual consistency."""

import numpy as np
import pytest

from setloc import geometry, model, solver
from setloc.geometry import Ellipsoid, Interval, SourceSet
from setloc.solver import SolverConfig, g_value, run_alg1, run_alg2, run_alg3


def simulate(scenario, rng, alpha=None):
    alpha = scenario.effective_decay() if alpha is None else alpha
    return (model.measure(list(scenario.true_sources), scenario, alpha)
            + model.sample_noise(scenario.noise, rng))


def contains_truth(sources, truths):
    return all(s.energy.contains(t.energy)
               and geometry.contains(s.position, t.position, tol=1e-7)
               for s, t in zip(sources, truths))


class TestRunAlg2:
    def test_single_source_converges(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        sources, trace = run_alg2(quad_scenario, y, [quad_initial],
                                  truth=quad_scenario.true_sources)
        assert trace.num_iterations >= 2
        assert g_value(sources) < 0.2 * trace.g_values[0]
        assert contains_truth(sources, quad_scenario.true_sources)

    def test_g_never_increases(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        _, trace = run_alg2(quad_scenario, y, [quad_initial])
        g = np.array(trace.g_values)
        assert np.all(np.diff(g) <= 1e-6 * np.maximum(1.0, g[:-1]))

    def test_truth_in_every_iteration(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        _, trace = run_alg2(quad_scenario, y, [quad_initial],
                            truth=quad_scenario.true_sources)
        for sources in trace.sources:
            assert contains_truth(sources, quad_scenario.true_sources)

    def test_infinite_delta_stops_after_one_iteration(self, quad_scenario,
                                                      quad_initial, rng):
        y = simulate(quad_scenario, rng)
        config = SolverConfig("alg2", delta=np.inf)
        _, trace = run_alg2(quad_scenario, y, [quad_initial], config)
        assert trace.num_iterations == 1

    def test_max_iterations_respected(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        config = SolverConfig("alg2", delta=1e-12, max_iterations=3)
        _, trace = run_alg2(quad_scenario, y, [quad_initial], config)
        assert trace.num_iterations <= 3

    def test_two_sources_contained(self, grid_scenario, rng):
        y = simulate(grid_scenario, rng)
        initial = [SourceSet(Interval(t.energy - 800.0, t.energy + 800.0),
                             Ellipsoid(t.position, 9.0 * np.eye(2)))
                   for t in grid_scenario.true_sources]
        sources, trace = run_alg2(grid_scenario, y, initial,
                                  truth=grid_scenario.true_sources)
        assert contains_truth(sources, grid_scenario.true_sources)
        assert trace.g_values[-1] <= trace.g_values[0] + 1e-9


class TestRunAlg1:
    def test_converges_and_contains(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        sources, trace = run_alg1(quad_scenario, y, [quad_initial],
                                  truth=quad_scenario.true_sources)
        assert g_value(sources) < 0.2 * trace.g_values[0]
        assert contains_truth(sources, quad_scenario.true_sources)

    def test_never_looser_than_ball_variant(self, quad_scenario, quad_initial,
                                            rng):
        y = simulate(quad_scenario, rng)
        _, t1 = run_alg1(quad_scenario, y, [quad_initial])
        _, t2 = run_alg2(quad_scenario, y, [quad_initial])
        n = min(len(t1.g_values), len(t2.g_values))
        for g1, g2 in zip(t1.g_values[:n], t2.g_values[:n]):
            assert g1 <= g2 + 1e-6 * max(1.0, g2)

    def test_deterministic_given_seed(self, quad_scenario, quad_initial):
        rng = np.random.default_rng(3)
        y = simulate(quad_scenario, rng)
        runs = []
        for _ in range(2):
            sources, trace = run_alg1(quad_scenario, y, [quad_initial],
                                      SolverConfig("alg1", seed=11))
            runs.append((sources, tuple(trace.g_values)))
        (a, ga), (b, gb) = runs
        assert ga == gb
        assert np.array_equal(a[0].position.center, b[0].position.center)
        assert np.array_equal(a[0].position.shape, b[0].position.shape)


class TestRunAlg3:
    def test_refines_under_exponent_interval(self, rng):
        from setloc import harness
        scenario = harness.load_scenario("scenarios/two_source_alpha.yaml")
        y = simulate(scenario, rng)
        initial = [SourceSet(Interval(t.energy - 500.0, t.energy + 500.0),
                             Ellipsoid(t.position, 16.0 * np.eye(2)))
                   for t in scenario.true_sources]
        sources, trace = run_alg3(scenario, y, initial,
                                  truth=scenario.true_sources)
        assert trace.g_values[-1] < trace.g_values[0]
        assert contains_truth(sources, scenario.true_sources)
        g = np.array(trace.g_values)
        assert np.all(np.diff(g) <= 1e-6 * np.maximum(1.0, g[:-1]))


class TestGuards:
    def test_g_value_formula(self, quad_initial):
        expected = np.trace(quad_initial.position.shape) + 15.0 ** 2
        assert g_value([quad_initial]) == pytest.approx(expected)

    def test_frozen_point_set_survives(self, quad_scenario, rng):
        truth = quad_scenario.true_sources[0]
        point = SourceSet(Interval(truth.energy, truth.energy),
                          Ellipsoid(truth.position, np.zeros((2, 2))))
        y = simulate(quad_scenario, rng)
        sources, trace = run_alg2(quad_scenario, y, [point])
        assert sources[0].energy.half_width == 0.0
        assert np.trace(sources[0].position.shape) == 0.0
        assert trace.num_iterations >= 1

    def test_trace_errors_shrink(self, quad_scenario, quad_initial, rng):
        y = simulate(quad_scenario, rng)
        _, trace = run_alg2(quad_scenario, y, [quad_initial],
                            truth=quad_scenario.true_sources)
        errs = trace.mean_position_errors()
        assert errs[-1] < errs[0]
