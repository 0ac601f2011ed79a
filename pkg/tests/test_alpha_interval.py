"""Decay-interval machinery: distance extremes, contribution bounds, updates."""

import numpy as np
import pytest

from setloc import geometry, model
from setloc.alpha_interval import (apply_update_alpha, build_rho_update_alpha,
                                   build_s_update_alpha, distance_extremes,
                                   energy_intervals, f_interval)
from setloc.geometry import Ellipsoid, Interval, SourceSet
from setloc.model import SourceState
from setloc.update import IterationState


def boundary_points(ellipsoid, count=720):
    """Dense boundary sample of a 2-d ellipsoid."""
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return ellipsoid.center + circle @ geometry.cholesky(ellipsoid.shape).T


class TestDistanceExtremes:
    def test_sphere_exact(self):
        e = Ellipsoid([0.0, 0.0], 4.0 * np.eye(2))
        lo, hi = distance_extremes(e, [10.0, 0.0])
        assert lo == pytest.approx(8.0, abs=1e-5)
        assert hi == pytest.approx(12.0, abs=1e-5)

    def test_major_axis_point(self):
        e = Ellipsoid([0.0, 0.0], np.diag([9.0, 1.0]))
        lo, hi = distance_extremes(e, [10.0, 0.0])
        assert lo == pytest.approx(7.0, abs=1e-5)
        assert hi == pytest.approx(13.0, abs=1e-5)

    def test_point_inside_gives_zero_lower(self):
        e = Ellipsoid([0.0, 0.0], np.diag([9.0, 4.0]))
        lo, hi = distance_extremes(e, [1.0, 0.0])
        assert lo == 0.0
        assert hi == pytest.approx(4.0, abs=1e-5)

    def test_degenerate_point_set(self):
        e = Ellipsoid([3.0, 4.0], np.zeros((2, 2)))
        lo, hi = distance_extremes(e, [0.0, 0.0])
        assert lo == pytest.approx(5.0) and hi == pytest.approx(5.0)

    def test_brackets_and_attained_random(self, rng):
        for _ in range(8):
            m = rng.standard_normal((2, 2))
            e = Ellipsoid(rng.uniform(-5, 5, 2), m @ m.T + 0.5 * np.eye(2))
            p = rng.uniform(-30, 30, 2)
            lo, hi = distance_extremes(e, p)
            dists = np.linalg.norm(boundary_points(e) - p, axis=1)
            # 1e-6 slack: the extremes carry cone-solver rounding of ~1e-8
            if not geometry.contains(e, p):
                assert lo <= dists.min() + 1e-6
                assert dists.min() <= lo + 1e-3
            assert dists.max() <= hi + 1e-6
            assert hi <= dists.max() + 1e-3


class TestFInterval:
    def test_fixed_exponent_closed_form(self):
        e = Ellipsoid([0.0, 0.0], 4.0 * np.eye(2))
        iv = f_interval(Interval(40.0, 60.0), e, [10.0, 0.0], 1.0, (2.0, 2.0))
        assert iv.lo == pytest.approx(40.0 / 12.0 ** 2, abs=1e-5)
        assert iv.hi == pytest.approx(60.0 / 8.0 ** 2, abs=1e-5)

    def test_contains_all_samples(self, rng):
        e = Ellipsoid([2.0, -1.0], np.diag([9.0, 4.0]))
        energy = Interval(4000.0, 7000.0)
        sensor, gain, alphas = np.array([20.0, 5.0]), 1.5, (2.8, 3.2)
        iv = f_interval(energy, e, sensor, gain, alphas)
        from setloc import oracles
        src = SourceSet(energy, e)
        s, rho = oracles.sample_source_set(src, 1500, rng)
        alpha = rng.uniform(alphas[0], alphas[1], 1500)
        dist = np.linalg.norm(rho - sensor, axis=1)
        vals = gain * s / dist ** alpha
        assert np.all(vals >= iv.lo - 1e-9)
        assert np.all(vals <= iv.hi + 1e-9)

    def test_sensor_reachable_upper_infinite(self):
        e = Ellipsoid([0.0, 0.0], 25.0 * np.eye(2))
        iv = f_interval(Interval(10.0, 20.0), e, [1.0, 0.0], 1.0, (2.0, 3.0))
        assert iv.hi == np.inf
        assert iv.lo >= 0.0

    def test_negative_energy_clamped(self):
        e = Ellipsoid([0.0, 0.0], np.eye(2))
        iv = f_interval(Interval(-5.0, 10.0), e, [10.0, 0.0], 1.0, (2.0, 3.0))
        assert iv.lo == 0.0

    def test_subunit_distances_flip_binding_exponent(self):
        # below unit distance the larger exponent maximizes the contribution
        e = Ellipsoid([0.0, 0.0], 0.01 * np.eye(2))
        iv = f_interval(Interval(10.0, 10.0), e, [0.5, 0.0], 1.0, (2.0, 4.0))
        assert iv.hi == pytest.approx(10.0 / 0.4 ** 4, abs=1e-3)
        assert iv.lo == pytest.approx(10.0 / 0.6 ** 2, abs=1e-3)


class TestEnergyIntervals:
    def test_table_matches_entrywise(self, grid_scenario):
        sources = [SourceSet(Interval(5000.0, 7000.0),
                             Ellipsoid(t.position, 9.0 * np.eye(2)))
                   for t in grid_scenario.true_sources]
        state = IterationState(sources)
        table = energy_intervals(state, grid_scenario)
        alphas = (grid_scenario.decay, grid_scenario.decay)
        assert table.lo.shape == (2, grid_scenario.num_sensors)
        for n, src in enumerate(state.sources):
            for l, sensor in enumerate(grid_scenario.sensors):
                iv = f_interval(src.energy, src.position, sensor.position,
                                sensor.gain, alphas)
                assert table.lo[n, l] == iv.lo
                assert table.hi[n, l] == iv.hi


class TestAlphaUpdates:
    @pytest.fixture
    def alpha_setup(self, rng):
        from setloc import harness
        scenario = harness.load_scenario("scenarios/two_source_alpha.yaml")
        truths = list(scenario.true_sources)
        y = (model.measure(truths, scenario, scenario.effective_decay())
             + model.sample_noise(scenario.noise, rng))
        sources = [SourceSet(Interval(t.energy - 500.0, t.energy + 500.0),
                             Ellipsoid(t.position, 16.0 * np.eye(2)))
                   for t in truths]
        return scenario, y, truths, IterationState(sources)

    def test_rho_update_keeps_truth(self, alpha_setup):
        scenario, y, truths, state = alpha_setup
        intervals = energy_intervals(state, scenario)
        for n in range(2):
            prob = build_rho_update_alpha(state, y, intervals,
                                          scenario.noise_box, n, scenario)
            new_pos, event = apply_update_alpha(prob,
                                                state.sources[n].position)
            assert event in (None, "projected")
            assert geometry.contains(new_pos, truths[n].position, tol=1e-6)

    def test_s_update_keeps_truth_and_never_grows(self, alpha_setup):
        scenario, y, truths, state = alpha_setup
        intervals = energy_intervals(state, scenario)
        for n in range(2):
            prob = build_s_update_alpha(state, y, intervals,
                                        scenario.noise_box, n, scenario)
            new_energy, event = apply_update_alpha(prob,
                                                   state.sources[n].energy)
            assert event in (None, "projected", "clamped")
            assert new_energy.contains(truths[n].energy)
            old = state.sources[n].energy
            assert new_energy.lo >= old.lo - 1e-9
            assert new_energy.hi <= old.hi + 1e-9

    def test_failed_solve_returns_previous(self, monkeypatch, alpha_setup):
        import setloc.alpha_interval as ai
        scenario, y, truths, state = alpha_setup
        intervals = energy_intervals(state, scenario)
        prob = build_rho_update_alpha(state, y, intervals, scenario.noise_box,
                                      0, scenario)

        class Stub:
            status = "numerical_failure"

        monkeypatch.setattr(ai.conic, "solve", lambda _: Stub())
        prev = state.sources[0].position
        out, event = apply_update_alpha(prob, prev)
        assert out is prev and event == "numerical_failure"
