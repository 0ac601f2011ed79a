"""Linearization-error boxes: closed forms, sampling, and aggregation."""

import numpy as np
import pytest

from setloc import oracles
from setloc.geometry import Ball, Ellipsoid, Interval, SourceSet
from setloc.model import Sensor, SourceState
from setloc.remainder import (RemainderBox, aggregate, bound_analytic,
                              bound_analytic_inside, bound_by_sampling,
                              source_remainder)

# dense-grid extremes for the pinned instance (s=6000, S=100, R=5, tau=20,
# alpha=2, unit gain), frozen from oracles.grid_remainder_extremes
PINNED_LO = -0.938550438712966
PINNED_HI = 4.361111111111111


class TestAnalytic:
    def test_pinned_instance(self):
        iv = bound_analytic(6000.0, 100.0, Ball([0.0, 0.0], 5.0),
                            Sensor([20.0, 0.0]), 2.0)
        assert iv.lo == pytest.approx(PINNED_LO, abs=1e-6)
        assert iv.hi == pytest.approx(PINNED_HI, abs=1e-6)

    def test_zero_size_bound(self):
        iv = bound_analytic(6000.0, 0.0, Ball([0.0, 0.0], 0.0),
                            Sensor([20.0, 0.0]), 2.0)
        assert iv.lo == 0.0 and iv.hi == 0.0

    def test_matches_grid_oracle_random(self, rng):
        for _ in range(15):
            inst = oracles.random_outside_instance(rng)
            iv = bound_analytic(inst["s_hat"], inst["S"], inst["ball"],
                                inst["sensor"], inst["alpha"])
            lo, hi = oracles.grid_remainder_extremes(
                inst["s_hat"], inst["S"], inst["ball"].radius, inst["tau"],
                inst["alpha"], gain=inst["sensor"].gain)
            assert iv.lo == pytest.approx(lo, abs=1e-6)
            assert iv.hi == pytest.approx(hi, abs=1e-6)

    def test_brackets_random_evaluations(self, rng):
        inst = oracles.random_outside_instance(rng)
        iv = bound_analytic(inst["s_hat"], inst["S"], inst["ball"],
                            inst["sensor"], inst["alpha"])
        ball, sensor = inst["ball"], inst["sensor"]
        x_hat = SourceState(inst["s_hat"], ball.center)
        for _ in range(2000):
            u = rng.standard_normal(2)
            u *= rng.uniform(0, ball.radius) / np.linalg.norm(u)
            s = inst["s_hat"] + rng.uniform(-inst["S"], inst["S"])
            val = source_remainder(np.array([s]), (ball.center + u)[None, :],
                                   x_hat.energy, x_hat.position, sensor,
                                   inst["alpha"])[0]
            assert iv.lo - 1e-9 <= val <= iv.hi + 1e-9

    def test_sensor_inside_rejected(self):
        with pytest.raises(ValueError):
            bound_analytic(10.0, 1.0, Ball([0.0, 0.0], 5.0),
                           Sensor([1.0, 0.0]), 2.0)

    def test_contains_zero(self, rng):
        for _ in range(10):
            inst = oracles.random_outside_instance(rng)
            iv = bound_analytic(inst["s_hat"], inst["S"], inst["ball"],
                                inst["sensor"], inst["alpha"])
            assert iv.lo <= 0.0 <= iv.hi

    def test_monotone_in_radius_and_energy_width(self, rng):
        for _ in range(10):
            inst = oracles.random_outside_instance(rng)
            big = bound_analytic(inst["s_hat"], inst["S"], inst["ball"],
                                 inst["sensor"], inst["alpha"])
            shrunk_ball = Ball(inst["ball"].center, 0.5 * inst["ball"].radius)
            small = bound_analytic(inst["s_hat"], 0.5 * inst["S"], shrunk_ball,
                                   inst["sensor"], inst["alpha"])
            assert small.lo >= big.lo - 1e-12
            assert small.hi <= big.hi + 1e-12


class TestAnalyticInside:
    def test_upper_always_infinite(self, rng):
        for _ in range(5):
            inst = oracles.random_inside_instance(rng)
            iv = bound_analytic_inside(inst["s_hat"], inst["S"], inst["ball"],
                                       inst["sensor"], inst["alpha"])
            assert iv.hi == np.inf
            assert iv.lo <= 0.0

    def test_lower_matches_restricted_oracle(self, rng):
        for _ in range(8):
            inst = oracles.random_inside_instance(rng)
            iv = bound_analytic_inside(inst["s_hat"], inst["S"], inst["ball"],
                                       inst["sensor"], inst["alpha"])
            lo, _ = oracles.grid_remainder_extremes(
                inst["s_hat"], inst["S"], inst["ball"].radius, inst["tau"],
                inst["alpha"], gain=inst["sensor"].gain)
            assert iv.lo == pytest.approx(lo, abs=1e-5)


class TestSampling:
    def test_degenerate_set_gives_zero_box(self):
        src = SourceSet(Interval(50.0, 50.0),
                        Ellipsoid([0.0, 0.0], np.zeros((2, 2))))
        box = bound_by_sampling(src, SourceState(50.0, [0.0, 0.0]),
                                [Sensor([20.0, 0.0])], 2.0)
        assert box.lo[0] == 0.0 and box.hi[0] == 0.0

    def test_interior_containment(self, rng):
        src = SourceSet(Interval(40.0, 60.0),
                        Ellipsoid([0.0, 0.0], np.diag([9.0, 4.0])))
        sensors = [Sensor([20.0, 0.0]), Sensor([0.0, -15.0])]
        x_hat = SourceState(50.0, [0.0, 0.0])
        box = bound_by_sampling(src, x_hat, sensors, 2.0, rng=rng)
        s, rho = oracles.sample_source_set(src, 1000, rng)
        for l, sensor in enumerate(sensors):
            vals = source_remainder(s, rho, 50.0, x_hat.position, sensor, 2.0)
            assert np.all(vals >= box.lo[l] - 1e-9)
            assert np.all(vals <= box.hi[l] + 1e-9)

    def test_ball_input_within_five_percent_of_analytic(self, rng):
        # matched domains: the analytic bound sees the same inflated ball
        # whose boundary the sampler draws from
        inflation = 1.1
        src = SourceSet(Interval(5900.0, 6100.0),
                        Ellipsoid([0.0, 0.0], 25.0 * np.eye(2)))
        sensor = Sensor([20.0, 0.0])
        box = bound_by_sampling(src, SourceState(6000.0, [0.0, 0.0]),
                                [sensor], 2.0, count=4000,
                                inflation=inflation, rng=rng)
        iv = bound_analytic(6000.0, inflation * 100.0,
                            Ball([0.0, 0.0], inflation * 5.0), sensor, 2.0)
        assert box.hi[0] <= iv.hi + 1e-9
        assert box.lo[0] >= iv.lo - 1e-9
        assert box.hi[0] == pytest.approx(iv.hi, rel=0.05)
        assert box.lo[0] == pytest.approx(iv.lo, rel=0.05)

    def test_sensor_inside_inflated_set_infinite(self, rng):
        src = SourceSet(Interval(40.0, 60.0),
                        Ellipsoid([0.0, 0.0], 25.0 * np.eye(2)))
        box = bound_by_sampling(src, SourceState(50.0, [0.0, 0.0]),
                                [Sensor([1.0, 0.0])], 2.0, rng=rng)
        assert box.hi[0] == np.inf

    def test_contains_zero(self, rng):
        src = SourceSet(Interval(40.0, 60.0),
                        Ellipsoid([0.0, 0.0], np.diag([9.0, 1.0])))
        box = bound_by_sampling(src, SourceState(41.0, [1.0, 0.0]),
                                [Sensor([20.0, 0.0])], 2.0, rng=rng)
        assert box.lo[0] <= 0.0 <= box.hi[0]


class TestAggregate:
    def test_single_source_identity(self):
        box = RemainderBox([-1.0, -2.0], [1.0, 2.0])
        total, part = aggregate([box], 2)
        assert np.allclose(total.lo, box.lo) and np.allclose(total.hi, box.hi)
        assert part.finite == (0, 1) and part.infinite == ()

    def test_two_finite_boxes_sum(self):
        a = RemainderBox([-1.0], [2.0])
        b = RemainderBox([-0.5], [0.5])
        total, _ = aggregate([a, b], 1)
        assert total.lo[0] == -1.5 and total.hi[0] == 2.5

    def test_infinity_partition(self):
        a = RemainderBox([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0])
        b = RemainderBox([-1.0, -1.0, -1.0], [1.0, np.inf, 1.0])
        total, part = aggregate([a, b], 3)
        assert part.infinite == (1,)
        assert part.finite == (0, 2)
        assert total.hi[1] == np.inf
