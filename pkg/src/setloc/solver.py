"""Alternating per-source refinement drivers and iteration tracing.

All three drivers share one loop: linearize at the current centers, shrink
each source's position and energy sets in turn through the conic updates,
refresh that source's linearization-error bounds, and stop once the total
set size decreases by less than a threshold. They differ only in how the
linearization error is bounded (boundary sampling, closed form on an
enclosing ball, or interval bounds robust to the decay exponent).
"""

import numpy as np

from . import alpha_interval, geometry, remainder, update
from .model import SingularityError, SourceState
from .remainder import DEFAULT_INFLATION
from .update import IterationState

COLLAPSE_TOL = 1e-12

# events that mean an update or refresh was rejected and the previous
# set kept; "projected" and "clamped" adopt the solution after repair
FALLBACK_EVENTS = ("degenerate", "infeasible", "numerical_failure",
                   "empty_intersection", "refresh_failed")


class SolverConfig:
    """Driver settings; defaults match the reference experiments."""

    __slots__ = ("algorithm", "delta", "max_iterations", "sample_count",
                 "inflation", "seed")

    def __init__(self, algorithm="alg1", delta=1e-2, max_iterations=50,
                 sample_count=None, inflation=DEFAULT_INFLATION, seed=0):
        if algorithm not in ("alg1", "alg2", "alg3"):
            raise ValueError("unknown algorithm %r" % (algorithm,))
        if not delta > 0:
            raise ValueError("termination threshold must be positive")
        if int(max_iterations) < 1:
            raise ValueError("need at least one outer iteration")
        object.__setattr__(self, "algorithm", algorithm)
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "max_iterations", int(max_iterations))
        object.__setattr__(self, "sample_count", sample_count)
        object.__setattr__(self, "inflation", float(inflation))
        object.__setattr__(self, "seed", seed)

    def __setattr__(self, *_):
        raise AttributeError("SolverConfig is immutable")


class IterationTrace:
    """Per-iteration record: set size, set parameters, errors, events.

    Row 0 is the initial state; one row is appended per completed outer
    iteration.
    """

    def __init__(self):
        self.g_values = []
        self.sources = []
        self.position_errors = []
        self.energy_errors = []
        self.events = []

    def record(self, sources, events, truth=None):
        self.g_values.append(g_value(sources))
        self.sources.append(tuple(sources))
        self.events.append(tuple(events))
        if truth is not None:
            self.position_errors.append(np.array(
                [float(np.linalg.norm(s.position.center - t.position))
                 for s, t in zip(sources, truth)]))
            self.energy_errors.append(np.array(
                [abs(s.energy.center - t.energy)
                 for s, t in zip(sources, truth)]))

    @property
    def num_iterations(self):
        return len(self.g_values) - 1

    @property
    def fallback_count(self):
        total = 0
        for evs in self.events:
            total += sum(1 for e in evs
                         if any(e.endswith(f) for f in FALLBACK_EVENTS))
        return total

    def mean_position_errors(self):
        return np.array([e.mean() for e in self.position_errors])


def g_value(sources):
    """Total set size: position shape traces plus squared energy half-widths."""
    total = 0.0
    for s in sources:
        total += float(np.trace(s.position.shape)) + s.energy.half_width ** 2
    return total


def _frozen(source_set):
    lam_max = float(np.linalg.eigvalsh(source_set.position.shape)[-1])
    return lam_max < COLLAPSE_TOL


def _center_state(source_set):
    return SourceState(max(source_set.energy.center, 0.0),
                       source_set.position.center)


def _analytic_box(scenario, alpha, source_set):
    ball = geometry.enclosing_ball(source_set.position)
    s_hat = max(source_set.energy.center, 0.0)
    if s_hat <= 0.0:
        raise SingularityError("nonpositive energy center")
    half = source_set.energy.half_width
    lo = np.zeros(scenario.num_sensors)
    hi = np.zeros(scenario.num_sensors)
    for l, sensor in enumerate(scenario.sensors):
        tau = float(np.linalg.norm(ball.center - sensor.position))
        if tau > ball.radius:
            iv = remainder.bound_analytic(s_hat, half, ball, sensor, alpha)
        else:
            iv = remainder.bound_analytic_inside(s_hat, half, ball,
                                                 sensor, alpha)
        lo[l], hi[l] = iv.lo, iv.hi
    return remainder.RemainderBox(lo, hi)


def _sampling_refresh(scenario, alpha, config, rng):
    # the sampled box is intersected with the closed-form ball box, which
    # holds over a superset of the position set: the result is never looser
    # than the analytic path and tighter whenever the set is anisotropic
    def refresh(source_set):
        box = remainder.bound_by_sampling(
            source_set, _center_state(source_set), scenario.sensors, alpha,
            count=config.sample_count, inflation=config.inflation, rng=rng)
        try:
            ana = _analytic_box(scenario, alpha, source_set)
        except SingularityError:
            return box
        return remainder.RemainderBox(np.maximum(box.lo, ana.lo),
                                      np.minimum(box.hi, ana.hi))
    return refresh


def _analytic_refresh(scenario, alpha):
    def refresh(source_set):
        return _analytic_box(scenario, alpha, source_set)
    return refresh


def _run_fixed_alpha(scenario, y, initial_sets, config, truth, refresh):
    """Common loop for the two fixed-exponent drivers."""
    alpha = scenario.effective_decay()
    y = np.asarray(y, dtype=float)
    state = IterationState(initial_sets, 0)
    boxes = [refresh(s) for s in state.sources]
    trace = IterationTrace()
    trace.record(state.sources, (), truth)

    for it in range(config.max_iterations):
        g_prev = g_value(state.sources)
        events = []
        for n in range(state.num_sources):
            if _frozen(state.sources[n]):
                continue
            inputs = update.make_update_inputs(state, y, scenario, alpha,
                                               boxes)
            new_set, evs = update.update_source(state, inputs, n)
            events.extend("%d/%s" % (n, e) for e in evs)
            try:
                new_box = refresh(new_set)
            except SingularityError:
                events.append("%d/refresh_failed" % n)
                continue
            state = state.replace(n, new_set, index=it + 1)
            boxes[n] = new_box
        trace.record(state.sources, events, truth)
        if g_prev - g_value(state.sources) <= config.delta:
            break
    return state.sources, trace


def run_alg1(scenario, y, initial_sets, config=None, truth=None):
    """Refinement with sampling-based linearization-error bounds.

    Slower than run_alg2 but never looser: the sampled bounds respect the
    exact shape of each position set instead of an enclosing ball.

    Parameters
    ----------
    scenario : Scenario
        Must carry a fixed (scalar) decay exponent.
    y : array_like
        One energy reading per sensor.
    initial_sets : sequence of SourceSet
        Must contain the true state for the guarantees to hold.
    config : SolverConfig, optional
    truth : sequence of SourceState, optional
        Enables per-iteration error tracking.

    Returns
    -------
    (tuple of SourceSet, IterationTrace)
    """
    config = config or SolverConfig("alg1")
    if scenario.decay_is_interval:
        raise ValueError("fixed-exponent driver given an exponent interval")
    rng = np.random.default_rng(config.seed)
    refresh = _sampling_refresh(scenario, scenario.effective_decay(), config,
                                rng)
    return _run_fixed_alpha(scenario, y, initial_sets, config, truth, refresh)


def run_alg2(scenario, y, initial_sets, config=None, truth=None):
    """Refinement with closed-form error bounds on an enclosing ball.

    Cheaper than run_alg1 and never tighter; same interface.
    """
    config = config or SolverConfig("alg2")
    if scenario.decay_is_interval:
        raise ValueError("fixed-exponent driver given an exponent interval")
    refresh = _analytic_refresh(scenario, scenario.effective_decay())
    return _run_fixed_alpha(scenario, y, initial_sets, config, truth, refresh)


def run_alg3(scenario, y, initial_sets, config=None, truth=None):
    """Refinement when the decay exponent is only known to an interval.

    Contribution intervals for all source-sensor pairs are recomputed once
    per sweep, then each source's position and lifted energy are updated in
    turn. Same interface as run_alg1.
    """
    config = config or SolverConfig("alg3")
    y = np.asarray(y, dtype=float)
    noise_box = scenario.noise_box
    state = IterationState(initial_sets, 0)
    trace = IterationTrace()
    trace.record(state.sources, (), truth)

    for it in range(config.max_iterations):
        g_prev = g_value(state.sources)
        events = []
        intervals = alpha_interval.energy_intervals(state, scenario)
        for n in range(state.num_sources):
            if _frozen(state.sources[n]):
                continue
            prob = alpha_interval.build_rho_update_alpha(
                state, y, intervals, noise_box, n, scenario)
            events.extend("%d/dropped%d" % (n, l) for l in prob.meta["dropped"])
            new_pos, ev = alpha_interval.apply_update_alpha(
                prob, state.sources[n].position)
            if ev:
                events.append("%d/rho:%s" % (n, ev))
            state = state.replace(
                n, geometry.SourceSet(state.sources[n].energy, new_pos),
                index=it + 1)
            prob = alpha_interval.build_s_update_alpha(
                state, y, intervals, noise_box, n, scenario)
            new_energy, ev = alpha_interval.apply_update_alpha(
                prob, state.sources[n].energy)
            if ev:
                events.append("%d/s:%s" % (n, ev))
            state = state.replace(
                n, geometry.SourceSet(new_energy, state.sources[n].position),
                index=it + 1)
        trace.record(state.sources, events, truth)
        if g_prev - g_value(state.sources) <= config.delta:
            break
    return state.sources, trace
