"""Point-estimation baseline: damped Gauss-Newton nonlinear least squares.

Provides the probabilistic comparator for the Monte Carlo studies. It
minimizes the squared measurement residual from a given starting state,
halving the step until the cost decreases; energies are clamped at zero
since negative values are outside the model domain.
"""

import itertools

import numpy as np

from .model import (MIN_DISTANCE, jacobian, measure, state_vector,
                    states_from_vector)

STEP_TOL = 1e-8
COST_TOL = 1e-9
MAX_ITERATIONS = 200
MAX_HALVINGS = 30
MAX_FAILED_STEPS = 10


class PointEstimate:
    """Estimated per-source states with fit diagnostics."""

    __slots__ = ("states", "cost", "iterations", "diverged")

    def __init__(self, states, cost, iterations, diverged):
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "cost", float(cost))
        object.__setattr__(self, "iterations", int(iterations))
        object.__setattr__(self, "diverged", bool(diverged))

    def __setattr__(self, *_):
        raise AttributeError("PointEstimate is immutable")

    def squared_errors(self, truth):
        """Mean squared position and energy errors against true states.

        Sources are matched to truth by the permutation minimizing total
        squared center distance.
        """
        n = len(self.states)
        best = None
        for perm in itertools.permutations(range(n)):
            pos = sum(float(np.sum((self.states[i].position
                                    - truth[j].position) ** 2))
                      for i, j in zip(range(n), perm))
            if best is None or pos < best[0]:
                eng = sum((self.states[i].energy - truth[j].energy) ** 2
                          for i, j in zip(range(n), perm))
                best = (pos, eng)
        return best[0] / n, best[1] / n


def _too_close(states, scenario):
    for src in states:
        for sensor in scenario.sensors:
            if np.linalg.norm(src.position - sensor.position) < MIN_DISTANCE:
                return True
    return False


def _clamped_states(x, dimension):
    x = x.copy()
    d = dimension
    for n in range(len(x) // (d + 1)):
        x[n * (d + 1)] = max(x[n * (d + 1)], 0.0)
    return states_from_vector(x, dimension)


def nls_estimate(scenario, y, initial_states, alpha=None):
    """Damped Gauss-Newton fit of all source states to the measurements.

    Parameters
    ----------
    scenario : Scenario
    y : array_like
        One energy reading per sensor.
    initial_states : sequence of SourceState
        Starting point; must not coincide with a sensor.
    alpha : float, optional
        Decay exponent; defaults to the scenario's effective value.

    Returns
    -------
    PointEstimate
        Best iterate found; `diverged` is set when the cost rose for ten
        consecutive damped steps.
    """
    if alpha is None:
        alpha = scenario.effective_decay()
    y = np.asarray(y, dtype=float)
    d = scenario.dimension

    x = state_vector(initial_states)
    states = _clamped_states(x, d)
    if _too_close(states, scenario):
        raise ValueError("initial state coincides with a sensor")
    cost = float(np.sum((measure(states, scenario, alpha) - y) ** 2))
    best_x, best_cost = x.copy(), cost
    failed = 0
    iterations = 0

    for iterations in range(1, MAX_ITERATIONS + 1):
        residual = measure(states, scenario, alpha) - y
        jac = jacobian(states, scenario, alpha)
        step = np.linalg.lstsq(jac, -residual, rcond=None)[0]
        if float(np.linalg.norm(step)) < STEP_TOL:
            break

        accepted = None
        fallback = None
        lam = 1.0
        for _ in range(MAX_HALVINGS):
            cand_x = x + lam * step
            cand_states = _clamped_states(cand_x, d)
            if not _too_close(cand_states, scenario):
                cand_cost = float(np.sum(
                    (measure(cand_states, scenario, alpha) - y) ** 2))
                if fallback is None or cand_cost < fallback[1]:
                    fallback = (cand_x, cand_cost, cand_states, lam)
                if cand_cost < cost:
                    accepted = (cand_x, cand_cost, cand_states, lam)
                    break
            lam *= 0.5

        if accepted is None and fallback is None:
            break  # every damped step lands on a sensor; stationary
        if accepted is None:
            failed += 1
            accepted = fallback
        else:
            failed = 0
        prev_cost = cost
        x, cost, states, lam = accepted
        if cost < best_cost:
            best_x, best_cost = x.copy(), cost
        if failed >= MAX_FAILED_STEPS:
            return PointEstimate(_clamped_states(best_x, d), best_cost,
                                 iterations, True)
        if float(np.linalg.norm(lam * step)) < STEP_TOL:
            break
        if failed == 0 and prev_cost - cost <= COST_TOL * max(1.0, prev_cost):
            break  # cost plateau; further zigzag steps win nothing

    if best_cost < cost:
        return PointEstimate(_clamped_states(best_x, d), best_cost,
                             iterations, False)
    return PointEstimate(states, cost, iterations, False)
