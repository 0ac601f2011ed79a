"""Brute-force validation oracles.

Everything here deliberately avoids the closed-form candidate formulas and
assembled matrices it is used to validate: extremes come from dense grids
plus a bounded local polish, derivatives from central differences, moments
from numerical quadrature. Slow and simple on purpose.
"""

import numpy as np
from scipy import integrate, stats
from scipy.optimize import minimize

from .remainder import h_function


def _polish(fun, k0, t0, dk, dt, k_bounds, t_bounds):
    bounds = [(max(k_bounds[0], k0 - dk), min(k_bounds[1], k0 + dk)),
              (max(t_bounds[0], t0 - dt), min(t_bounds[1], t0 + dt))]
    res = minimize(fun, np.array([k0, t0]), bounds=bounds, method="L-BFGS-B")
    return float(res.fun)


def grid_remainder_extremes(s_hat, S, R, tau, alpha, gain=1.0, n=400,
                            polish=True, exclude_radial=None):
    """Extremes of the per-source remainder over an interval x ball domain.

    Evaluates the polar remainder form on an n x n grid over the cosine
    k in [-1, 1] and the radial offset t in [0, R], at both energy interval
    endpoints, then locally refines the best grid cell. The expansion point
    itself (value 0) is always a candidate.

    Parameters
    ----------
    exclude_radial : (center, half_width), optional
        Radial band to drop, used when the sensor sits inside the ball and
        the remainder diverges on the shell t = tau.

    Returns
    -------
    (lo, hi) : floats, already scaled by the sensor gain.
    """
    ks = np.linspace(-1.0, 1.0, n)
    ts = np.linspace(0.0, R, n)
    t_keep = np.ones(n, dtype=bool)
    if exclude_radial is not None:
        c, h = exclude_radial
        t_keep = np.abs(ts - c) > h
    if not t_keep.any():
        raise ValueError("radial exclusion removed the whole grid")
    kk, tt = np.meshgrid(ks, ts[t_keep], indexing="ij")
    kept_ts = ts[t_keep]
    dk = ks[1] - ks[0] if n > 1 else 1.0
    dt = ts[1] - ts[0] if n > 1 else R

    lo, hi = 0.0, 0.0
    for ds in (-S, S):
        vals = h_function(kk, ds, tt, s_hat, tau, alpha)
        finite = np.isfinite(vals)
        if not finite.any():
            continue
        for sign in (1.0, -1.0):
            masked = np.where(finite, sign * vals, np.inf)
            idx = np.unravel_index(np.argmin(masked), masked.shape)
            k0, t0 = ks[idx[0]], kept_ts[idx[1]]
            best = float(vals[idx])
            if polish:
                if exclude_radial is not None:
                    c, h = exclude_radial
                    if t0 < c:
                        t_bounds = (0.0, min(R, c - h))
                    else:
                        t_bounds = (max(0.0, c + h), R)
                else:
                    t_bounds = (0.0, R)
                f = lambda z: sign * float(h_function(z[0], ds, z[1], s_hat, tau, alpha))
                refined = sign * _polish(f, k0, t0, dk, dt, (-1.0, 1.0), t_bounds)
                best = min(best, refined) if sign > 0 else max(best, refined)
            lo = min(lo, best)
            hi = max(hi, best)
    return gain * lo, gain * hi


def random_outside_instance(rng):
    """Random remainder-bound instance with the sensor outside the ball.

    Scales are chosen so the remainder extremes stay O(1)-O(10), where the
    grid-plus-polish oracle resolves them to well under 1e-6 absolute.
    """
    from .geometry import Ball
    from .model import Sensor

    d = 2
    alpha = rng.uniform(2.0, 4.0)
    s_hat = rng.uniform(5.0, 50.0)
    s_half = rng.uniform(0.05, 0.6) * s_hat
    tau = rng.uniform(5.0, 40.0)
    radius = rng.uniform(0.1, 0.8) * tau
    gain = rng.uniform(0.5, 2.0)
    center = rng.uniform(-20.0, 20.0, d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    sensor = Sensor(center + tau * direction, gain)
    return {"s_hat": s_hat, "S": s_half, "ball": Ball(center, radius),
            "sensor": sensor, "tau": tau, "alpha": alpha}


def random_inside_instance(rng):
    """Random instance with the sensor inside the ball.

    The center distance stays in [0.75, 0.98] of the radius and the energy
    half-width at most half the center, the regime where the closed-form
    lower bound is exact rather than merely valid.
    """
    from .geometry import Ball
    from .model import Sensor

    d = 2
    alpha = rng.uniform(2.0, 4.0)
    s_hat = rng.uniform(5.0, 50.0)
    s_half = rng.uniform(0.05, 0.5) * s_hat
    radius = rng.uniform(5.0, 30.0)
    tau = rng.uniform(0.75, 0.98) * radius
    gain = rng.uniform(0.5, 2.0)
    center = rng.uniform(-20.0, 20.0, d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    sensor = Sensor(center + tau * direction, gain)
    return {"s_hat": s_hat, "S": s_half, "ball": Ball(center, radius),
            "sensor": sensor, "tau": tau, "alpha": alpha}


def fd_jacobian(states, scenario, alpha, rel_step=1e-5):
    """Central-difference Jacobian of the measurement map."""
    from .model import measure, state_vector, states_from_vector

    x0 = state_vector(states)
    d = scenario.dimension
    jac = np.zeros((scenario.num_sensors, x0.size))
    for i in range(x0.size):
        step = rel_step * max(1.0, abs(x0[i]))
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += step
        xm[i] -= step
        fp = measure(states_from_vector(xp, d), scenario, alpha)
        fm = measure(states_from_vector(xm, d), scenario, alpha)
        jac[:, i] = (fp - fm) / (2.0 * step)
    return jac


def truncated_mixture_conditional_stats(b):
    """Mean and variance of the positive half of the edge-centered mixture.

    The noise law is an equal-weight pair of Gaussians at +-b/2 with
    sigma = b/6, truncated to [-b/2, b/2]. Computed by direct quadrature of
    the exact density, conditioned on v > 0.
    """
    sigma = b / 6.0

    def dens(v):
        return 0.5 * (stats.norm.pdf(v, b / 2.0, sigma)
                      + stats.norm.pdf(v, -b / 2.0, sigma))

    z, _ = integrate.quad(dens, 0.0, b / 2.0)
    m1, _ = integrate.quad(lambda v: v * dens(v), 0.0, b / 2.0)
    m2, _ = integrate.quad(lambda v: v * v * dens(v), 0.0, b / 2.0)
    mean = m1 / z
    var = m2 / z - mean ** 2
    return mean, var


def sample_source_set(source_set, count, rng):
    """Uniform-ish interior samples of an interval x ellipsoid set.

    Energies are uniform on the interval; positions map the unit ball
    through the shape factor. Good enough for containment oracles.
    """
    from .geometry import cholesky

    d = source_set.position.dim
    s = rng.uniform(source_set.energy.lo, source_set.energy.hi, size=count)
    dirs = rng.standard_normal((count, d))
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0] = 1.0
    radii = rng.random(count) ** (1.0 / d)
    pts = (dirs / norms[:, None]) * radii[:, None]
    factor = cholesky(source_set.position.shape)
    rho = source_set.position.center + pts @ factor.T
    return s, rho


def feasible_grid(source_set, n):
    """Grid over the bounding box of an interval x ellipsoid set.

    Returns (s values, position grid points, membership mask for the
    ellipsoid part). n points per axis, so n^(d+1) combinations overall.
    """
    from . import geometry

    e = source_set.position
    lam, vec = np.linalg.eigh(e.shape)
    half = np.sqrt(np.clip(lam, 0.0, None))
    # axis-aligned hull of the ellipsoid
    extents = np.sqrt(np.clip(np.diag(e.shape), 0.0, None))
    axes = [np.linspace(e.center[i] - extents[i], e.center[i] + extents[i], n)
            for i in range(e.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = np.array([geometry.contains(e, p) for p in pts])
    s_vals = np.linspace(source_set.energy.lo, source_set.energy.hi, n)
    return s_vals, pts, inside
