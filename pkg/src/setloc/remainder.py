"""Outer bounds on the Taylor remainder of the attenuation model.

For one source bounded by an energy interval and a position ellipsoid, the
remainder of the first-order expansion at the set center is bounded per
sensor either by sampling the boundary of a slightly inflated copy of the
set, or in closed form when the position set is relaxed to a ball. Sensors
that fall inside the position set get an infinite upper bound (the source
can approach them arbitrarily closely) and are tracked separately.
"""

import numpy as np

from . import geometry
from .geometry import Ball, Box, Interval
from .model import MIN_DISTANCE, SingularityError

DEFAULT_INFLATION = 1.1


class RemainderBox:
    """Per-sensor intervals [D_l, U_l] containing the remainder; U may be +inf.

    Bounds produced at the expansion point always cover 0, since the
    remainder vanishes there.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be equal-length vectors")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("remainder box must cover 0 in every component")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *_):
        raise AttributeError("RemainderBox is immutable")

    @property
    def num_sensors(self):
        return self.lo.size

    def interval(self, l):
        return Interval(self.lo[l], self.hi[l])

    def as_box(self):
        return Box(self.lo, self.hi)


class SensorPartition:
    """Split of sensor indices into finite-bound and infinite-bound sets."""

    __slots__ = ("finite", "infinite")

    def __init__(self, finite, infinite):
        finite = tuple(sorted(finite))
        infinite = tuple(sorted(infinite))
        if set(finite) & set(infinite):
            raise ValueError("finite and infinite sets overlap")
        object.__setattr__(self, "finite", finite)
        object.__setattr__(self, "infinite", infinite)

    def __setattr__(self, *_):
        raise AttributeError("SensorPartition is immutable")


def source_remainder(s, rho, s_hat, rho_hat, sensor, alpha):
    """Remainder of one source's term expanded at (s_hat, rho_hat).

    Vectorized over rows of rho and entries of s.
    """
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    s = np.broadcast_to(np.asarray(s, dtype=float), rho.shape[0])
    r = sensor.position
    tau = np.linalg.norm(rho_hat - r)
    if tau < MIN_DISTANCE:
        raise SingularityError("expansion point within %g m of a sensor" % MIN_DISTANCE)
    dist = np.linalg.norm(rho - r, axis=1)
    # f(s, rho) - f(s, rho_hat) - grad_rho f . (rho - rho_hat); the energy
    # direction is linear so it drops out of the remainder
    lin = alpha * s_hat * ((rho_hat - r) @ (rho - rho_hat).T) / tau ** (alpha + 2)
    return sensor.gain * (s / dist ** alpha - s / tau ** alpha + lin)


def h_function(k, ds, t, s_hat, tau, alpha):
    """Normalized remainder of one source over a ball, in polar form.

    Arguments are the cosine k between the position offset and the
    center-to-sensor direction, the energy offset ds and the offset length t.
    Evaluations whose implied squared distance is nonpositive return +inf.
    """
    k = np.asarray(k, dtype=float)
    dist2 = t * t + tau * tau + 2.0 * t * tau * k
    with np.errstate(divide="ignore", invalid="ignore"):
        val = ((s_hat + ds) / dist2 ** (alpha / 2.0)
               + alpha * s_hat * t * k / tau ** (alpha + 1)
               - (s_hat + ds) / tau ** alpha)
    return np.where(dist2 > 0, val, np.inf)


def _clamped_offsets(s_hat, S):
    # fractional powers below need 1 - S/s_hat >= 0
    S = max(float(S), 0.0)
    S = min(S, s_hat * (1.0 - 1e-9))
    return S, 1.0 - S / s_hat, 1.0 + S / s_hat


def bound_analytic(s_hat, S, ball, sensor, alpha):
    """Closed-form remainder interval when the sensor is outside the ball.

    Parameters
    ----------
    s_hat, S : floats
        Energy interval center and half-width, 0 <= S <= s_hat.
    ball : Ball
        Position bound with center rho_hat and radius R < ||rho_hat - r||.
    sensor : Sensor
    alpha : float

    Returns
    -------
    Interval
        Extremes of the remainder over the interval x ball, attained by a
        fixed list of candidate evaluations of the polar form.
    """
    r = sensor.position
    tau = float(np.linalg.norm(ball.center - r))
    R = ball.radius
    if tau <= R:
        raise ValueError("sensor inside the ball, use bound_analytic_inside")
    if tau < MIN_DISTANCE:
        raise SingularityError("sensor at the ball center")
    if R <= 0.0:
        return Interval(0.0, 0.0)
    S, q1, q2 = _clamped_offsets(s_hat, S)
    g = sensor.gain

    def H(k, ds, t):
        return float(h_function(k, ds, t, s_hat, tau, alpha))

    hi = max(H(1.0, -S, R), H(-1.0, S, R), H(-1.0, -S, R), 0.0)

    t1 = min(tau * (1.0 - q1 ** (1.0 / (alpha + 1.0))), R)
    t2 = min(tau * (q2 ** (1.0 / (alpha + 1.0)) - 1.0), R)
    k1 = ((q1 ** (1.0 / (alpha / 2.0 + 1.0)) - 1.0) * tau ** 2 - R ** 2) / (2.0 * R * tau)
    k2 = ((q2 ** (1.0 / (alpha / 2.0 + 1.0)) - 1.0) * tau ** 2 - R ** 2) / (2.0 * R * tau)
    k1 = min(max(k1, -1.0), 1.0)
    k2 = min(max(k2, -1.0), 1.0)
    lo = min(H(-1.0, -S, t1), H(1.0, S, t2), H(k1, -S, R), H(k2, S, R), 0.0)
    return Interval(g * lo, g * hi)


def bound_analytic_inside(s_hat, S, ball, sensor, alpha):
    """Remainder interval when the sensor lies inside the ball: upper +inf.

    The lower bound evaluates the same candidate list as the outside case but
    with the radial stationary points no longer capped at the radius. The
    cosine candidates are used unclamped; when they fall outside [-1, 1] the
    evaluation is a conservative (still valid) lower bound.
    """
    r = sensor.position
    tau = float(np.linalg.norm(ball.center - r))
    R = ball.radius
    if tau < MIN_DISTANCE:
        raise SingularityError("sensor at the ball center")
    if tau > R:
        raise ValueError("sensor outside the ball, use bound_analytic")
    S, q1, q2 = _clamped_offsets(s_hat, S)
    g = sensor.gain

    def H(k, ds, t):
        return float(h_function(k, ds, t, s_hat, tau, alpha))

    t1m = tau * (1.0 - q1 ** (1.0 / (alpha + 1.0)))
    t2m = tau * (q2 ** (1.0 / (alpha + 1.0)) - 1.0)
    k1 = ((q1 ** (1.0 / (alpha / 2.0 + 1.0)) - 1.0) * tau ** 2 - R ** 2) / (2.0 * R * tau)
    k2 = ((q2 ** (1.0 / (alpha / 2.0 + 1.0)) - 1.0) * tau ** 2 - R ** 2) / (2.0 * R * tau)
    lo = min(H(-1.0, -S, t1m), H(1.0, S, t2m), H(k1, -S, R), H(k2, S, R), 0.0)
    return Interval(g * lo, np.inf)


def bound_by_sampling(source_set, x_hat, sensors, alpha, count=None,
                      inflation=DEFAULT_INFLATION, rng=None):
    """Sampling-based remainder box for one source.

    Draws boundary points of an inflated copy of the source bound (extremes
    of the remainder lie on the boundary or at the expansion point, where it
    vanishes) and takes per-sensor minima and maxima. Sensors inside the
    inflated position set get an infinite upper bound.

    Parameters
    ----------
    source_set : SourceSet
    x_hat : SourceState
        Expansion point, inside the set.
    sensors : sequence of Sensor
    alpha : float
    count : int, optional
        Boundary sample count; defaults to 200 * d.
    inflation : float
        Boundary is taken on the set scaled by this factor about its center.
    rng : numpy Generator, optional
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = source_set.position.dim
    if count is None:
        count = 200 * d
    if count < 1:
        raise ValueError("need at least one sample")
    s_hat = x_hat.energy
    rho_hat = x_hat.position

    s_half = inflation * source_set.energy.half_width
    s_mid = source_set.energy.center
    inflated = geometry.Ellipsoid(source_set.position.center,
                                  inflation ** 2 * source_set.position.shape)
    factor = geometry.cholesky(inflated.shape)

    dirs = rng.standard_normal((count, d))
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0] = 1.0
    dirs /= norms[:, None]
    pts = inflated.center + dirs @ factor.T
    pts = np.vstack([pts, inflated.center[None, :]])
    energies = np.array([s_mid - s_half, s_mid + s_half])

    lo = np.zeros(len(sensors))
    hi = np.zeros(len(sensors))
    for l, sensor in enumerate(sensors):
        dist = np.linalg.norm(pts - sensor.position, axis=1)
        keep = dist >= MIN_DISTANCE  # a sample exactly on a sensor is skipped
        vals = [source_remainder(np.full(keep.sum(), s), pts[keep],
                                 s_hat, rho_hat, sensor, alpha)
                for s in energies]
        if any(v.size for v in vals):
            allv = np.concatenate(vals)
            lo[l] = min(0.0, float(allv.min()))
            hi[l] = max(0.0, float(allv.max()))
        if geometry.contains(inflated, sensor.position):
            hi[l] = np.inf
    return RemainderBox(lo, hi)


def aggregate(per_source_boxes, num_sensors):
    """Sum per-source remainder boxes and split sensors by finiteness.

    Returns the Minkowski-sum RemainderBox over all sources and the
    SensorPartition separating finite from infinite upper bounds.
    """
    boxes = list(per_source_boxes)
    if not boxes:
        raise ValueError("need at least one per-source box")
    for b in boxes:
        if b.num_sensors != num_sensors:
            raise ValueError("box sensor count mismatch")
    total = geometry.minkowski_sum([b.as_box() for b in boxes])
    combined = RemainderBox(total.lo, total.hi)
    infinite = [l for l in range(num_sensors) if np.isinf(combined.hi[l])]
    finite = [l for l in range(num_sensors) if l not in infinite]
    return combined, SensorPartition(finite, infinite)
