"""Updates that stay valid when the decay exponent is only known to an interval.

The measurement map is monotone in the exponent once energies and distances
are bracketed, so interval bounds on each source's contribution at each
sensor follow from extremal distances over the position ellipsoid (a small
conic program per pair). In the lifted variable s^(2/alpha) every measurement
constraint becomes a quadratic inequality in [1, lifted energy, position],
and an S-procedure gives one LMI per target, with the lifted interval mapped
back through the exponent range afterwards.
"""

import numpy as np

from . import conic, geometry
from .geometry import Ellipsoid, Interval
from .model import MIN_DISTANCE


def _power(x, expo):
    """x**expo for x >= 0, evaluated in the log domain for large x."""
    if x < 0:
        raise ValueError("negative base in power transform")
    if x == 0.0:
        return 0.0
    if not np.isfinite(x):
        return np.inf
    return float(np.exp(expo * np.log(x)))


def _endpoint_powers(x, alphas, expo_of_alpha):
    """Evaluate x**expo_of_alpha(alpha) at both exponent endpoints."""
    return [_power(x, expo_of_alpha(a)) for a in alphas]


class EnergyInterval:
    """Per source and sensor, an interval around its measurement contribution.

    Upper endpoints may be +inf (sensor reachable by the position set).
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("endpoint tables must share one (source, sensor) shape")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ValueError("invalid contribution interval")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *_):
        raise AttributeError("EnergyInterval is immutable")

    @property
    def num_sources(self):
        return self.lo.shape[0]

    @property
    def num_sensors(self):
        return self.lo.shape[1]

    def others_lo(self, n, l):
        return float(self.lo[:, l].sum() - self.lo[n, l])

    def others_hi(self, n, l):
        return float(self.hi[:, l].sum() - self.hi[n, l])


def distance_extremes(ellipsoid, point):
    """Extremal Euclidean distances from a point to an ellipsoid.

    The minimum comes from a cone program over the ellipsoid parameter, the
    maximum from the exact single-constraint S-procedure. Solver failures
    fall back to the conservative center-distance +- long-semi-axis bracket.

    Returns
    -------
    (float, float)
        Nearest and farthest distance; the nearest is 0 when the point is
        inside.
    """
    point = np.asarray(point, dtype=float)
    d = ellipsoid.dim
    mu = ellipsoid.center - point
    lam_max = float(np.linalg.eigvalsh(ellipsoid.shape)[-1])
    semi = np.sqrt(max(lam_max, 0.0))
    norm_mu = float(np.linalg.norm(mu))
    if semi <= MIN_DISTANCE * 1e-3:
        return norm_mu, norm_mu
    scale = max(norm_mu + semi, 1.0)

    lower = 0.0
    if not geometry.contains(ellipsoid, point):
        lower = _min_distance(mu, geometry.cholesky(ellipsoid.shape), d, scale,
                              norm_mu, semi)
    upper = _max_distance(mu, ellipsoid.shape, d, scale, norm_mu, semi,
                          lam_max)
    return lower, upper


def _min_distance(mu, factor, d, scale, norm_mu, semi):
    """min ||mu + E v|| over ||v|| <= 1, in coordinates scaled by `scale`."""
    prob = conic.SdpProblem()
    prob.add_scalar("t", nonneg=True)
    for i in range(d):
        prob.add_scalar("v%d" % i)
    prob.add_objective_term("t", 1.0)

    # -[[t I, (mu + E v)/scale], [., t]] <= 0
    const = np.zeros((d + 1, d + 1))
    const[:d, d] = -mu / scale
    const[d, :d] = -mu / scale
    coeffs = {"t": -np.eye(d + 1)}
    for i in range(d):
        a = np.zeros((d + 1, d + 1))
        a[:d, d] = -factor[:, i] / scale
        a[d, :d] = a[:d, d]
        coeffs["v%d" % i] = a
    prob.add_lmi(const, coeffs)

    # -[[I, v], [v^T, 1]] <= 0 keeps the parameter in the unit ball
    const2 = -np.eye(d + 1)
    coeffs2 = {}
    for i in range(d):
        a = np.zeros((d + 1, d + 1))
        a[i, d] = -1.0
        a[d, i] = -1.0
        coeffs2["v%d" % i] = a
    prob.add_lmi(const2, coeffs2)

    sol = conic.solve(prob)
    if sol.status != "optimal":
        return max(0.0, norm_mu - semi)
    return max(0.0, scale * sol.scalar("t"))


def _max_distance(mu, shape, d, scale, norm_mu, semi, lam_max):
    """max ||mu + delta|| over the centered ellipsoid, exact S-procedure."""
    ridge = max(lam_max, 1.0) * 1e-12
    try:
        inv_shape = np.linalg.inv(shape + ridge * np.eye(d))
    except np.linalg.LinAlgError:
        return norm_mu + semi
    inv_mu = inv_shape @ mu

    # z = (mu + delta)/scale; maximize ||z||^2 = t subject to membership
    c_mat = np.zeros((d + 1, d + 1))
    c_mat[:d, :d] = scale ** 2 * inv_shape
    c_mat[:d, d] = -scale * inv_mu
    c_mat[d, :d] = -scale * inv_mu
    c_mat[d, d] = float(mu @ inv_mu) - 1.0
    c_scale = max(1.0, np.abs(c_mat).max())
    c_mat /= c_scale

    const = np.zeros((d + 1, d + 1))
    const[:d, :d] = np.eye(d)
    prob = conic.SdpProblem()
    prob.add_scalar("t", nonneg=True)
    prob.add_scalar("tau", nonneg=True)
    prob.add_objective_term("t", 1.0)
    t_coeff = np.zeros((d + 1, d + 1))
    t_coeff[d, d] = -1.0
    prob.add_lmi(const, {"t": t_coeff, "tau": -c_mat})
    sol = conic.solve(prob)
    if sol.status != "optimal":
        return norm_mu + semi
    return scale * float(np.sqrt(max(sol.scalar("t"), 0.0)))


def f_interval(energy, ellipsoid, sensor_position, gain, alphas):
    """Bounds on one source's contribution to one sensor, over both sets
    and the whole exponent range.

    Parameters
    ----------
    energy : Interval
        Energy bounds; a negative lower endpoint is clamped to 0.
    alphas : (float, float)
        Decay exponent range.

    Returns
    -------
    Interval
        Upper endpoint +inf when the sensor is reachable by the position set.
    """
    lo_s = max(energy.lo, 0.0)
    hi_s = max(energy.hi, 0.0)
    dist_lo, dist_hi = distance_extremes(ellipsoid, sensor_position)
    if dist_hi <= 0.0:
        return Interval(0.0, np.inf)
    lo = gain * lo_s / max(_endpoint_powers(dist_hi, alphas, lambda a: a))
    if dist_lo <= 0.0:
        return Interval(lo, np.inf)
    hi = gain * hi_s / min(_endpoint_powers(dist_lo, alphas, lambda a: a))
    return Interval(min(lo, hi), hi)


def energy_intervals(state, scenario):
    """Lemma-style contribution table for every (source, sensor) pair."""
    alphas = scenario.decay if scenario.decay_is_interval else (
        scenario.decay, scenario.decay)
    n_src = state.num_sources
    n_sen = scenario.num_sensors
    lo = np.zeros((n_src, n_sen))
    hi = np.zeros((n_src, n_sen))
    for n, src in enumerate(state.sources):
        for l, sensor in enumerate(scenario.sensors):
            iv = f_interval(src.energy, src.position, sensor.position,
                            sensor.gain, alphas)
            lo[n, l] = iv.lo
            hi[n, l] = iv.hi
    return EnergyInterval(lo, hi)


def _lifted_energy_bounds(energy, alphas):
    """Previous energy interval mapped through s -> s^(2/alpha), worst case."""
    lo_s = max(energy.lo, 0.0)
    hi_s = max(energy.hi, 0.0)
    d_s = min(_endpoint_powers(lo_s, alphas, lambda a: 2.0 / a))
    u_s = max(_endpoint_powers(hi_s, alphas, lambda a: 2.0 / a))
    return d_s, u_s


def _sensor_terms(state, y, intervals, noise_box, n, scenario):
    """Per-sensor lifted bounds for source n's constraints.

    Returns (terms, dropped) where terms maps sensor index to
    (u_tilde, d_tilde, position, in_lower_set) and dropped lists sensors
    whose upper constraint degenerated (numerically impossible under sound
    bounds, flagged rather than trusted).
    """
    alphas = scenario.decay if scenario.decay_is_interval else (
        scenario.decay, scenario.decay)
    terms = {}
    dropped = []
    for l, sensor in enumerate(scenario.sensors):
        d_hat = intervals.others_lo(n, l) + noise_box.lo[l]
        margin = (y[l] - d_hat) / sensor.gain
        if margin <= 0.0:
            dropped.append(l)
            continue
        u_tilde = max(_endpoint_powers(margin, alphas, lambda a: 2.0 / a))
        u_hat = intervals.others_hi(n, l) + noise_box.hi[l]
        residual = max((y[l] - u_hat) / sensor.gain, 0.0)
        d_tilde = min(_endpoint_powers(residual, alphas, lambda a: 2.0 / a))
        terms[l] = (u_tilde, d_tilde, sensor.position)
    return terms, dropped


def _membership_blocks(state, n, d_s, u_s):
    """Previous-set membership forms over xi = [1, lifted s, rho]."""
    src = state.sources[n]
    d = state.dim
    m = 2 + d
    rho_hat = src.position.center
    shape = src.position.shape
    lam_max = float(np.linalg.eigvalsh(shape)[-1])
    ridge = max(lam_max, 1.0) * 1e-12
    inv_shape = np.linalg.inv(shape + ridge * np.eye(d))
    inv_mu = inv_shape @ rho_hat

    phi_rho = np.zeros((m, m))
    phi_rho[0, 0] = float(rho_hat @ inv_mu) - 1.0
    phi_rho[0, 2:] = -inv_mu
    phi_rho[2:, 0] = -inv_mu
    phi_rho[2:, 2:] = inv_shape

    phi_s = np.zeros((m, m))
    phi_s[0, 0] = d_s * u_s
    phi_s[0, 1] = -(d_s + u_s) / 2.0
    phi_s[1, 0] = phi_s[0, 1]
    phi_s[1, 1] = 1.0
    return phi_rho, phi_s


def _measurement_blocks(terms, d):
    """Upper and lower measurement forms over xi = [1, lifted s, rho]."""
    m = 2 + d
    upper = {}
    lower = {}
    for l, (u_tilde, d_tilde, r) in terms.items():
        a = np.zeros((m, m))
        a[0, 0] = float(r @ r)
        a[0, 1] = -0.5 / u_tilde
        a[1, 0] = a[0, 1]
        a[0, 2:] = -r
        a[2:, 0] = -r
        a[2:, 2:] = np.eye(d)
        upper[l] = -a
        if d_tilde > 0.0:
            b = a.copy()
            b[0, 1] = -0.5 / d_tilde
            b[1, 0] = b[0, 1]
            lower[l] = b
    return upper, lower


def _scaled_constraints(state, n, phi_rho, phi_s, upper, lower, c_s, sigma_s,
                        sigma_rho):
    """Congruence-transform all constraint forms to centered unit coordinates.

    New coordinates are xi' = [1, (lifted s - c_s)/sigma_s,
    (rho - rho_hat)/sigma_rho]; each block is then normalized, which the
    matching multiplier absorbs.
    """
    d = state.dim
    m = 2 + d
    t_aff = np.zeros((m, m))
    t_aff[0, 0] = 1.0
    t_aff[1, 0] = c_s
    t_aff[1, 1] = sigma_s
    t_aff[2:, 0] = state.sources[n].position.center
    t_aff[2:, 2:] = sigma_rho * np.eye(d)

    def transform(mat):
        out = t_aff.T @ mat @ t_aff
        return out / max(1.0, np.abs(out).max())

    coeffs = {"tau_rho": transform(phi_rho), "tau_s": transform(phi_s)}
    for l, mat in upper.items():
        coeffs["tau_u%d" % l] = transform(mat)
    for l, mat in lower.items():
        coeffs["tau_d%d" % l] = transform(mat)
    return coeffs


def _common_blocks(state, y, intervals, noise_box, n, scenario):
    alphas = scenario.decay if scenario.decay_is_interval else (
        scenario.decay, scenario.decay)
    src = state.sources[n]
    d_s, u_s = _lifted_energy_bounds(src.energy, alphas)
    terms, dropped = _sensor_terms(state, y, intervals, noise_box, n, scenario)
    phi_rho, phi_s = _membership_blocks(state, n, d_s, u_s)
    upper, lower = _measurement_blocks(terms, state.dim)
    c_s = 0.5 * (d_s + u_s)
    sigma_s = max(0.5 * (u_s - d_s), 1e-9 * max(1.0, abs(c_s)))
    lam_max = float(np.linalg.eigvalsh(src.position.shape)[-1])
    sigma_rho = np.sqrt(max(lam_max, 1e-18))
    coeffs = _scaled_constraints(state, n, phi_rho, phi_s, upper, lower, c_s,
                                 sigma_s, sigma_rho)
    return coeffs, dropped, c_s, sigma_s, sigma_rho, alphas


def build_rho_update_alpha(state, y, intervals, noise_box, n, scenario):
    """SDP shrinking source n's position ellipsoid under exponent ambiguity.

    Decision variables are the scaled shape, the scaled center shift and one
    multiplier per constraint; the objective is the trace. Dropped sensors
    are recorded in the problem metadata.
    """
    d = state.dim
    m = 2 + d
    coeffs, dropped, _, _, sigma_rho, _ = _common_blocks(
        state, y, intervals, noise_box, n, scenario)

    prob = conic.SdpProblem()
    prob.add_symmetric("Q", d)
    for i in range(d):
        prob.add_scalar("shift%d" % i)
    for name in coeffs:
        prob.add_scalar(name, nonneg=True)
    prob.add_objective_trace("Q", 1.0)

    order = d + m
    const = np.zeros((order, order))
    const[:d, d + 2:] = np.eye(d)
    const[d + 2:, :d] = np.eye(d)
    const[d, d] = -1.0
    lmi_coeffs = {}
    for i in range(d):
        a = np.zeros((order, order))
        a[i, d] = -1.0
        a[d, i] = -1.0
        lmi_coeffs["shift%d" % i] = a
    for name, mat in coeffs.items():
        a = np.zeros((order, order))
        a[d:, d:] = -mat
        lmi_coeffs[name] = a
    prob.add_lmi(const, lmi_coeffs)
    prob.place_matrix_variable(len(prob._lmis) - 1, "Q", rows=list(range(d)),
                               sign=-1.0)
    prob.meta = {"kind": "rho_update_alpha", "source": n,
                 "sigma": sigma_rho,
                 "prev_center": state.sources[n].position.center.copy(),
                 "dropped": dropped}
    return prob


def build_s_update_alpha(state, y, intervals, noise_box, n, scenario):
    """SDP shrinking source n's lifted energy interval; see apply for the
    back-transform through the exponent range."""
    d = state.dim
    m = 2 + d
    coeffs, dropped, c_s, sigma_s, _, alphas = _common_blocks(
        state, y, intervals, noise_box, n, scenario)

    prob = conic.SdpProblem()
    prob.add_scalar("width", nonneg=True)
    prob.add_scalar("shift")
    for name in coeffs:
        prob.add_scalar(name, nonneg=True)
    prob.add_objective_term("width", 1.0)

    order = 1 + m
    const = np.zeros((order, order))
    const[0, 2] = 1.0
    const[2, 0] = 1.0
    const[1, 1] = -1.0
    lmi_coeffs = {"width": np.zeros((order, order)),
                  "shift": np.zeros((order, order))}
    lmi_coeffs["width"][0, 0] = -1.0
    lmi_coeffs["shift"][0, 1] = -1.0
    lmi_coeffs["shift"][1, 0] = -1.0
    for name, mat in coeffs.items():
        a = np.zeros((order, order))
        a[1:, 1:] = -mat
        lmi_coeffs[name] = a
    prob.add_lmi(const, lmi_coeffs)
    prob.meta = {"kind": "s_update_alpha", "source": n, "sigma": sigma_s,
                 "center": c_s, "alphas": alphas,
                 "prev_interval": (state.sources[n].energy.lo,
                                   state.sources[n].energy.hi),
                 "dropped": dropped}
    return prob


def apply_update_alpha(problem, previous):
    """Solve a built exponent-robust update and extract the new set.

    Position problems return an Ellipsoid; energy problems map the lifted
    interval back through both exponent endpoints and intersect with the
    previous interval, which the guaranteed set is always inside.
    Returns (new_set, event) as in the fixed-exponent updates.
    """
    sol = conic.solve(problem)
    if sol.status != "optimal":
        event = "infeasible" if sol.status == "infeasible" else "numerical_failure"
        return previous, event
    meta = problem.meta
    if meta["kind"] == "rho_update_alpha":
        sigma = meta["sigma"]
        q = sol.matrix(problem, "Q")
        shape = sigma ** 2 * 0.5 * (q + q.T)
        w, vec = np.linalg.eigh(shape)
        event = None
        if w.min() < -geometry.PSD_EIG_TOL * max(w.max(), 0.0, 1.0):
            event = "projected"
        shape = (vec * np.clip(w, 0.0, None)) @ vec.T
        d = shape.shape[0]
        shift = np.array([sol.scalar("shift%d" % i) for i in range(d)])
        return Ellipsoid(meta["prev_center"] + sigma * shift, shape), event

    sigma = meta["sigma"]
    center = meta["center"] + sigma * sol.scalar("shift")
    half_sq = sol.scalar("width")
    event = None
    if half_sq < 0.0:
        half_sq, event = 0.0, "projected"
    half = sigma * np.sqrt(half_sq)
    lo_t = center - half
    if lo_t < 0.0:
        lo_t, event = 0.0, "clamped"
    hi_t = max(center + half, lo_t)
    alphas = meta["alphas"]
    d_s = min(_endpoint_powers(lo_t, alphas, lambda a: a / 2.0))
    u_s = max(_endpoint_powers(hi_t, alphas, lambda a: a / 2.0))
    prev_lo, prev_hi = meta["prev_interval"]
    new_lo = max(d_s, prev_lo)
    new_hi = min(u_s, prev_hi)
    if new_lo > new_hi:
        return previous, "empty_intersection"
    return Interval(new_lo, new_hi), event
