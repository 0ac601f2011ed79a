"""Per-source shrink updates for the known-decay case.

Every measurement consistent with the current bounds is encoded through the
first-order expansion at the set centers: finite-bound sensors give equality
rows with a bounded slack variable, infinite-bound sensors give one-sided
affine constraints. An S-procedure over the membership and slack constraints
then yields one small LMI per target (energy half-width, position shape),
with the equality rows eliminated by projecting onto their null space. The
previous set is always a feasible point of both programs, so the optimal
sets never grow.
"""

import numpy as np
import scipy.linalg

from . import conic, geometry
from .geometry import Ellipsoid, Interval, SourceSet
from .model import SourceState, jacobian, measure
from .remainder import aggregate


class IterationState:
    """Bounding sets of all sources at one outer iteration."""

    __slots__ = ("sources", "index")

    def __init__(self, sources, index=0):
        sources = tuple(sources)
        if not sources:
            raise ValueError("need at least one source")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "index", int(index))

    def __setattr__(self, *_):
        raise AttributeError("IterationState is immutable")

    @property
    def num_sources(self):
        return len(self.sources)

    @property
    def dim(self):
        return self.sources[0].position.dim

    def center_states(self):
        return [SourceState(max(s.energy.center, 0.0), s.position.center)
                for s in self.sources]

    def joint_factor(self):
        """Block-diagonal factor diag(S_1, E_1, ..., S_N, E_N)."""
        blocks = []
        for s in self.sources:
            blocks.append(np.array([[s.energy.half_width]]))
            blocks.append(geometry.cholesky(s.position.shape))
        return scipy.linalg.block_diag(*blocks)

    def replace(self, n, source_set, index=None):
        sources = list(self.sources)
        sources[n] = source_set
        return IterationState(sources, self.index if index is None else index)


class UpdateInputs:
    """Measurement, bounds and linearization data shared by both updates.

    Midpoints and half-widths of the remainder-plus-noise slack are
    precomputed per finite-bound sensor; infinite-bound sensors carry the
    constant of their one-sided constraint instead.
    """

    __slots__ = ("y", "f_hat", "jac", "e_factor", "rem_box", "partition",
                 "noise_box", "e_plus", "b_plus", "e_eps", "b_eps")

    def __init__(self, y, f_hat, jac, e_factor, rem_box, partition, noise_box):
        finite = list(partition.finite)
        object.__setattr__(self, "y", np.asarray(y, dtype=float))
        object.__setattr__(self, "f_hat", np.asarray(f_hat, dtype=float))
        object.__setattr__(self, "jac", np.asarray(jac, dtype=float))
        object.__setattr__(self, "e_factor", np.asarray(e_factor, dtype=float))
        object.__setattr__(self, "rem_box", rem_box)
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "noise_box", noise_box)
        object.__setattr__(self, "e_plus",
                           0.5 * (rem_box.lo[finite] + rem_box.hi[finite]))
        object.__setattr__(self, "b_plus",
                           0.5 * (rem_box.hi[finite] - rem_box.lo[finite]))
        object.__setattr__(self, "e_eps", noise_box.midpoint)
        object.__setattr__(self, "b_eps", noise_box.half_width)

    def __setattr__(self, *_):
        raise AttributeError("UpdateInputs is immutable")


def make_update_inputs(state, y, scenario, alpha, per_source_boxes):
    """Linearize at the current centers and aggregate remainder boxes."""
    centers = state.center_states()
    f_hat = measure(centers, scenario, alpha)
    jac = jacobian(centers, scenario, alpha)
    rem_box, partition = aggregate(per_source_boxes, scenario.num_sensors)
    return UpdateInputs(y, f_hat, jac, state.joint_factor(), rem_box,
                        partition, scenario.noise_box)


def null_space(m, rcond=1e-10):
    """Orthonormal kernel basis of m, singular values cut at rcond * sigma_max.

    A matrix with no rows maps to the identity.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] == 0 or not np.any(m):
        return np.eye(m.shape[1])
    return scipy.linalg.null_space(m, rcond=rcond)


def _consistency_rows(inputs):
    """Equality rows over xi = [1, u, slack] for finite-bound sensors.

    Row l states: f_l(x_hat) + (J E u)_l + midpoint_l - y_l
    + halfwidth_l * slack_l = 0 with |slack_l| <= 1.
    """
    finite = list(inputs.partition.finite)
    n_u = inputs.e_factor.shape[0]
    m = 1 + n_u + len(finite)
    rows = np.zeros((len(finite), m))
    je = inputs.jac @ inputs.e_factor
    for r, l in enumerate(finite):
        rows[r, 0] = (inputs.f_hat[l] + inputs.e_plus[r] + inputs.e_eps[l]
                      - inputs.y[l])
        rows[r, 1:1 + n_u] = je[l]
        rows[r, 1 + n_u + r] = inputs.b_plus[r] + inputs.b_eps[l]
    return rows


def _one_sided_blocks(inputs):
    """Quadratic forms of the one-sided constraints for infinite sensors.

    Each encodes f_l(x_hat) + (J E u)_l + lower-noise + lower-remainder
    - y_l <= 0 as xi^T Psi xi <= 0, normalized to unit scale since the
    multiplier absorbs positive factors.
    """
    n_u = inputs.e_factor.shape[0]
    m = 1 + n_u + len(inputs.partition.finite)
    je = inputs.jac @ inputs.e_factor
    blocks = {}
    for l in inputs.partition.infinite:
        h = (inputs.f_hat[l] + inputs.noise_box.lo[l] + inputs.rem_box.lo[l]
             - inputs.y[l])
        psi = np.zeros((m, m))
        psi[0, 0] = h
        psi[0, 1:1 + n_u] = 0.5 * je[l]
        psi[1:1 + n_u, 0] = 0.5 * je[l]
        scale = max(1.0, np.abs(psi).max())
        blocks[l] = psi / scale
    return blocks


def _multiplier_blocks(state, inputs):
    """Constant and per-multiplier pieces of the S-procedure matrix.

    Returns (base, coeffs, m) with base = diag(1, 0, ..., 0) and coeffs a
    dict of multiplier name to coefficient matrix, all of order m.
    """
    d = state.dim
    n_src = state.num_sources
    n_u = (d + 1) * n_src
    finite = list(inputs.partition.finite)
    m = 1 + n_u + len(finite)

    base = np.zeros((m, m))
    base[0, 0] = 1.0
    coeffs = {}
    for j in range(n_src):
        a = np.zeros((m, m))
        a[0, 0] = -1.0
        a[1 + j * (d + 1), 1 + j * (d + 1)] = 1.0
        coeffs["tau_s%d" % j] = a
        a = np.zeros((m, m))
        a[0, 0] = -1.0
        for i in range(d):
            pos = 1 + j * (d + 1) + 1 + i
            a[pos, pos] = 1.0
        coeffs["tau_p%d" % j] = a
    for r, l in enumerate(finite):
        a = np.zeros((m, m))
        a[0, 0] = -1.0
        a[1 + n_u + r, 1 + n_u + r] = 1.0
        coeffs["tau_e%d" % l] = a
    for l, psi in _one_sided_blocks(inputs).items():
        coeffs["tau_m%d" % l] = psi
    return base, coeffs, m


def _projected(rows):
    """Kernel basis of the row-normalized consistency rows."""
    if rows.shape[0] == 0:
        return np.eye(rows.shape[1])
    norms = np.linalg.norm(rows, axis=1)
    norms[norms == 0] = 1.0
    return null_space(rows / norms[:, None])


def build_s_update(state, inputs, n):
    """SDP shrinking source n's energy interval.

    The target half-width enters as w = (S_new / S_old)^2 and the center
    shift as (s_new - s_old) / S_old, so the LMI data stays near unit scale.
    Returns None when the projected constraint set is degenerate; the caller
    keeps the previous interval.
    """
    d = state.dim
    src = state.sources[n]
    sigma = src.energy.half_width
    if sigma <= 0:
        return None
    rows = _consistency_rows(inputs)
    v = _projected(rows)
    if v.shape[1] == 0:
        return None
    base, coeffs, m = _multiplier_blocks(state, inputs)
    k = v.shape[1]

    # deviation row at the previous center, scaled by the previous half-width
    phi0 = np.zeros(m)
    phi0[1 + n * (d + 1)] = 1.0

    prob = conic.SdpProblem()
    prob.add_scalar("w", nonneg=True)
    prob.add_scalar("shift")
    for name in coeffs:
        prob.add_scalar(name, nonneg=True)
    prob.add_objective_term("w", 1.0)

    order = 1 + k
    const = np.zeros((order, order))
    const[0, 1:] = phi0 @ v
    const[1:, 0] = const[0, 1:]
    const[1:, 1:] = -(v.T @ base @ v)
    lmi_coeffs = {"w": np.zeros((order, order)), "shift": np.zeros((order, order))}
    lmi_coeffs["w"][0, 0] = -1.0
    shift_row = np.zeros(m)
    shift_row[0] = -1.0
    lmi_coeffs["shift"][0, 1:] = shift_row @ v
    lmi_coeffs["shift"][1:, 0] = lmi_coeffs["shift"][0, 1:]
    for name, xi in coeffs.items():
        a = np.zeros((order, order))
        a[1:, 1:] = -(v.T @ xi @ v)
        lmi_coeffs[name] = a
    prob.add_lmi(const, lmi_coeffs)
    prob.meta = {"kind": "s_update", "source": n, "sigma": sigma,
                 "prev_center": src.energy.center}
    return prob


def build_rho_update(state, inputs, n):
    """SDP shrinking source n's position ellipsoid (trace objective).

    Shape and center shift are scaled by the previous long semi-axis.
    """
    d = state.dim
    src = state.sources[n]
    lam_max = float(np.linalg.eigvalsh(src.position.shape)[-1])
    sigma = np.sqrt(max(lam_max, 0.0))
    if sigma <= 0:
        return None
    rows = _consistency_rows(inputs)
    v = _projected(rows)
    if v.shape[1] == 0:
        return None
    base, coeffs, m = _multiplier_blocks(state, inputs)
    k = v.shape[1]

    factor = geometry.cholesky(src.position.shape)
    phi0 = np.zeros((d, m))
    phi0[:, 1 + n * (d + 1) + 1: 1 + n * (d + 1) + 1 + d] = factor / sigma

    prob = conic.SdpProblem()
    prob.add_symmetric("Q", d)
    for i in range(d):
        prob.add_scalar("shift%d" % i)
    for name in coeffs:
        prob.add_scalar(name, nonneg=True)
    prob.add_objective_trace("Q", 1.0)

    order = d + k
    const = np.zeros((order, order))
    const[:d, d:] = phi0 @ v
    const[d:, :d] = const[:d, d:].T
    const[d:, d:] = -(v.T @ base @ v)
    lmi_coeffs = {}
    for i in range(d):
        a = np.zeros((order, order))
        row = np.zeros(m)
        row[0] = -1.0
        a[i, d:] = row @ v
        a[d:, i] = a[i, d:]
        lmi_coeffs["shift%d" % i] = a
    for name, xi in coeffs.items():
        a = np.zeros((order, order))
        a[d:, d:] = -(v.T @ xi @ v)
        lmi_coeffs[name] = a
    prob.add_lmi(const, lmi_coeffs)
    prob.place_matrix_variable(len(prob._lmis) - 1, "Q", rows=list(range(d)),
                               sign=-1.0)
    prob.meta = {"kind": "rho_update", "source": n, "sigma": sigma,
                 "prev_center": src.position.center.copy()}
    return prob


def apply_update(problem, previous):
    """Solve a built update problem and extract the new bounding set.

    Returns (new_set, event) where event is None on a clean optimal solve,
    or one of "degenerate", "infeasible", "numerical_failure", "projected".
    On anything but a clean or marginally-projected solve the previous set
    is returned unchanged.
    """
    if problem is None:
        return previous, "degenerate"
    sol = conic.solve(problem)
    if sol.status != "optimal":
        event = "infeasible" if sol.status == "infeasible" else "numerical_failure"
        return previous, event
    meta = problem.meta
    if meta["kind"] == "s_update":
        sigma = meta["sigma"]
        w = sol.scalar("w")
        event = None
        if w < 0:
            w, event = 0.0, "projected"
        half = sigma * np.sqrt(w)
        center = meta["prev_center"] + sigma * sol.scalar("shift")
        return Interval(center - half, center + half), event
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
    center = meta["prev_center"] + sigma * shift
    return Ellipsoid(center, shape), event


def update_source(state, inputs, n):
    """Position then energy update for one source; returns (SourceSet, events)."""
    events = []
    prob = build_rho_update(state, inputs, n)
    new_pos, ev = apply_update(prob, state.sources[n].position)
    if ev:
        events.append("rho:" + ev)
    prob = build_s_update(state, inputs, n)
    new_energy, ev = apply_update(prob, state.sources[n].energy)
    if ev:
        events.append("s:" + ev)
    return SourceSet(new_energy, new_pos), events
