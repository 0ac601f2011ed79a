"""Small dense semidefinite programs: problem description and solve contract.

A problem is a linear objective over named scalar and symmetric-matrix
variables, subject to LMI constraints of the form

    A0 + sum_i x_i * A_i  is negative semidefinite,

plus optional nonnegativity on scalars. Matrix variables are expanded into
their lower-triangle entries, so the backend only ever sees scalars. Problems
here are tiny (LMI order around (d+1)N + L + 2), so a dense interior-point
method is enough; cvxopt's conelp does the work and every returned optimum is
re-checked by a dense eigendecomposition before being reported as feasible.
"""

import io

import numpy as np
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers

# Primal feasibility the caller may rely on: max LMI eigenvalue at the
# returned point, relative to the block's data scale.
FEASIBILITY_TOL = 1e-7

_SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-9,
    "reltol": 1e-8,
    "feastol": 1e-9,
    "maxiters": 200,
}


class SdpProblem:
    """Container for one SDP; build with add_* then hand to solve()."""

    def __init__(self):
        self._names = []
        self._index = {}
        self._nonneg = []
        self._matrices = {}  # name -> (order, [entry names])
        self._objective = {}
        self._lmis = []  # (const, {name: coeff matrix})
        self.meta = {}

    # -- variables ---------------------------------------------------------

    def add_scalar(self, name, nonneg=False):
        if name in self._index:
            raise ValueError("variable %r already declared" % name)
        self._index[name] = len(self._names)
        self._names.append(name)
        self._nonneg.append(bool(nonneg))
        return name

    def add_symmetric(self, name, order):
        """Declare a symmetric matrix variable of the given order.

        Internally expands into order*(order+1)/2 scalar entries named
        name[j,k] with j >= k.
        """
        if name in self._matrices:
            raise ValueError("matrix variable %r already declared" % name)
        entries = []
        for j in range(order):
            for k in range(j + 1):
                entries.append(self.add_scalar("%s[%d,%d]" % (name, j, k)))
        self._matrices[name] = (order, entries)
        return name

    @property
    def num_vars(self):
        return len(self._names)

    # -- objective and constraints ------------------------------------------

    def add_objective_term(self, name, coeff):
        if name not in self._index:
            raise ValueError("unknown variable %r in objective" % name)
        self._objective[name] = self._objective.get(name, 0.0) + float(coeff)

    def add_objective_trace(self, matrix_name, weight=1.0):
        """Add weight * trace of a matrix variable to the objective."""
        order, _ = self._matrices[matrix_name]
        for j in range(order):
            self.add_objective_term("%s[%d,%d]" % (matrix_name, j, j), weight)

    def add_lmi(self, const, coeffs):
        """Constrain const + sum_i x_i coeffs[i] to be negative semidefinite.

        Parameters
        ----------
        const : array_like, symmetric
        coeffs : dict mapping variable name -> symmetric coefficient matrix
        """
        const = np.asarray(const, dtype=float)
        m = const.shape[0]
        checked = {}
        for mat, what in [(const, "constant")] + [(np.asarray(a, dtype=float), n)
                                                  for n, a in coeffs.items()]:
            if mat.shape != (m, m):
                raise ValueError("LMI block for %s has shape %s, expected %s"
                                 % (what, mat.shape, (m, m)))
            scale = max(np.abs(mat).max(), 1.0)
            if np.abs(mat - mat.T).max() > 1e-12 * scale * 10:
                raise ValueError("LMI block for %s is not symmetric" % what)
        for n, a in coeffs.items():
            if n not in self._index:
                raise ValueError("unknown variable %r in LMI" % n)
            a = np.asarray(a, dtype=float)
            checked[n] = 0.5 * (a + a.T)
        self._lmis.append((0.5 * (const + const.T), checked))

    def place_matrix_variable(self, lmi_index, matrix_name, rows, sign=1.0):
        """Embed +-P into an existing LMI at the given row/col offset.

        The matrix variable's (j,k) entry receives coefficient sign at
        positions (rows[j], rows[k]) and (rows[k], rows[j]).
        """
        order, _ = self._matrices[matrix_name]
        const, coeffs = self._lmis[lmi_index]
        m = const.shape[0]
        for j in range(order):
            for k in range(j + 1):
                a = np.zeros((m, m))
                a[rows[j], rows[k]] += sign
                if rows[j] != rows[k] or j != k:
                    a[rows[k], rows[j]] += sign
                name = "%s[%d,%d]" % (matrix_name, j, k)
                if name in coeffs:
                    coeffs[name] = coeffs[name] + a
                else:
                    coeffs[name] = a

    # -- export --------------------------------------------------------------

    def dump(self):
        """Plain-text description of the problem for offline cross-checking.

        Format: one `scalar` line per variable (with `nonneg` flag), a `min:`
        objective line, then per LMI a `lmi <order>` header followed by the
        constant block and one labeled coefficient block per variable, each
        printed as whitespace-separated rows.
        """
        out = io.StringIO()
        for name, nn in zip(self._names, self._nonneg):
            out.write("scalar %s%s\n" % (name, " nonneg" if nn else ""))
        terms = " + ".join("%.17g*%s" % (c, n) for n, c in sorted(self._objective.items()))
        out.write("min: %s\n" % (terms or "0"))
        for const, coeffs in self._lmis:
            out.write("lmi %d\n" % const.shape[0])
            out.write("const\n")
            for row in const:
                out.write(" ".join("%.17g" % v for v in row) + "\n")
            for name in sorted(coeffs):
                out.write("coeff %s\n" % name)
                for row in coeffs[name]:
                    out.write(" ".join("%.17g" % v for v in row) + "\n")
        return out.getvalue()


class SdpSolution:
    """Result of solve(): status, per-variable values, objective value."""

    def __init__(self, status, values=None, objective=None, residual=None):
        self.status = status  # "optimal" | "infeasible" | "numerical_failure"
        self.values = values or {}
        self.objective = objective
        self.residual = residual

    def scalar(self, name):
        return self.values[name]

    def matrix(self, problem, name):
        order, _ = problem._matrices[name]
        out = np.zeros((order, order))
        for j in range(order):
            for k in range(j + 1):
                v = self.values["%s[%d,%d]" % (name, j, k)]
                out[j, k] = v
                out[k, j] = v
        return out

    def __repr__(self):
        return "SdpSolution(status=%r, objective=%r)" % (self.status, self.objective)


def lmi_residual(problem, values):
    """Largest LMI eigenvalue at the given point, relative to block scale.

    Returns the max over blocks of lambda_max(A0 + sum x_i A_i) divided by
    max(1, block data scale). Feasible points give values <= FEASIBILITY_TOL.
    """
    worst = -np.inf
    for const, coeffs in problem._lmis:
        total = const.copy()
        scale = np.abs(const).max()
        for name, a in coeffs.items():
            total += values[name] * a
            scale = max(scale, np.abs(a).max() * abs(values[name]))
        lam = float(np.linalg.eigvalsh(total)[-1])
        worst = max(worst, lam / max(scale, 1.0))
    for name, nn in zip(problem._names, problem._nonneg):
        if nn:
            worst = max(worst, -values[name])
    return worst


def solve(problem):
    """Solve an SdpProblem; never report an infeasible point as optimal.

    Returns
    -------
    SdpSolution
        status "optimal" with values and objective, "infeasible" when the
        backend proves primal infeasibility, or "numerical_failure" when the
        backend stalls or the independent eigenvalue re-check fails.
    """
    n = problem.num_vars
    if n == 0:
        raise ValueError("problem has no variables")
    c = np.zeros(n)
    for name, coeff in problem._objective.items():
        c[problem._index[name]] = coeff

    gl_rows = [i for i, nn in enumerate(problem._nonneg) if nn]
    Gl = hl = None
    if gl_rows:
        g = np.zeros((len(gl_rows), n))
        for r, i in enumerate(gl_rows):
            g[r, i] = -1.0  # -x_i <= 0
        Gl = _cvxmat(g)
        hl = _cvxmat(np.zeros(len(gl_rows)))

    Gs, hs = [], []
    for const, coeffs in problem._lmis:
        m = const.shape[0]
        g = np.zeros((m * m, n))
        for name, a in coeffs.items():
            g[:, problem._index[name]] = a.flatten(order="F")
        Gs.append(_cvxmat(g))
        hs.append(_cvxmat(-const))

    try:
        sol = _cvxsolvers.sdp(_cvxmat(c), Gl=Gl, hl=hl, Gs=Gs, hs=hs,
                              options=dict(_SOLVER_OPTIONS))
    except (ValueError, ArithmeticError) as exc:
        return SdpSolution("numerical_failure", residual=repr(exc))

    status = sol.get("status")
    if status == "primal infeasible":
        return SdpSolution("infeasible")
    if status not in ("optimal",) or sol.get("x") is None:
        return SdpSolution("numerical_failure", residual=status)

    x = np.array(sol["x"]).ravel()
    values = {name: float(x[i]) for i, name in enumerate(problem._names)}
    resid = lmi_residual(problem, values)
    if resid > FEASIBILITY_TOL:
        return SdpSolution("numerical_failure", values=values, residual=resid)
    objective = float(c @ x)
    return SdpSolution("optimal", values=values, objective=objective, residual=resid)
