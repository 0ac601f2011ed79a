"""Ellipsoids, intervals, boxes and balls used as bounding sets.

All types are immutable value objects built on numpy arrays; they can be
shared freely between threads and processes.
"""

import numpy as np

# Relative eigenvalue tolerance below which a shape matrix still counts as PSD.
PSD_EIG_TOL = 1e-10
# Relative asymmetry tolerance for shape matrices.
SYM_TOL = 1e-12


def _as_vector(x):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector, got shape %s" % (v.shape,))
    return v


def _check_shape_matrix(shape):
    """Validate symmetry and near-PSD-ness, return the eigen-clipped matrix."""
    a = np.asarray(shape, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("shape matrix must be square, got %s" % (a.shape,))
    scale = np.abs(a).max() if a.size else 0.0
    if scale > 0 and np.abs(a - a.T).max() > SYM_TOL * max(scale, 1.0) * 10:
        raise ValueError("shape matrix is not symmetric")
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    lam_max = max(w.max(), 0.0)
    if w.min() < -PSD_EIG_TOL * max(lam_max, 1.0):
        raise ValueError("shape matrix has negative eigenvalue %g" % w.min())
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


class Ellipsoid:
    """Set {x : (x-center)^T shape^{-1} (x-center) <= 1}.

    Parameters
    ----------
    center : array_like, length d
    shape : array_like, d x d symmetric PSD matrix

    Marginally indefinite inputs (eigenvalues above -1e-10 * lambda_max) are
    clipped to the PSD cone; anything worse is rejected. Degenerate
    (rank-deficient) shapes are allowed.
    """

    __slots__ = ("center", "shape")

    def __init__(self, center, shape):
        center = _as_vector(center)
        shape = _check_shape_matrix(shape)
        if shape.shape[0] != center.size:
            raise ValueError("center dimension %d does not match shape order %d"
                             % (center.size, shape.shape[0]))
        center.setflags(write=False)
        shape.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)

    def __setattr__(self, *_):
        raise AttributeError("Ellipsoid is immutable")

    @property
    def dim(self):
        return self.center.size

    def __repr__(self):
        return "Ellipsoid(center=%s, shape=%s)" % (self.center.tolist(),
                                                   self.shape.tolist())


class Interval:
    """Closed interval [lo, hi]; hi may be +inf."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = float(lo)
        hi = float(hi)
        if not lo <= hi:
            raise ValueError("interval needs lo <= hi, got [%g, %g]" % (lo, hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *_):
        raise AttributeError("Interval is immutable")

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol=1e-9):
        return self.lo - tol <= x <= self.hi + tol

    def __repr__(self):
        return "Interval(%g, %g)" % (self.lo, self.hi)

    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi


class Box:
    """Axis-aligned box [lo, hi] componentwise; hi components may be +inf."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = _as_vector(lo)
        hi = _as_vector(hi)
        if lo.size != hi.size:
            raise ValueError("box bounds differ in dimension")
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *_):
        raise AttributeError("Box is immutable")

    @property
    def dim(self):
        return self.lo.size

    @property
    def midpoint(self):
        # midpoint is undefined on infinite components; callers restrict to
        # finite components first
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def __repr__(self):
        return "Box(lo=%s, hi=%s)" % (self.lo.tolist(), self.hi.tolist())


class Ball:
    """Euclidean ball with given center and nonnegative radius."""

    __slots__ = ("center", "radius")

    def __init__(self, center, radius):
        center = _as_vector(center)
        radius = float(radius)
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)

    def __setattr__(self, *_):
        raise AttributeError("Ball is immutable")

    def contains(self, x, tol=1e-9):
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center) <= self.radius + tol

    def __repr__(self):
        return "Ball(center=%s, radius=%g)" % (self.center.tolist(), self.radius)


class SourceSet:
    """Cartesian bound for one source: energy interval x position ellipsoid."""

    __slots__ = ("energy", "position")

    def __init__(self, energy, position):
        if not isinstance(energy, Interval):
            raise TypeError("energy must be an Interval")
        if not isinstance(position, Ellipsoid):
            raise TypeError("position must be an Ellipsoid")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "position", position)

    def __setattr__(self, *_):
        raise AttributeError("SourceSet is immutable")

    def __repr__(self):
        return "SourceSet(energy=%r, position=%r)" % (self.energy, self.position)


def cholesky(shape):
    """Lower-triangular factor E with E @ E.T == shape.

    Parameters
    ----------
    shape : array_like
        Symmetric PSD matrix. Semidefinite inputs are regularized by
        +1e-12 * I before factoring; the exact zero matrix maps to zero.

    Returns
    -------
    ndarray
        Lower-triangular E, reconstruction error below 1e-9 relative.
    """
    a = np.asarray(shape, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky needs a square matrix")
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > 1e-10 * max(scale, 1.0):
        raise ValueError("cholesky needs a symmetric matrix")
    if scale == 0.0:
        return np.zeros_like(a)
    a = 0.5 * (a + a.T)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(a + 1e-12 * np.eye(a.shape[0]))


def enclosing_ball(e):
    """Smallest ball centered at the ellipsoid center containing it.

    The radius is the long semi-axis, sqrt of the largest shape eigenvalue.
    """
    lam_max = float(np.linalg.eigvalsh(e.shape)[-1])
    return Ball(e.center, np.sqrt(max(lam_max, 0.0)))


def minkowski_sum(boxes):
    """Componentwise sum of boxes; +inf upper bounds absorb.

    Parameters
    ----------
    boxes : sequence of Box, all of equal dimension
    """
    boxes = list(boxes)
    if not boxes:
        raise ValueError("need at least one box")
    dim = boxes[0].dim
    for b in boxes[1:]:
        if b.dim != dim:
            raise ValueError("boxes differ in dimension")
    lo = np.sum([b.lo for b in boxes], axis=0)
    hi = np.sum([b.hi for b in boxes], axis=0)
    return Box(lo, hi)


def contains(e, p, tol=1e-9):
    """Membership test for a point in an ellipsoid.

    Uses the pseudo-inverse for degenerate shapes and additionally requires
    the offset to lie in the shape's range in that case.
    """
    p = _as_vector(p)
    if p.size != e.dim:
        raise ValueError("point dimension mismatch")
    diff = p - e.center
    w, v = np.linalg.eigh(e.shape)
    lam_max = max(float(w[-1]), 0.0)
    if lam_max == 0.0:
        return bool(np.linalg.norm(diff) <= tol)
    nonzero = w > PSD_EIG_TOL * lam_max
    coords = v.T @ diff
    # range check: components along null directions must vanish
    resid = np.linalg.norm(coords[~nonzero])
    if resid > tol * (1.0 + np.linalg.norm(diff)) + np.sqrt(lam_max) * tol:
        return False
    quad = float(np.sum(coords[nonzero] ** 2 / w[nonzero]))
    return quad <= 1.0 + tol
