"""Acoustic energy attenuation model.

A source with energy s at position rho contributes g * s / ||rho - r||^alpha
to the reading of a sensor at r with gain g. This module provides the
measurement map, its Jacobian, the first-order Taylor remainder and bounded
noise generation. All functions are pure; noise sampling takes an explicit
generator so Monte Carlo runs can use independent streams.
"""

import numpy as np

# Below this source-sensor distance the model is treated as singular.
MIN_DISTANCE = 1e-6


class SingularityError(ValueError):
    """A source sits on (or numerically at) a sensor position."""


class Sensor:
    """Sensor with a position and a positive gain."""

    __slots__ = ("position", "gain")

    def __init__(self, position, gain=1.0):
        position = np.asarray(position, dtype=float)
        gain = float(gain)
        if gain <= 0:
            raise ValueError("sensor gain must be positive")
        position.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "gain", gain)

    def __setattr__(self, *_):
        raise AttributeError("Sensor is immutable")

    def __repr__(self):
        return "Sensor(position=%s, gain=%g)" % (self.position.tolist(), self.gain)


class SourceState:
    """True or hypothesized source: positive energy and a position."""

    __slots__ = ("energy", "position")

    def __init__(self, energy, position):
        energy = float(energy)
        if energy < 0:
            raise ValueError("source energy must be nonnegative")
        position = np.asarray(position, dtype=float)
        position.setflags(write=False)
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "position", position)

    def __setattr__(self, *_):
        raise AttributeError("SourceState is immutable")

    def __repr__(self):
        return "SourceState(energy=%g, position=%s)" % (self.energy,
                                                        self.position.tolist())


class NoiseModel:
    """Bounded measurement noise confined to the box [-b/2, +b/2] per sensor.

    Parameters
    ----------
    kind : str
        "truncated_gaussian_mixture" or "uniform".
    b : array_like
        Per-sensor box widths (box is [-b_l/2, +b_l/2]).

    The mixture places equal-weight Gaussians at the box edges -b/2 and +b/2
    with standard deviation b/6, truncated to the box.
    """

    KINDS = ("truncated_gaussian_mixture", "uniform")

    __slots__ = ("kind", "b")

    def __init__(self, kind, b):
        if kind not in self.KINDS:
            raise ValueError("unknown noise kind %r" % kind)
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise ValueError("noise widths must be nonnegative")
        b.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "b", b)

    def __setattr__(self, *_):
        raise AttributeError("NoiseModel is immutable")

    def with_width(self, b):
        """Same kind, new per-sensor widths (scalar broadcasts)."""
        b = np.broadcast_to(np.asarray(b, dtype=float), self.b.shape).copy()
        return NoiseModel(self.kind, b)


class Scenario:
    """Sensors, decay factor, noise model and (for simulation) true sources.

    decay is either a known positive float or an interval (lo, hi) inside
    [2, 4] when the attenuation exponent is only known to within bounds.
    """

    __slots__ = ("sensors", "dimension", "decay", "noise", "true_sources", "field")

    def __init__(self, sensors, dimension, decay, noise, true_sources=(), field=(100.0, 100.0)):
        sensors = tuple(sensors)
        if not sensors:
            raise ValueError("need at least one sensor")
        for s in sensors:
            if s.position.size != dimension:
                raise ValueError("sensor dimension mismatch")
        if dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if isinstance(decay, (tuple, list)):
            lo, hi = float(decay[0]), float(decay[1])
            if not (2.0 <= lo <= hi <= 4.0):
                raise ValueError("decay interval must sit inside [2, 4]")
            decay = (lo, hi)
        else:
            decay = float(decay)
            if decay <= 0:
                raise ValueError("decay factor must be positive")
        if noise.b.size != len(sensors):
            raise ValueError("noise width count must equal sensor count")
        true_sources = tuple(true_sources)
        for src in true_sources:
            if src.position.size != dimension:
                raise ValueError("source dimension mismatch")
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "dimension", dimension)
        object.__setattr__(self, "decay", decay)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "true_sources", true_sources)
        object.__setattr__(self, "field", tuple(float(v) for v in field))

    def __setattr__(self, *_):
        raise AttributeError("Scenario is immutable")

    @property
    def num_sensors(self):
        return len(self.sensors)

    @property
    def noise_box(self):
        from .geometry import Box
        half = self.noise.b / 2.0
        return Box(-half, half)

    @property
    def decay_is_interval(self):
        return isinstance(self.decay, tuple)

    def effective_decay(self):
        """Decay value used to generate data: midpoint when intervalued."""
        if self.decay_is_interval:
            return 0.5 * (self.decay[0] + self.decay[1])
        return self.decay

    def with_sensors(self, sensors):
        sensors = tuple(sensors)
        noise = self.noise
        if noise.b.size != len(sensors):
            width = float(noise.b[0]) if noise.b.size else 0.0
            noise = NoiseModel(noise.kind, np.full(len(sensors), width))
        return Scenario(sensors, self.dimension, self.decay, noise,
                        self.true_sources, self.field)

    def with_noise(self, noise):
        return Scenario(self.sensors, self.dimension, self.decay, noise,
                        self.true_sources, self.field)

    def with_sources(self, true_sources):
        return Scenario(self.sensors, self.dimension, self.decay, self.noise,
                        true_sources, self.field)


def _distance(rho, r):
    d = float(np.linalg.norm(rho - r))
    if d < MIN_DISTANCE:
        raise SingularityError("source within %g m of a sensor" % MIN_DISTANCE)
    return d


def energy_term(source, sensor, alpha):
    """Contribution g * s / ||rho - r||^alpha of one source at one sensor."""
    d = _distance(source.position, sensor.position)
    return sensor.gain * source.energy / d ** alpha


def measure(states, scenario, alpha):
    """Noise-free readings, one per sensor; adding noise is the caller's job."""
    y = np.zeros(scenario.num_sensors)
    for l, sensor in enumerate(scenario.sensors):
        y[l] = sum(energy_term(src, sensor, alpha) for src in states)
    return y


def state_vector(states):
    """Stack per-source states as [s_1, rho_1, s_2, rho_2, ...]."""
    return np.concatenate([[src.energy, *src.position] for src in states])


def states_from_vector(x, dimension):
    """Inverse of state_vector."""
    step = dimension + 1
    if x.size % step:
        raise ValueError("state vector length %d not a multiple of %d" % (x.size, step))
    return [SourceState(x[i], x[i + 1:i + step]) for i in range(0, x.size, step)]


def jacobian(states, scenario, alpha):
    """Derivative of the measurement map at the given states.

    Returns an L x (d+1)N matrix with block structure: columns of block n are
    [df/ds_n, df/drho_n] and depend only on source n.
    """
    d = scenario.dimension
    n_src = len(states)
    jac = np.zeros((scenario.num_sensors, (d + 1) * n_src))
    for l, sensor in enumerate(scenario.sensors):
        for n, src in enumerate(states):
            dist = _distance(src.position, sensor.position)
            col = n * (d + 1)
            jac[l, col] = sensor.gain / dist ** alpha
            diff = src.position - sensor.position
            jac[l, col + 1:col + 1 + d] = (-alpha * sensor.gain * src.energy
                                           * diff / dist ** (alpha + 2))
    return jac


def remainder(states, point, scenario, alpha):
    """First-order Taylor remainder f(x) - f(x_hat) - J(x_hat) (x - x_hat)."""
    jac = jacobian(point, scenario, alpha)
    dx = state_vector(states) - state_vector(point)
    return measure(states, scenario, alpha) - measure(point, scenario, alpha) - jac @ dx


def sample_noise(model, rng):
    """One noise vector, every component inside [-b_l/2, +b_l/2].

    The truncated mixture draws a component centered at an edge (+-b/2,
    sigma = b/6) and rejects draws that leave the box; acceptance is about
    one half per draw, so the loop is short.
    """
    b = model.b
    out = np.zeros(b.size)
    if model.kind == "uniform":
        mask = b > 0
        out[mask] = rng.uniform(-b[mask] / 2.0, b[mask] / 2.0)
        return out
    for l in range(b.size):
        if b[l] == 0.0:
            continue
        mu = 0.5 * b[l] * (1.0 if rng.random() < 0.5 else -1.0)
        sigma = b[l] / 6.0
        while True:
            v = rng.normal(mu, sigma)
            if -0.5 * b[l] <= v <= 0.5 * b[l]:
                out[l] = v
                break
    return out


def grid_sensor_positions(count, field=(100.0, 100.0)):
    """A k x k grid of sensor positions spanning the field, count = k*k."""
    k = int(round(np.sqrt(count)))
    if k * k != count:
        raise ValueError("grid layout needs a square sensor count, got %d" % count)
    xs = np.linspace(-field[0] / 2.0, field[0] / 2.0, k)
    ys = np.linspace(-field[1] / 2.0, field[1] / 2.0, k)
    return [np.array([x, y]) for y in ys for x in xs]
