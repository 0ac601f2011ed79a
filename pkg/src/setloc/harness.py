"""Scenario files, Monte Carlo experiments, scoring, and CSV output.

Experiments are paired: within one run, every algorithm sees the same
measurements and the same initial sets, so sweep comparisons are not
contaminated by draw-to-draw variance. Workers receive only plain
dictionaries and rebuild their objects, which keeps runs independent and
results reproducible for a fixed seed regardless of scheduling. Wall-clock
means go to a separate timings file so the main tables are byte-stable.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import baseline, geometry, solver
from .geometry import Ellipsoid, Interval, SourceSet
from .model import (NoiseModel, Scenario, Sensor, SourceState,
                    grid_sensor_positions, measure, sample_noise)

BALL_RADIUS = 7.0
ENERGY_HALF_WIDTH = 100.0
INTERIOR_MARGIN = 0.999
SWEEP_VARIABLES = ("noise", "sensor_count", "source_spacing",
                   "max_iterations")
ALGORITHMS = ("alg1", "alg2", "alg3", "nls")


class ScenarioError(ValueError):
    """Raised when a scenario file fails validation; names the field."""


# -- scenario files ----------------------------------------------------------

def _need(mapping, key, where, kind=None):
    if key not in mapping:
        raise ScenarioError("scenario field %r: missing under %s" % (key, where))
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError("scenario field %s.%s: expected %s, got %r"
                            % (where, key, kind.__name__, value))
    return value


def _numbers(value, count, where):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ScenarioError("scenario field %s: expected a number list, got %r"
                            % (where, value))
    if count is not None and len(out) != count:
        raise ScenarioError("scenario field %s: expected %d numbers, got %d"
                            % (where, count, len(out)))
    return out


def _parse_sensors(mapping, dimension, field):
    if not isinstance(mapping, dict):
        raise ScenarioError("scenario field 'sensors': expected a mapping")
    if "positions" in mapping:
        raw = mapping["positions"]
        if not raw:
            raise ScenarioError("scenario field 'sensors.positions': empty")
        positions = [_numbers(p, dimension, "sensors.positions[%d]" % i)
                     for i, p in enumerate(raw)]
    elif mapping.get("layout") == "grid":
        count = int(_need(mapping, "count", "sensors"))
        try:
            positions = [p.tolist()
                         for p in grid_sensor_positions(count, field)]
        except ValueError as exc:
            raise ScenarioError("scenario field 'sensors.count': %s" % exc)
    else:
        raise ScenarioError("scenario field 'sensors': need positions or "
                            "layout: grid with count")
    gains = mapping.get("gains")
    if gains is None:
        gain = float(mapping.get("gain", 1.0))
        gains = [gain] * len(positions)
    else:
        gains = _numbers(gains, len(positions), "sensors.gains")
    for i, g in enumerate(gains):
        if g <= 0:
            raise ScenarioError("scenario field sensors.gains[%d]: must be "
                                "positive" % i)
    return tuple(Sensor(p, g) for p, g in zip(positions, gains))


def _parse_noise(mapping, num_sensors):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ScenarioError("scenario field 'noise': expected a mapping")
    kind = mapping.get("kind", "truncated_gaussian_mixture")
    b = mapping.get("b", 4.0)
    if isinstance(b, (int, float)):
        widths = np.full(num_sensors, float(b))
    else:
        widths = np.array(_numbers(b, num_sensors, "noise.b"))
    if np.any(widths < 0):
        raise ScenarioError("scenario field 'noise.b': widths must be >= 0")
    try:
        return NoiseModel(kind, widths)
    except ValueError as exc:
        raise ScenarioError("scenario field 'noise.kind': %s" % exc)


def _parse_decay(value):
    if isinstance(value, (int, float)):
        decay = float(value)
        if decay <= 0:
            raise ScenarioError("scenario field 'decay': must be positive")
        return decay
    lo, hi = _numbers(value, 2, "decay")
    if not (2.0 <= lo <= hi <= 4.0):
        raise ScenarioError("scenario field 'decay': interval must satisfy "
                            "2 <= lo <= hi <= 4, got [%g, %g]" % (lo, hi))
    return (lo, hi)


def _parse_sources(raw, dimension):
    if raw is None:
        return ()
    sources = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ScenarioError("scenario field 'sources[%d]': expected a "
                                "mapping" % i)
        energy = float(_need(entry, "energy", "sources[%d]" % i))
        if energy <= 0:
            raise ScenarioError("scenario field 'sources[%d].energy': must "
                                "be positive" % i)
        position = _numbers(_need(entry, "position", "sources[%d]" % i),
                            dimension, "sources[%d].position" % i)
        sources.append(SourceState(energy, position))
    return tuple(sources)


def scenario_from_mapping(mapping):
    """Build a validated Scenario from a plain configuration mapping."""
    if not isinstance(mapping, dict):
        raise ScenarioError("scenario file: top level must be a mapping")
    field = tuple(_numbers(mapping.get("field", [100.0, 100.0]), 2, "field"))
    dimension = int(mapping.get("dimension", 2))
    if dimension not in (2, 3):
        raise ScenarioError("scenario field 'dimension': expected 2 or 3")
    decay = _parse_decay(mapping.get("decay", 2.0))
    sensors = _parse_sensors(_need(mapping, "sensors", "top level"),
                             dimension, field)
    noise = _parse_noise(mapping.get("noise"), len(sensors))
    sources = _parse_sources(mapping.get("sources"), dimension)
    return Scenario(sensors, dimension, decay, noise, true_sources=sources,
                    field=field)


def scenario_to_mapping(scenario):
    """Inverse of scenario_from_mapping, for worker hand-off."""
    return {
        "field": list(scenario.field),
        "dimension": scenario.dimension,
        "decay": (list(scenario.decay) if scenario.decay_is_interval
                  else scenario.decay),
        "sensors": {
            "positions": [s.position.tolist() for s in scenario.sensors],
            "gains": [s.gain for s in scenario.sensors],
        },
        "noise": {"kind": scenario.noise.kind,
                  "b": scenario.noise.b.tolist()},
        "sources": [{"energy": s.energy, "position": s.position.tolist()}
                    for s in scenario.true_sources],
    }


def load_scenario(path):
    """Read and validate a YAML scenario file.

    Raises
    ------
    ScenarioError
        Naming the offending field on any schema violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            mapping = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError("scenario file %s: %s" % (path, exc))
    try:
        return scenario_from_mapping(mapping)
    except ScenarioError as exc:
        raise ScenarioError("%s (in %s)" % (exc, path))


# -- initial sets ------------------------------------------------------------

def random_initial_sets(scenario, rng):
    """Random initial bounds guaranteed to contain each true source.

    Energy: interval of half-width 100 whose center is drawn uniformly
    around the truth. Position: ball of radius 7 whose center is drawn
    uniformly over the disk of radius 7 around the truth. Both keep the
    truth strictly interior.
    """
    if not scenario.true_sources:
        raise ValueError("scenario has no true sources")
    d = scenario.dimension
    sets = []
    for src in scenario.true_sources:
        offset = ENERGY_HALF_WIDTH * INTERIOR_MARGIN * rng.uniform(-1.0, 1.0)
        center = src.energy + offset
        energy = Interval(center - ENERGY_HALF_WIDTH,
                          center + ENERGY_HALF_WIDTH)
        direction = rng.standard_normal(d)
        norm = np.linalg.norm(direction)
        if norm == 0:
            direction = np.zeros(d)
            direction[0] = 1.0
            norm = 1.0
        radius = BALL_RADIUS * INTERIOR_MARGIN * rng.uniform() ** (1.0 / d)
        pos_center = src.position + radius * direction / norm
        position = Ellipsoid(pos_center, BALL_RADIUS ** 2 * np.eye(d))
        sets.append(SourceSet(energy, position))
    return sets


# -- experiment specification -------------------------------------------------

class ExperimentSpec:
    """One Monte Carlo sweep: what to vary, how often, where to write."""

    __slots__ = ("scenario_mapping", "algorithms", "sweep", "values", "runs",
                 "seed", "out_dir", "delta", "max_iterations", "sample_count",
                 "inflation", "workers")

    def __init__(self, scenario, algorithms, sweep, values, runs=200, seed=0,
                 out_dir=None, delta=1e-2, max_iterations=50,
                 sample_count=None, inflation=1.1, workers=None):
        if isinstance(scenario, Scenario):
            mapping = scenario_to_mapping(scenario)
        elif isinstance(scenario, dict):
            mapping = scenario_to_mapping(scenario_from_mapping(scenario))
        else:
            mapping = scenario_to_mapping(load_scenario(scenario))
        if not mapping["sources"]:
            raise ValueError("experiments need true sources in the scenario")
        algorithms = tuple(algorithms)
        for a in algorithms:
            if a not in ALGORITHMS:
                raise ValueError("unknown algorithm %r" % (a,))
        if sweep not in SWEEP_VARIABLES:
            raise ValueError("unknown sweep variable %r" % (sweep,))
        values = tuple(float(v) for v in values)
        if not values:
            raise ValueError("sweep values must be non-empty")
        if int(runs) < 1:
            raise ValueError("need at least one run")
        object.__setattr__(self, "scenario_mapping", mapping)
        object.__setattr__(self, "algorithms", algorithms)
        object.__setattr__(self, "sweep", sweep)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "runs", int(runs))
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "out_dir", out_dir)
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "max_iterations", int(max_iterations))
        object.__setattr__(self, "sample_count", sample_count)
        object.__setattr__(self, "inflation", float(inflation))
        object.__setattr__(self, "workers", workers)

    def __setattr__(self, *_):
        raise AttributeError("ExperimentSpec is immutable")


class ResultRow:
    """Aggregated scores for one sweep value and algorithm."""

    FIELDS = ("sweep_variable", "sweep_value", "algorithm", "runs",
              "mse_position", "mse_energy", "mean_final_size",
              "containment_rate", "flagged_runs")

    def __init__(self, sweep_variable, sweep_value, algorithm, runs,
                 mse_position, mse_energy, mean_final_size, containment_rate,
                 flagged_runs, mean_wallclock=None):
        self.sweep_variable = sweep_variable
        self.sweep_value = float(sweep_value)
        self.algorithm = algorithm
        self.runs = int(runs)
        self.mse_position = float(mse_position)
        self.mse_energy = float(mse_energy)
        self.mean_final_size = float(mean_final_size)
        self.containment_rate = (None if containment_rate is None
                                 else float(containment_rate))
        self.flagged_runs = int(flagged_runs)
        self.mean_wallclock = mean_wallclock

    def csv_values(self):
        return [self.sweep_variable, "%.10g" % self.sweep_value,
                self.algorithm, str(self.runs), "%.10g" % self.mse_position,
                "%.10g" % self.mse_energy, "%.10g" % self.mean_final_size,
                "" if self.containment_rate is None
                else "%.10g" % self.containment_rate, str(self.flagged_runs)]

    @classmethod
    def from_csv_values(cls, row):
        return cls(row[0], float(row[1]), row[2], int(row[3]), float(row[4]),
                   float(row[5]), float(row[6]),
                   None if row[7] == "" else float(row[7]), int(row[8]))

    def __eq__(self, other):
        return isinstance(other, ResultRow) and self.csv_values() == other.csv_values()


# -- one run -----------------------------------------------------------------

def _apply_sweep(scenario, variable, value):
    if variable == "noise":
        return scenario.with_noise(scenario.noise.with_width(value)), {}
    if variable == "sensor_count":
        positions = grid_sensor_positions(int(round(value)), scenario.field)
        sensors = tuple(Sensor(p, scenario.sensors[0].gain)
                        for p in positions)
        noise = NoiseModel(scenario.noise.kind,
                           np.full(len(sensors), scenario.noise.b[0]))
        return scenario.with_sensors(sensors).with_noise(noise), {}
    if variable == "source_spacing":
        sources = scenario.true_sources
        if len(sources) != 2:
            raise ValueError("source spacing sweep needs exactly two sources")
        mid = 0.5 * (sources[0].position + sources[1].position)
        gap = sources[1].position - sources[0].position
        norm = np.linalg.norm(gap)
        direction = gap / norm if norm > 0 else np.eye(scenario.dimension)[0]
        half = 0.5 * value * direction
        moved = (SourceState(sources[0].energy, mid - half),
                 SourceState(sources[1].energy, mid + half))
        return scenario.with_sources(moved), {}
    if variable == "max_iterations":
        return scenario, {"max_iterations": int(round(value)), "delta": 1e-12}
    raise ValueError("unknown sweep variable %r" % (variable,))


def _matched_squared_errors(states, truth):
    return baseline.PointEstimate(states, 0.0, 0, False).squared_errors(truth)


def _center_states(sources):
    return [SourceState(max(s.energy.center, 0.0), s.position.center)
            for s in sources]


def _contains_truth(sources, truth):
    for s, t in zip(sources, truth):
        if not s.energy.contains(t.energy):
            return False
        if not geometry.contains(s.position, t.position):
            return False
    return True


def run_once(scenario, algorithms, rng, delta=1e-2, max_iterations=50,
             sample_count=None, inflation=1.1):
    """Simulate one measurement and localize with each algorithm.

    All algorithms share the measurement and the initial sets. Returns a
    dict keyed by algorithm with per-run metrics.
    """
    truth = scenario.true_sources
    alpha_true = scenario.effective_decay()
    noise = sample_noise(scenario.noise, rng)
    y = measure(truth, scenario, alpha_true) + noise
    initial = random_initial_sets(scenario, rng)
    out = {}
    for algorithm in algorithms:
        started = time.perf_counter()
        try:
            if algorithm == "nls":
                estimate = baseline.nls_estimate(scenario, y,
                                                 _center_states(initial))
                pos_sq, eng_sq = estimate.squared_errors(truth)
                out[algorithm] = {
                    "mse_position": pos_sq, "mse_energy": eng_sq,
                    "final_size": np.nan, "contained": None,
                    "flagged": estimate.diverged,
                }
            else:
                config = solver.SolverConfig(
                    algorithm, delta=delta, max_iterations=max_iterations,
                    sample_count=sample_count, inflation=inflation,
                    seed=rng.integers(2 ** 63))
                run = {"alg1": solver.run_alg1, "alg2": solver.run_alg2,
                       "alg3": solver.run_alg3}[algorithm]
                final, trace = run(scenario, y, initial, config, truth)
                pos_sq, eng_sq = _matched_squared_errors(
                    _center_states(final), truth)
                out[algorithm] = {
                    "mse_position": pos_sq, "mse_energy": eng_sq,
                    "final_size": solver.g_value(final),
                    "contained": _contains_truth(final, truth),
                    "flagged": trace.fallback_count > 0,
                }
        except Exception:
            out[algorithm] = {"mse_position": np.nan, "mse_energy": np.nan,
                              "final_size": np.nan, "contained": None,
                              "flagged": True}
        out[algorithm]["wallclock"] = time.perf_counter() - started
    return out


def _run_task(payload):
    mapping, variable, value, algorithms, options, seed_seq = payload
    scenario = scenario_from_mapping(mapping)
    scenario, overrides = _apply_sweep(scenario, variable, value)
    merged = dict(options)
    merged.update(overrides)
    rng = np.random.default_rng(seed_seq)
    return run_once(scenario, algorithms, rng, **merged)


# -- the sweep ---------------------------------------------------------------

def run_experiment(spec):
    """Run the full sweep and aggregate one ResultRow per cell.

    Writes `sweep_<variable>.csv` (deterministic for a fixed seed) and
    `timings_<variable>.csv` (wall-clock means) when an output directory is
    set. Individual run failures are flagged, never fatal.
    """
    options = {"delta": spec.delta, "max_iterations": spec.max_iterations,
               "sample_count": spec.sample_count, "inflation": spec.inflation}
    children = np.random.SeedSequence(spec.seed).spawn(
        len(spec.values) * spec.runs)
    payloads = []
    for vi, value in enumerate(spec.values):
        for r in range(spec.runs):
            payloads.append((spec.scenario_mapping, spec.sweep, value,
                             spec.algorithms, options,
                             children[vi * spec.runs + r]))

    workers = spec.workers if spec.workers is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(payloads) == 1:
        results = [_run_task(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, payloads, chunksize=4))

    rows = []
    for vi, value in enumerate(spec.values):
        cell = results[vi * spec.runs:(vi + 1) * spec.runs]
        for algorithm in spec.algorithms:
            metrics = [run[algorithm] for run in cell]
            pos = np.array([m["mse_position"] for m in metrics])
            eng = np.array([m["mse_energy"] for m in metrics])
            size = np.array([m["final_size"] for m in metrics])
            contained = [m["contained"] for m in metrics
                         if m["contained"] is not None]
            rate = (sum(contained) / len(contained)) if contained else None
            rows.append(ResultRow(
                spec.sweep, value, algorithm, spec.runs,
                _finite_mean(pos), _finite_mean(eng), _finite_mean(size),
                rate, sum(1 for m in metrics if m["flagged"]),
                mean_wallclock=float(np.mean(
                    [m["wallclock"] for m in metrics]))))

    if spec.out_dir:
        os.makedirs(spec.out_dir, exist_ok=True)
        write_rows(os.path.join(spec.out_dir, "sweep_%s.csv" % spec.sweep),
                   rows)
        _write_timings(os.path.join(spec.out_dir,
                                    "timings_%s.csv" % spec.sweep), rows)
    return rows


def _finite_mean(values):
    finite = values[np.isfinite(values)]
    return float(finite.mean()) if finite.size else float("nan")


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ResultRow.FIELDS)
        for row in rows:
            writer.writerow(row.csv_values())


def read_rows(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ResultRow.FIELDS:
            raise ValueError("unexpected result header in %s" % path)
        return [ResultRow.from_csv_values(row) for row in reader]


def _write_timings(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("sweep_variable", "sweep_value", "algorithm",
                         "mean_wallclock_s"))
        for row in rows:
            writer.writerow((row.sweep_variable, "%.10g" % row.sweep_value,
                             row.algorithm, "%.6f" % row.mean_wallclock))
