"""Command line front end: localize, simulate, sweep, and oracle checks."""

import argparse
import sys

import numpy as np

from . import geometry, harness, oracles, remainder, solver
from .alpha_interval import distance_extremes, f_interval
from .geometry import Ellipsoid, Interval, SourceSet
from .model import measure, sample_noise


def _add_common(parser):
    parser.add_argument("scenario", help="path to a scenario YAML file")
    parser.add_argument("--seed", type=int, default=0,
                        help="RNG seed (default 0)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="setloc",
        description="Guaranteed multi-source energy localization: bounding "
                    "sets from one measurement snapshot, plus the simulation "
                    "harness around it.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize",
                       help="bound the sources of one measurement vector")
    _add_common(p)
    p.add_argument("--measurements", required=True,
                   help="text file with one reading per sensor")
    p.add_argument("--algorithm", choices=("alg1", "alg2", "alg3"),
                   default="alg2")
    p.add_argument("--delta", type=float, default=1e-2,
                   help="stop when the set size decrease drops below this")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--out", help="also write the final sets as CSV here")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate",
                       help="draw noisy measurements for a scenario")
    _add_common(p)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep, CSV output")
    _add_common(p)
    p.add_argument("--algorithm", default="alg1,alg2,nls",
                   help="comma list out of alg1,alg2,alg3,nls")
    p.add_argument("--sweep", choices=harness.SWEEP_VARIABLES,
                   default="noise")
    p.add_argument("--values", default="2,4,6,8,10",
                   help="comma list of sweep values")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--out", default="results",
                   help="output directory (default ./results)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle",
                       help="brute-force validation of the bound machinery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_oracle)
    return parser


def cmd_localize(args):
    scenario = harness.load_scenario(args.scenario)
    y = np.loadtxt(args.measurements, ndmin=1)
    if y.shape != (scenario.num_sensors,):
        print("error: expected %d measurements, file has %d"
              % (scenario.num_sensors, y.size), file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    initial = harness.random_initial_sets(scenario, rng)
    config = solver.SolverConfig(args.algorithm, delta=args.delta,
                                 max_iterations=args.max_iterations,
                                 seed=args.seed)
    run = {"alg1": solver.run_alg1, "alg2": solver.run_alg2,
           "alg3": solver.run_alg3}[args.algorithm]
    final, trace = run(scenario, y, initial, config)
    print("iterations: %d   final size: %.6g   fallback events: %d"
          % (trace.num_iterations, solver.g_value(final),
             trace.fallback_count))
    for n, s in enumerate(final):
        eigs = np.linalg.eigvalsh(s.position.shape)
        print("source %d:" % n)
        print("  energy interval: [%.6g, %.6g]" % (s.energy.lo, s.energy.hi))
        print("  position center: %s"
              % np.array2string(s.position.center, precision=6))
        print("  shape eigenvalues: %s" % np.array2string(eigs, precision=6))
    if args.out:
        _write_sets(args.out, final)
        print("wrote %s" % args.out)
    return 0


def _write_sets(path, final):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("source", "energy_lo", "energy_hi", "center",
                         "shape"))
        for n, s in enumerate(final):
            writer.writerow((n, "%.10g" % s.energy.lo, "%.10g" % s.energy.hi,
                             " ".join("%.10g" % v for v in s.position.center),
                             " ".join("%.10g" % v
                                      for v in s.position.shape.ravel())))


def cmd_simulate(args):
    scenario = harness.load_scenario(args.scenario)
    if not scenario.true_sources:
        print("error: scenario has no sources to simulate", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    y = measure(scenario.true_sources, scenario,
                scenario.effective_decay()) + sample_noise(scenario.noise, rng)
    text = "\n".join("%.10g" % v for v in y) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args):
    algorithms = [a.strip() for a in args.algorithm.split(",") if a.strip()]
    values = [float(v) for v in args.values.split(",") if v.strip()]
    spec = harness.ExperimentSpec(
        args.scenario, algorithms, args.sweep, values, runs=args.runs,
        seed=args.seed, out_dir=args.out, delta=args.delta)
    rows = harness.run_experiment(spec)
    for row in rows:
        print(",".join(row.csv_values()))
    print("wrote %s/sweep_%s.csv" % (args.out, args.sweep))
    return 0


def cmd_oracle(args):
    rng = np.random.default_rng(args.seed)
    failures = 0
    failures += _oracle_outside(rng, args.trials)
    failures += _oracle_inside(rng, args.trials)
    failures += _oracle_distance(rng, max(args.trials // 4, 3))
    failures += _oracle_f_interval(rng, max(args.trials // 4, 3))
    print("oracle: %s" % ("all checks passed" if failures == 0
                          else "%d check(s) FAILED" % failures))
    return 0 if failures == 0 else 1


def _oracle_outside(rng, trials):
    worst = 0.0
    for _ in range(trials):
        inst = oracles.random_outside_instance(rng)
        iv = remainder.bound_analytic(inst["s_hat"], inst["S"], inst["ball"],
                                      inst["sensor"], inst["alpha"])
        lo, hi = oracles.grid_remainder_extremes(
            inst["s_hat"], inst["S"], inst["ball"].radius, inst["tau"],
            inst["alpha"], gain=inst["sensor"].gain)
        worst = max(worst, abs(iv.lo - lo), abs(iv.hi - hi))
    ok = worst <= 1e-6
    print("%s remainder bounds, sensor outside: worst gap %.3g vs grid "
          "oracle (%d instances)" % ("ok  " if ok else "FAIL", worst, trials))
    return 0 if ok else 1


def _oracle_inside(rng, trials):
    worst = 0.0
    for _ in range(trials):
        inst = oracles.random_inside_instance(rng)
        iv = remainder.bound_analytic_inside(
            inst["s_hat"], inst["S"], inst["ball"], inst["sensor"],
            inst["alpha"])
        lo, _ = oracles.grid_remainder_extremes(
            inst["s_hat"], inst["S"], inst["ball"].radius, inst["tau"],
            inst["alpha"], gain=inst["sensor"].gain)
        if not np.isinf(iv.hi):
            worst = np.inf
        worst = max(worst, abs(iv.lo - lo))
    ok = worst <= 1e-5
    print("%s remainder bounds, sensor inside: worst lower-bound gap %.3g "
          "(%d instances)" % ("ok  " if ok else "FAIL", worst, trials))
    return 0 if ok else 1


def _oracle_distance(rng, trials):
    worst_violation = 0.0
    worst_slack = 0.0
    for _ in range(trials):
        center = rng.uniform(-30, 30, 2)
        a = rng.normal(size=(2, 2))
        shape = a @ a.T + 0.5 * np.eye(2)
        e = Ellipsoid(center, 4.0 * shape)
        point = rng.uniform(-50, 50, 2)
        lo, hi = distance_extremes(e, point)
        dists = _sample_distances(e, point, rng, 10000)
        worst_violation = max(worst_violation, lo - dists.min(),
                              dists.max() - hi)
        worst_slack = max(worst_slack, dists.min() - lo, hi - dists.max())
    ok = worst_violation <= 1e-9 and worst_slack <= 1e-4
    print("%s distance extremes: max violation %.3g, max slack %.3g "
          "(%d instances x 10^4 samples)"
          % ("ok  " if ok else "FAIL", worst_violation, worst_slack, trials))
    return 0 if ok else 1


def _sample_distances(e, point, rng, count):
    factor = geometry.cholesky(e.shape)
    dirs = rng.standard_normal((count, e.dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = e.center + dirs @ factor.T  # boundary, where extremes live
    return np.linalg.norm(pts - point, axis=1)


def _oracle_f_interval(rng, trials):
    violations = 0
    for _ in range(trials):
        inst = oracles.random_outside_instance(rng)
        energy = Interval(inst["s_hat"] - inst["S"], inst["s_hat"] + inst["S"])
        shape = inst["ball"].radius ** 2 * np.eye(2)
        e = Ellipsoid(inst["ball"].center, shape)
        alphas = sorted((inst["alpha"], min(inst["alpha"] + 0.4, 4.0)))
        iv = f_interval(energy, e, inst["sensor"].position,
                        inst["sensor"].gain, alphas)
        s, rho = oracles.sample_source_set(SourceSet(energy, e), 10000, rng)
        alpha = rng.uniform(alphas[0], alphas[1], s.shape)
        dist = np.linalg.norm(rho - inst["sensor"].position, axis=1)
        vals = inst["sensor"].gain * s / dist ** alpha
        violations += int(np.sum((vals < iv.lo - 1e-9)
                                 | (vals > iv.hi + 1e-9)))
    ok = violations == 0
    print("%s contribution intervals: %d violations "
          "(%d instances x 10^4 samples)"
          % ("ok  " if ok else "FAIL", violations, trials))
    return 0 if ok else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
