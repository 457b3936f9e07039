"""Command line entry point: ``vnfqueue {solve,simulate,sweep,check,export} CONFIG``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

import numpy as np

from . import analysis, experiments, simulator, solver
from .cost_model import load_config


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _dump(obj, path):
    with _output(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solve(cfg):
    return solver.value_iteration(cfg.params, cfg.solver.get("tol", 1e-9),
                                  cfg.solver.get("max_iters", 200_000))


def cmd_solve(args):
    cfg = load_config(args.config)
    res = _solve(cfg)
    with _output(args.output) as fh:
        solver.write_solution_csv(fh, res.values, res.policy, cfg.params.space)
    if args.summary:
        _dump({**res.summary(), "value_bound": cfg.params.value_bound(),
               "states": cfg.params.space.size}, args.summary)


def cmd_simulate(args):
    cfg = load_config(args.config)
    params, sim = cfg.params, cfg.sim
    policy_path = args.policy or sim.get("policy")
    if policy_path:
        with open(policy_path, newline="") as fh:
            _, policy = solver.read_solution_csv(fh, params.space)
    else:
        policy = _solve(cfg).policy
    initial = tuple(sim.get("initial_state", (-1,) * params.n))
    est = simulator.estimate_value(policy, params, initial, int(sim.get("replications", 2000)),
                                   int(sim.get("seed", 0)), sim.get("truncation_epsilon"))
    _dump(est.to_dict(), args.output)
    if args.event_log:
        rows = []
        # replays replication 0 of the estimate
        child = np.random.SeedSequence(est.seed).spawn(1)[0]
        simulator.simulate_once(policy, params, initial, np.random.Generator(np.random.PCG64(child)),
                                est.truncation_epsilon, rows)
        with _output(args.event_log) as fh:
            simulator.write_event_log(fh, rows)


def cmd_sweep(args):
    cfg = load_config(args.config)
    spec = experiments.SweepSpec.from_section(cfg.sweep, cfg.params, cfg.solver)
    rows = experiments.run_sweep(spec)
    with _output(args.output) as fh:
        experiments.write_sweep_csv(fh, rows, spec.parameter)
    if args.meta:
        with _output(args.meta) as fh:
            experiments.write_sweep_metadata(fh, spec)


def cmd_check(args):
    cfg = load_config(args.config)
    res = _solve(cfg)
    tol = cfg.solver.get("tol", 1e-9)
    dom = analysis.check_domination(res.values, cfg.params.space, tol)
    thr = analysis.check_build_threshold(res.values, cfg.params, same_idle=not args.unrestricted)
    _dump({"domination": dom.to_dict(), "build_threshold": thr.to_dict(), "solver": res.summary()},
          args.output)


def cmd_export(args):
    cfg = load_config(args.config)
    res = _solve(cfg)
    with _output(args.output) as fh:
        experiments.export_value_surface(res.values, cfg.params.space, fh)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnfqueue", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="value iteration; writes the value/policy table as CSV")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.add_argument("--summary", help="JSON summary path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte-Carlo value estimate of a policy")
    p.add_argument("config")
    p.add_argument("--policy", help="solution CSV from 'solve' (default: solve first)")
    p.add_argument("-o", "--output", help="JSON path (default stdout)")
    p.add_argument("--event-log", help="CSV event log of the first replication")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one-parameter sweep; writes one CSV row per value")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.add_argument("--meta", help="JSON metadata path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="domination and build-threshold reports as JSON")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="JSON path (default stdout)")
    p.add_argument("--unrestricted", action="store_true",
                   help="threshold pairs need not share their inactive queues")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", help="value surface CSV in state-index order")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    args.func(args)
    return 0
