"""Command-line interface: single solves and grid-refinement studies."""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .coupling import parse_coupling
from .harness import (PRESET_NAMES, ExperimentConfig, error_study, preset_config,
                      run_preset, study_to_csv)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--preset", choices=PRESET_NAMES, default=None,
                        help="experiment or network preset")
    parser.add_argument("--network", metavar="PATH", default=None,
                        help="network description (JSON)")
    parser.add_argument("--nodes", type=int, default=None,
                        help="intervals per edge (default 250)")
    parser.add_argument("--levels", type=int, default=None,
                        help="generations of the self-similar preset")
    parser.add_argument("--nu", type=float, default=None,
                        help="uniform diffusion coefficient")
    parser.add_argument("--beta", type=float, default=None,
                        help="Hamiltonian growth exponent (default 2)")
    parser.add_argument("--ham-scale", type=float, default=None,
                        help="gradient flux prefactor (default 1/beta)")
    parser.add_argument("--cost-switches", default=None, metavar="S0,S1,...",
                        help="per-edge cost switches, e.g. 1,0,0")
    parser.add_argument("--cost-file", default=None, metavar="PATH",
                        help="CSV of per-node cost samples (edge,k,value)")
    parser.add_argument("--coupling", default=None,
                        help="power:<gamma> or arctan (default power:2)")
    parser.add_argument("--epsilon", type=float, default=None,
                        help="stopping tolerance on the step norm")
    parser.add_argument("--alpha", type=float, default=None,
                        help="damping parameter in (0, 1] (default 0.9)")
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--backend", choices=("auto", "dense", "banded"),
                        default=None, help="least-squares backend")
    parser.add_argument("--log", metavar="PATH", default=None,
                        help="write the iteration history as JSON")


def _load_cost_samples(path: str) -> dict:
    samples: dict[str, dict[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("edge", "#"):
                continue
            samples.setdefault(row[0], {})[int(row[1])] = float(row[2])
    out = {}
    for eid, by_k in samples.items():
        n = max(by_k)
        missing = set(range(n + 1)) - set(by_k)
        if missing:
            raise ValueError(f"cost file misses nodes {sorted(missing)} on {eid!r}")
        out[eid] = [by_k[k] for k in range(n + 1)]
    return out


def _config_from_args(args) -> ExperimentConfig:
    config = preset_config(args.preset) if args.preset else ExperimentConfig()
    if args.network:
        config.network_path = args.network
        if args.nu is None:
            config.nu = None        # keep the file's per-edge diffusion
    for name, attr in (("nodes", "nodes"), ("levels", "levels"), ("nu", "nu"),
                       ("beta", "beta"), ("ham_scale", "ham_scale"),
                       ("epsilon", "epsilon"),
                       ("alpha", "alpha"), ("max_iter", "max_iter"),
                       ("backend", "backend")):
        val = getattr(args, name)
        if val is not None:
            setattr(config, attr, val)
    if args.cost_switches is not None:
        config.switches = tuple(float(s) for s in args.cost_switches.split(","))
    if args.cost_file is not None:
        config.cost_samples = _load_cost_samples(args.cost_file)
    if args.coupling is not None:
        config.coupling = parse_coupling(args.coupling)
    return config


def cmd_solve(args) -> int:
    config = _config_from_args(args)
    result = run_preset(config, out=args.out, fmt=args.format,
                        log=args.log, dump=args.dump_system)
    s = result.summary
    status = "converged" if s["converged"] else "NOT CONVERGED"
    print(f"{s['preset']}: {status} in {s['iterations']} iterations "
          f"(||F|| = {result.report.final_residual_norm:.3e})")
    print(f"  lambda = {s['lambda']:.6f}   min M = {s['min_m']:.3f}   "
          f"max M = {s['max_m']:.3f}")
    print(f"  coupling: {s['coupling']}")
    if args.out:
        print(f"  solution written to {args.out}")
    return 0 if s["converged"] else 1


def cmd_study(args) -> int:
    config = _config_from_args(args)
    if args.preset is None:
        config = preset_config("test1")
        config.epsilon = 1e-8
        cli_overrides = _config_from_args(args)
        for f in ("nu", "beta", "alpha", "max_iter", "backend"):
            setattr(config, f, getattr(cli_overrides, f))
        if args.epsilon is not None:
            config.epsilon = args.epsilon
        if args.coupling is not None:
            config.coupling = cli_overrides.coupling
        if args.cost_switches is not None:
            config.switches = cli_overrides.switches
    elif args.epsilon is None:
        config.epsilon = 1e-8
    n_list = [int(s) for s in args.n_list.split(",")]
    rows = error_study(config, n_list, args.n_ref)
    header = f"{'N':>6} {'dofs':>8} {'E_h':>12} {'|dLambda|':>12} {'iters':>6} {'Eoc':>6} {'cpu':>8}"
    print(header)
    for r in rows:
        eoc = f"{r.eoc:6.2f}" if r.eoc is not None else "     -"
        print(f"{r.n:>6} {r.dofs:>8} {r.error:12.5e} {r.error_lambda:12.5e} "
              f"{r.iterations:>6} {eoc} {r.cpu_time:8.2f}")
    if args.out:
        study_to_csv(rows, args.out)
        print(f"table written to {args.out}")
    if args.log:
        with open(args.log, "w") as fh:
            json.dump([r.__dict__ for r in rows], fh, indent=2)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfgnet",
        description="Stationary mean field games on metric networks: "
                    "direct Gauss-Newton least-squares solver.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one configuration")
    _add_common(p_solve)
    p_solve.add_argument("--out", metavar="PATH", default=None,
                         help="export the solution")
    p_solve.add_argument("--format", choices=("csv", "json"), default="csv")
    p_solve.add_argument("--dump-system", metavar="PREFIX", default=None,
                         help="dump residual and Jacobian at the final iterate")
    p_solve.set_defaults(func=cmd_solve)

    p_study = sub.add_parser("study", help="grid-refinement error study")
    _add_common(p_study)
    p_study.add_argument("--n-list", default="100,200,400,800,1000",
                         help="comma-separated interval counts")
    p_study.add_argument("--n-ref", type=int, default=2000,
                         help="reference resolution treated as exact")
    p_study.add_argument("--out", metavar="PATH", default=None,
                         help="write the study table as CSV")
    p_study.set_defaults(func=cmd_study)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
