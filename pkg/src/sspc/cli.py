"""``sspc-sim``: run the closed-loop attitude benchmark and write a trace."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ContractViolation, SimulationAborted
from .harness import SimConfig, run_closed_loop, write_trace
from .solver import SolverConfig

# option key -> dataclass field
_SOLVER_KEYS = {"kappa": "kappa", "eps": "eps", "delta0": "delta0", "schur": "use_schur",
                "max_iters": "max_corrector_iters", "retries": "max_retries"}
_SIM_KEYS = {"case": "case", "horizon": "N", "duration": "duration", "format": "format",
             "out": "out", "repeats": "repeats", "integrator": "plant_integrator",
             "seed": "seed", "noise": "noise_std", "slack_mode": "slack_mode"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sspc-sim",
        description="Closed-loop spacecraft attitude NMPC driven by the semismooth "
                    "predictor-corrector tracker.")
    ap.add_argument("--config", help="JSON file with any of the options below (flags win)")
    ap.add_argument("--case", type=int, choices=(1, 2))
    ap.add_argument("--horizon", type=int, help="prediction horizon N")
    ap.add_argument("--kappa", type=float, help="max parameter change per grid step")
    ap.add_argument("--eps", type=float, help="KKT residual tolerance")
    ap.add_argument("--delta0", type=float, help="initial regularization")
    ap.add_argument("--duration", type=float, help="simulated time in seconds")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--out", help="trace file (default: stdout)")
    ap.add_argument("--repeats", type=int, help="solves per step for timing")
    ap.add_argument("--schur", action="store_const", const=True,
                    help="solve the Newton systems by Schur reduction on the D block")
    ap.add_argument("--max-iters", dest="max_iters", type=int)
    ap.add_argument("--retries", type=int)
    ap.add_argument("--integrator", choices=("euler", "rk4"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--noise", type=float, help="measurement noise std (deg, deg/s)")
    ap.add_argument("--slack-mode", dest="slack_mode", choices=("scalar", "vector"))
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def config_from_args(args) -> SimConfig:
    opts = {}
    if args.config:
        with open(args.config) as fh:
            opts.update(json.load(fh))
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "verbose"):
            opts[key] = value
    unknown = set(opts) - set(_SOLVER_KEYS) - set(_SIM_KEYS)
    if unknown:
        raise ContractViolation(f"unknown config keys: {sorted(unknown)}")
    solver = SolverConfig(**{_SOLVER_KEYS[k]: v for k, v in opts.items() if k in _SOLVER_KEYS})
    sim = SimConfig(solver=solver,
                    **{_SIM_KEYS[k]: v for k, v in opts.items() if k in _SIM_KEYS})
    sim.validate()
    return sim


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ContractViolation, OSError, TypeError, ValueError) as exc:
        print(f"sspc-sim: invalid configuration: {exc}", file=sys.stderr)
        return 2
    status = 0
    try:
        trace = run_closed_loop(cfg)
    except SimulationAborted as exc:
        print(f"sspc-sim: {exc}", file=sys.stderr)
        trace = exc.trace
        status = 1
    try:
        write_trace(trace, cfg.out or sys.stdout, cfg.format)
    except OSError as exc:
        print(f"sspc-sim: {exc}", file=sys.stderr)
        return 1
    if trace and cfg.out:
        worst = max(r.kkt_residual for r in trace)
        print(f"{len(trace)} steps, max KKT residual {worst:.2e}, "
              f"mean solve {sum(r.solve_time for r in trace) / len(trace):.2f} ms -> {cfg.out}",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
