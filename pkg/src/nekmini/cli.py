"""Command-line interface for the benchmark harness.

Subcommands:
    run              in situ benchmark (solver + bridge in one process)
    endpoint         in transit staging endpoint
    producer         in transit producer (one solver instance)
    bench            orchestrated in transit run (spawns endpoint + producers)
    weak-scale       weak scaling experiment over several producer counts
    validate-config  parse an analysis configuration and report problems
    report           aggregate timings CSVs into summary.csv + chart.svg
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from nekmini import bridge as bridge_mod
from nekmini import harness, reporting
from nekmini.solver import SolverParams


def _add_solver_args(p: argparse.ArgumentParser):
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--rayleigh", type=float, default=1.0e5)
    p.add_argument("--prandtl", type=float, default=0.7)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=1.0e-3)


def _solver_params(args) -> SolverParams:
    return SolverParams(
        nx=args.nx, ny=args.ny, rayleigh=args.rayleigh, prandtl=args.prandtl,
        dt=args.dt, seed=args.seed, perturbation_amplitude=args.amplitude,
    )


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="nekmini", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="in situ benchmark run")
    _add_solver_args(p)
    p.add_argument("--config", help="analysis XML (omit for the empty baseline)")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="insitu")

    p = sub.add_parser("endpoint", help="in transit staging endpoint")
    p.add_argument("--config", help="analysis XML (omit for the empty baseline)")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--producers", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="intransit")
    p.add_argument("--port-file", help="write the bound host:port here once listening")
    p.add_argument("--step-timeout", type=float, default=120.0)

    p = sub.add_parser("producer", help="in transit producer")
    _add_solver_args(p)
    p.add_argument("--endpoint", help=f"host:port (default ${harness.ENDPOINT_ENV})")
    p.add_argument("--id", type=int, default=0)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--frequency", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="intransit")

    p = sub.add_parser("bench", help="orchestrated in transit benchmark")
    _add_solver_args(p)
    p.add_argument("--config", help="analysis XML for the endpoint")
    p.add_argument("--spawn", action="store_true",
                   help="spawn endpoint and producer processes (the only mode)")
    p.add_argument("--producers", type=int, default=4)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--frequency", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="intransit")

    p = sub.add_parser("weak-scale", help="weak scaling experiment")
    _add_solver_args(p)
    p.add_argument("--config", help="analysis XML for the endpoint")
    p.add_argument("--producers", default="1,2,4", help="comma-separated counts")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--frequency", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="weakscale")

    p = sub.add_parser("validate-config", help="check an analysis configuration")
    p.add_argument("config")

    p = sub.add_parser("report", help="aggregate timings CSVs")
    p.add_argument("dir")
    p.add_argument("--out", help="output directory (default: same as input)")

    return top


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "run":
        out = harness.run_insitu(harness.RunConfig(
            mode="insitu", solver=_solver_params(args), steps=args.steps,
            bridge_config_path=args.config, output_dir=Path(args.out), label=args.label,
        ))
        print(f"in situ run complete: {out}")

    elif args.command == "endpoint":
        cfg = harness.RunConfig(
            mode="intransit-endpoint", solver=SolverParams(), steps=1,
            bridge_config_path=args.config, output_dir=Path(args.out),
            label=args.label, producers=args.producers,
        )
        out = harness.run_endpoint(cfg, listen=args.listen, port_file=args.port_file,
                                   step_timeout=args.step_timeout)
        print(f"endpoint finished: {out}")

    elif args.command == "producer":
        cfg = harness.RunConfig(
            mode="intransit-producer", solver=_solver_params(args), steps=args.steps,
            bridge_config_path=None, output_dir=Path(args.out), label=args.label,
            frequency=args.frequency, endpoint_address=args.endpoint, producer_id=args.id,
        )
        out = harness.run_producer(cfg)
        print(f"producer {args.id} finished: {out}")

    elif args.command == "bench":
        cfg = harness.RunConfig(
            mode="intransit-endpoint", solver=_solver_params(args), steps=args.steps,
            bridge_config_path=args.config, output_dir=Path(args.out), label=args.label,
            producers=args.producers, frequency=args.frequency,
        )
        out = harness.run_intransit(cfg)
        print(f"in transit benchmark complete: {out}")

    elif args.command == "weak-scale":
        counts = [int(x) for x in args.producers.split(",") if x]
        cfg = harness.RunConfig(
            mode="intransit-endpoint", solver=_solver_params(args), steps=args.steps,
            bridge_config_path=args.config, output_dir=Path(args.out), label=args.label,
            frequency=args.frequency,
        )
        out = harness.weak_scaling(cfg, counts)
        print(f"weak scaling table: {out / 'scaling.csv'}")

    elif args.command == "validate-config":
        try:
            cfg = bridge_mod.load_config(args.config)
        except (OSError, bridge_mod.ConfigError) as e:
            print(f"invalid: {e}", file=sys.stderr)
            return 1
        for spec in cfg.specs:
            print(f"analysis kind={spec.kind} frequency={spec.frequency} params={spec.params}")
        print(f"ok: {len(cfg.specs)} analysis spec(s)")

    elif args.command == "report":
        summary, chart = reporting.report(args.dir, args.out)
        print(f"wrote {summary} and {chart}")

    return 0


if __name__ == "__main__":
    sys.exit(main())
