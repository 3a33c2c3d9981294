"""Command-line entry points: run sweeps, emit a convergence trajectory,
re-validate stored results."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import load_config
from .harness import (emit_results, load_records, numeric_fields,
                      run_convergence, run_experiment, run_single)


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s]


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seeds:
        config = dataclasses.replace(config, seeds=_parse_seeds(args.seeds))
    records = run_experiment(config, workers=args.workers)
    written = emit_results(records, args.out, formats=tuple(args.format.split(",")))
    failed = [r for r in records if r.status.startswith("solver_failure")]
    print(f"wrote {len(records)} records ({len(failed)} failures) to:")
    for name, path in written.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_convergence(args) -> int:
    config = load_config(args.config)
    result = run_convergence(config, seed=args.seed, scheme=args.scheme,
                             out_dir=args.out)
    print(f"status={result.status} iterations={result.iterations} "
          f"throughput={result.objective:.3f} bits "
          f"r={result.final_r:.3e} beta={result.final_beta:.3e}")
    return 0 if result.status == "converged" else 1


def _cmd_check(args) -> int:
    config = load_config(args.config)
    stored = load_records(args.records)
    if args.limit:
        stored = stored[: args.limit]
    digest = config.digest()
    mismatches = 0
    for rec in stored:
        if rec.config_digest != digest:
            print(f"config digest mismatch: record {rec.config_digest}, "
                  f"config {digest}")
            return 2
        points = config.sweep.points()
        idx = points.index(rec.sweep_value) if rec.sweep_value in points else 0
        fresh = run_single(config, rec.seed, idx, rec.sweep_value, rec.scheme)
        if numeric_fields(fresh) != numeric_fields(rec):
            mismatches += 1
            print(f"MISMATCH seed={rec.seed} scheme={rec.scheme} "
                  f"sweep={rec.sweep_value}")
    print(f"checked {len(stored)} records, {mismatches} mismatches")
    return 1 if mismatches else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsurllc",
        description="Beamforming and reflection-phase allocation harness for "
                    "multicell MISO OFDMA downlinks with finite-blocklength QoS")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured Monte-Carlo sweep")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--seeds", help="comma list or lo..hi range", default=None)
    p_run.add_argument("--format", default="csv,json")
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence",
                            help="single instance, per-iteration trajectory")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--out", required=True)
    p_conv.add_argument("--seed", type=int, default=0)
    p_conv.add_argument("--scheme", default="proposed")
    p_conv.set_defaults(func=_cmd_convergence)

    p_check = sub.add_parser("check", help="re-run and compare stored records")
    p_check.add_argument("--config", required=True)
    p_check.add_argument("--records", required=True)
    p_check.add_argument("--limit", type=int, default=None)
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
