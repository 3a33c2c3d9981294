"""Experiment orchestration: seeded Monte-Carlo sweeps, persistence,
aggregation and convergence-trajectory emission.

Seeding discipline: every record is produced from a seed tree rooted at
(seed, sweep index), so all schemes at one sweep point share the same channel
realization and reruns reproduce every number bit-exactly.  Aggregates are
always recomputed from the persisted rows.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import run_scheme
from .channel import generate_realization, sample_topology
from .config import SystemConfig
from .solver import SolveResult

RECORD_FIELDS = [
    "config_digest", "seed", "scheme", "sweep_parameter", "sweep_value",
    "status", "sum_throughput_bits", "per_user_bits", "iterations",
    "final_r", "final_beta", "lifted_objective_bits", "wall_time_s",
]


@dataclass
class ExperimentRecord:
    config_digest: str
    seed: int
    scheme: str
    sweep_parameter: str | None
    sweep_value: float | None
    status: str
    sum_throughput_bits: float
    per_user_bits: list[float]
    iterations: int
    final_r: float
    final_beta: float
    lifted_objective_bits: float
    wall_time_s: float

    def row(self) -> list:
        data = dataclasses.asdict(self)
        data["per_user_bits"] = json.dumps(
            [float(b) for b in self.per_user_bits])
        return [data[f] for f in RECORD_FIELDS]


def _rngs_for(seed: int, sweep_index: int, schemes: list[str]):
    """Channel rng plus one independent stream per scheme."""
    root = np.random.SeedSequence(entropy=[int(seed), int(sweep_index)])
    children = root.spawn(1 + len(schemes))
    channel_rng = np.random.default_rng(children[0])
    scheme_rngs = {tag: np.random.default_rng(child)
                   for tag, child in zip(schemes, children[1:])}
    return channel_rng, scheme_rngs


def run_single(config: SystemConfig, seed: int, sweep_index: int,
               sweep_value, scheme: str) -> ExperimentRecord:
    """One (seed, sweep point, scheme) cell; failures become records."""
    cfg = config.with_sweep_value(sweep_value)
    channel_rng, scheme_rngs = _rngs_for(seed, sweep_index, cfg.schemes)
    topology = sample_topology(cfg, channel_rng)
    channels = generate_realization(cfg, topology, channel_rng)
    try:
        result: SolveResult = run_scheme(scheme, cfg, channels, scheme_rngs[scheme])
        return ExperimentRecord(
            config_digest=config.digest(), seed=seed, scheme=scheme,
            sweep_parameter=config.sweep.parameter, sweep_value=sweep_value,
            status=result.status,
            sum_throughput_bits=float(result.objective),
            per_user_bits=[float(b) for b in result.per_user_bits],
            iterations=result.iterations,
            final_r=float(result.final_r), final_beta=float(result.final_beta),
            lifted_objective_bits=float(result.lifted_objective),
            wall_time_s=result.wall_time)
    except Exception as exc:  # record, never abort the sweep
        return ExperimentRecord(
            config_digest=config.digest(), seed=seed, scheme=scheme,
            sweep_parameter=config.sweep.parameter, sweep_value=sweep_value,
            status=f"solver_failure:{type(exc).__name__}",
            sum_throughput_bits=float("nan"), per_user_bits=[],
            iterations=0, final_r=float("nan"), final_beta=float("nan"),
            lifted_objective_bits=float("nan"), wall_time_s=0.0)


def _job(args):
    return run_single(*args)


def run_experiment(config: SystemConfig, workers: int = 1,
                   run_fn=None) -> list[ExperimentRecord]:
    """All (sweep point x seed x scheme) cells, deterministically ordered.

    ``run_fn`` swaps the per-cell runner (used by orchestration tests)."""
    config.validate()
    points = config.sweep.points()
    jobs = [(config, seed, idx, value, scheme)
            for idx, value in enumerate(points)
            for seed in config.seeds
            for scheme in config.schemes]
    runner = run_fn or run_single
    if workers <= 1 or run_fn is not None:
        records = [runner(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_job, jobs))
    order = {tag: i for i, tag in enumerate(config.schemes)}
    records.sort(key=lambda r: (_sort_value(r.sweep_value), r.seed, order[r.scheme]))
    return records


def _sort_value(v) -> float:
    return float("-inf") if v is None else float(v)


def aggregate(records: list[ExperimentRecord]) -> list[dict]:
    """Per (scheme, sweep point): mean and standard error of the throughput."""
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.sweep_value), []).append(rec)
    rows = []
    for (scheme, value), recs in sorted(
            groups.items(), key=lambda kv: (_sort_value(kv[0][1]), kv[0][0])):
        vals = np.asarray([r.sum_throughput_bits for r in recs], dtype=float)
        finite = vals[np.isfinite(vals)]
        mean = float(np.mean(finite)) if finite.size else float("nan")
        stderr = (float(np.std(finite, ddof=1) / math.sqrt(finite.size))
                  if finite.size > 1 else 0.0)
        rows.append({
            "scheme": scheme, "sweep_parameter": recs[0].sweep_parameter,
            "sweep_value": value, "num_records": len(recs),
            "num_finite": int(finite.size),
            "num_converged": sum(r.status == "converged" for r in recs),
            "mean_sum_throughput_bits": mean,
            "stderr_sum_throughput_bits": stderr,
        })
    return rows


def emit_results(records: list[ExperimentRecord], out_dir,
                 formats: tuple[str, ...] = ("csv", "json")) -> dict[str, str]:
    """Persist records plus the aggregate table; returns the written paths."""
    if not records:
        raise ValueError("no records to emit")
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if "csv" in formats:
        path = os.path.join(out_dir, "records.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_FIELDS)
            for rec in records:
                writer.writerow(rec.row())
        written["records_csv"] = path
    if "json" in formats:
        path = os.path.join(out_dir, "records.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([dataclasses.asdict(r) for r in records], fh, indent=1)
        written["records_json"] = path
    agg = aggregate(records)
    path = os.path.join(out_dir, "aggregates.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(agg[0].keys()))
        writer.writeheader()
        writer.writerows(agg)
    written["aggregates_csv"] = path
    return written


def load_records(path) -> list[ExperimentRecord]:
    """Re-parse an emitted records.csv."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(ExperimentRecord(
                config_digest=row["config_digest"],
                seed=int(row["seed"]),
                scheme=row["scheme"],
                sweep_parameter=row["sweep_parameter"] or None,
                sweep_value=(None if row["sweep_value"] in ("", "None")
                             else float(row["sweep_value"])),
                status=row["status"],
                sum_throughput_bits=float(row["sum_throughput_bits"]),
                per_user_bits=json.loads(row["per_user_bits"]),
                iterations=int(row["iterations"]),
                final_r=float(row["final_r"]),
                final_beta=float(row["final_beta"]),
                lifted_objective_bits=float(row["lifted_objective_bits"]),
                wall_time_s=float(row["wall_time_s"])))
    return records


def run_convergence(config: SystemConfig, seed: int, scheme: str = "proposed",
                    out_dir=None) -> SolveResult:
    """Single-instance run that emits the per-iteration trajectory."""
    cfg = config.with_sweep_value(None)
    channel_rng, scheme_rngs = _rngs_for(seed, 0, cfg.schemes)
    topology = sample_topology(cfg, channel_rng)
    channels = generate_realization(cfg, topology, channel_rng)
    result = run_scheme(scheme, cfg, channels, scheme_rngs[scheme])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"trajectory_seed{seed}_{scheme}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "penalized_objective", "raw_objective",
                             "r", "beta", "eta1", "eta2", "solver_status",
                             "solve_time_s"])
            for h in result.history:
                writer.writerow([h.iteration, h.penalized_objective,
                                 h.raw_objective, h.r, h.beta, h.eta1, h.eta2,
                                 h.solver_status, h.solve_time])
    return result


def numeric_fields(record: ExperimentRecord) -> dict:
    """Fields that must reproduce bit-exactly across reruns (wall time excluded)."""
    data = dataclasses.asdict(record)
    data.pop("wall_time_s")
    return data
