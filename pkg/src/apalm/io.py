"""CSV/JSON outputs, determinism comparison, and the scaling harness."""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .engine import QueueEngine
from .problems import SolutionPoint, make_builtin
from .runtime import apalm

# Above this many unknowns the CSV carries ||u|| plus one observable
# component instead of every component.
FULL_COMPONENT_LIMIT = 16


Row = tuple[int, float, float, int, SolutionPoint]


def write_csv(solutions: list[Row], path: str,
              observable_index: int = 0) -> None:
    """One row per point, ordered by (branch, xi), 17 significant digits."""
    if solutions:
        n_dof = solutions[0][4].n_dof
    else:
        n_dof = 0
    full = n_dof <= FULL_COMPONENT_LIMIT
    if full:
        u_cols = [f"u{i}" for i in range(n_dof)]
    else:
        u_cols = ["u_norm", f"u{observable_index}"]
    rows = sorted(solutions, key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["branch", "xi", "s", "level", "lambda"] + u_cols)
        for branch, xi, s, level, w in rows:
            if full:
                u_vals = [f"{v:.17g}" for v in w.u]
            else:
                u_vals = [f"{float(np.linalg.norm(w.u)):.17g}",
                          f"{w.u[observable_index]:.17g}"]
            writer.writerow([branch, f"{xi:.17g}", f"{s:.17g}", level,
                             f"{w.lam:.17g}"] + u_vals)


def read_csv(path: str) -> list[Row]:
    """Inverse of write_csv (full-component files only)."""
    rows: list[Row] = []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        u_cols = [c for c in header if c.startswith("u")]
        if u_cols and u_cols[0] == "u_norm":
            raise ValueError("cannot reconstruct u from a norm-only file")
        for rec in reader:
            branch, xi, s, level, lam = rec[:5]
            u = np.array([float(v) for v in rec[5:]])
            rows.append((int(branch), float(xi), float(s), int(level),
                         SolutionPoint(u, float(lam))))
    return rows


def write_summary(state: QueueEngine, path: str) -> None:
    summary = {
        "branches": len(state.maps),
        "points": sum(len(m) for m in state.maps.values()),
        "jobs_done": state.stats.jobs_done,
        "jobs_failed": state.stats.jobs_failed,
        "children_spawned": state.stats.children_spawned,
        "jobs_per_level": {str(k): v
                           for k, v in sorted(state.stats.level_counts.items())},
        "max_level": max((e[3] for m in state.maps.values()
                          for e in m.collect()), default=0),
        "serial_time_s": state.stats.serial_time,
        "queue_time_s": state.stats.queue_time,
        "warnings": state.stats.warnings,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class ComparisonReport:
    keys_match: bool
    missing_keys: list[tuple[int, float]]
    extra_keys: list[tuple[int, float]]
    max_deviation: float

    def ok(self, tolerance: float) -> bool:
        return self.keys_match and self.max_deviation <= tolerance


def compare(run_a: list[Row], run_b: list[Row]) -> ComparisonReport:
    """Key-set equality and max componentwise deviation of two runs."""
    a = {(branch, xi): w for branch, xi, _, _, w in run_a}
    b = {(branch, xi): w for branch, xi, _, _, w in run_b}
    missing = sorted(set(a) - set(b))
    extra = sorted(set(b) - set(a))
    max_dev = 0.0
    for key in set(a) & set(b):
        wa, wb = a[key], b[key]
        dev = max(float(np.max(np.abs(wa.u - wb.u))), abs(wa.lam - wb.lam))
        max_dev = max(max_dev, dev)
    return ComparisonReport(keys_match=not missing and not extra,
                            missing_keys=missing, extra_keys=extra,
                            max_deviation=max_dev)


def run_from_config(cfg: RunConfig, workers: int | None = None) -> QueueEngine:
    problem = make_builtin(cfg.problem_name, **cfg.problem_params)
    n = cfg.workers if workers is None else workers
    return apalm(problem, cfg.alm, cfg.engine, worker_count=n,
                 transport=cfg.transport)


@dataclass(frozen=True)
class ScaleSample:
    workers: int
    serial_mean: float
    serial_min: float
    serial_max: float
    parallel_mean: float
    parallel_min: float
    parallel_max: float


def scale_harness(cfg: RunConfig, worker_counts: list[int],
                  repeats: int = 3) -> list[ScaleSample]:
    """Wall times per worker count, repeated; serial and parallel separated."""
    if not worker_counts:
        raise ValueError("worker_counts must be nonempty")
    samples = []
    for count in worker_counts:
        serial_times = []
        parallel_times = []
        for _ in range(repeats):
            state = run_from_config(cfg, workers=count)
            serial_times.append(state.stats.serial_time)
            parallel_times.append(state.stats.queue_time)
        samples.append(ScaleSample(
            workers=count,
            serial_mean=statistics.fmean(serial_times),
            serial_min=min(serial_times),
            serial_max=max(serial_times),
            parallel_mean=statistics.fmean(parallel_times),
            parallel_min=min(parallel_times),
            parallel_max=max(parallel_times),
        ))
    return samples


def write_scale_csv(samples: list[ScaleSample], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["workers", "serial_mean", "serial_min", "serial_max",
                         "parallel_mean", "parallel_min", "parallel_max"])
        for s in samples:
            writer.writerow([s.workers,
                             f"{s.serial_mean:.17g}", f"{s.serial_min:.17g}",
                             f"{s.serial_max:.17g}",
                             f"{s.parallel_mean:.17g}",
                             f"{s.parallel_min:.17g}",
                             f"{s.parallel_max:.17g}"])
