"""Ensemble experiment runner and success/time-to-solution metrics.

A grid run executes every (instance, seed) cell of a solver configuration and
keeps a sparse best-energy-by-step trace per cell. From those records:

    p0(n)   fraction of runs that have hit the target by step n, averaged
            per instance first and then across instances,
    n_s(n)  n * log(1 - 0.99) / log(1 - p0(n)), the expected step count to
            99% success with restarts of length n,
    n_s     min_n n_s(n).

Seeds are derived from (master seed, instance label, run index) by hashing,
so results are independent of instance ordering and of how cells are
distributed over workers.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .feedback import ClosedLoopParams, integrate_closedloop_ensemble
from .instances import IsingInstance, energies_of_batch, round_spins
from .messages import bp_magnetizations, bp_step, init_messages, tap_run
from .openloop import BestTrace, Nonlinearity, Schedule, integrate_openloop_ensemble
from .oracle import GROUND_STATE_CAP, exhaustive_ground_states
from .spectral import min_eigvec_heuristic


@dataclass(frozen=True)
class BenchRecord:
    instance_id: str
    solver_id: str
    seed: int
    steps: tuple
    energies: tuple
    ground_energy: float

    def best_by_step(self, step: int) -> float:
        idx = np.searchsorted(self.steps, step, side="right")
        return self.energies[idx - 1] if idx else math.inf

    def hit_by_step(self, step: int, rel_tol: float = 1e-9) -> bool:
        tol = rel_tol * abs(self.ground_energy)
        return self.best_by_step(step) <= self.ground_energy + tol


@dataclass(frozen=True)
class SuccessCurve:
    n_grid: np.ndarray
    p0: np.ndarray


def derive_seed(master_seed: int, instance_id: str, run_index: int) -> int:
    """Stable per-cell seed; independent of instance order and worker layout."""
    digest = hashlib.sha256(
        f"{master_seed}/{instance_id}/{run_index}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class OpenLoopConfig:
    nonlinearity: Nonlinearity
    schedule: Schedule
    record_every: int = 1
    solver_id: str = "open-loop"

    @property
    def budget(self) -> int:
        return self.schedule.n_steps

    def run(self, instance: IsingInstance, seeds) -> list[BestTrace]:
        _, _, traces = integrate_openloop_ensemble(
            instance, self.nonlinearity, self.schedule, seeds,
            record_every=self.record_every,
        )
        return traces


@dataclass(frozen=True)
class ClosedLoopConfig:
    params: ClosedLoopParams
    steps: int
    solver_id: str = "closed-loop"

    @property
    def budget(self) -> int:
        return self.steps

    def run(self, instance: IsingInstance, seeds) -> list[BestTrace]:
        _, _, _, _, traces, _ = integrate_closedloop_ensemble(
            instance, self.params, self.steps, seeds
        )
        return traces


@dataclass(frozen=True)
class BPConfig:
    beta: float
    iters: int = 200
    damping: float = 0.5
    solver_id: str = "bp"

    @property
    def budget(self) -> int:
        return self.iters

    def run(self, instance: IsingInstance, seeds) -> list[BestTrace]:
        traces = []
        for seed in seeds:
            ms = init_messages(instance, seed, damping=self.damping)
            steps, energies = [], []
            best = math.inf
            for it in range(1, self.iters + 1):
                ms, _ = bp_step(ms, self.beta)
                spins = round_spins(bp_magnetizations(ms, self.beta))
                e = float(energies_of_batch(instance, spins[None, :])[0])
                if e < best:
                    best = e
                    steps.append(it)
                    energies.append(e)
            traces.append(BestTrace(tuple(steps), tuple(energies), spins))
        return traces


@dataclass(frozen=True)
class TapConfig:
    beta: float
    iters: int = 500
    variant: str = "bolthausen"
    solver_id: str = "tap"

    @property
    def budget(self) -> int:
        return self.iters

    def run(self, instance: IsingInstance, seeds) -> list[BestTrace]:
        traces = []
        for seed in seeds:
            res = tap_run(instance, self.beta, seed, max_iters=self.iters, tol=1e-14)
            spins = round_spins(res.state.m_now)
            e = float(energies_of_batch(instance, spins[None, :])[0])
            traces.append(BestTrace((res.iterations,), (e,), spins))
        return traces


@dataclass(frozen=True)
class EigvecConfig:
    solver_id: str = "eigvec"
    budget: int = 1

    def run(self, instance: IsingInstance, seeds) -> list[BestTrace]:
        result = min_eigvec_heuristic(instance)
        trace = BestTrace(
            (1,), (result.rounded.energy,), result.rounded.spins
        )
        return [trace] * len(seeds)


def _grid_cell(task):
    instance, config, seeds = task
    return config.run(instance, seeds)


def run_grid(
    instances,
    solver_config,
    runs_per_instance: int,
    master_seed: int,
    targets: dict | None = None,
    threads: int = 1,
) -> list[BenchRecord]:
    """Run every (instance, seed) cell and collect sparse best-energy records.

    Targets come from the exhaustive oracle when not supplied (possible only
    for n <= 24); pass ``targets={label: energy}`` for larger instances. All
    seeds of one instance are integrated as one batch, so records do not
    depend on instance order or on ``threads``.
    """
    labels = [inst.label for inst in instances]
    if len(set(labels)) != len(labels):
        raise ValueError("instance labels must be unique within a grid run")
    resolved = {}
    for inst in instances:
        if targets is not None and inst.label in targets:
            resolved[inst.label] = float(targets[inst.label])
        elif inst.n <= GROUND_STATE_CAP:
            resolved[inst.label] = exhaustive_ground_states(inst).ground_energy
        else:
            raise ValueError(
                f"missing target energy for {inst.label!r} (n={inst.n} is above "
                "the oracle cap)"
            )

    tasks = []
    for inst in instances:
        seeds = [
            derive_seed(master_seed, inst.label, r) for r in range(runs_per_instance)
        ]
        tasks.append((inst, solver_config, seeds))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            all_traces = list(pool.map(_grid_cell, tasks))
    else:
        all_traces = [_grid_cell(t) for t in tasks]

    records = []
    for (inst, _, seeds), traces in zip(tasks, all_traces):
        for seed, trace in zip(seeds, traces):
            records.append(
                BenchRecord(
                    instance_id=inst.label,
                    solver_id=solver_config.solver_id,
                    seed=seed,
                    steps=trace.steps,
                    energies=trace.energies,
                    ground_energy=resolved[inst.label],
                )
            )
    return records


def default_n_grid(budget: int, points: int = 64) -> np.ndarray:
    """Log-spaced step grid from 1 to the budget."""
    return np.unique(np.geomspace(1, budget, points).astype(int))


def success_probability(
    records, n_grid, rel_tol: float = 1e-9
) -> SuccessCurve:
    """p0(n): per-instance success fraction first, then the instance mean."""
    if not records:
        raise ValueError("no records")
    n_grid = np.asarray(n_grid, dtype=int)
    by_instance: dict = {}
    for rec in records:
        by_instance.setdefault(rec.instance_id, []).append(rec)
    fractions = []
    for recs in by_instance.values():
        hits = np.array(
            [[rec.hit_by_step(int(n), rel_tol) for n in n_grid] for rec in recs]
        )
        fractions.append(hits.mean(axis=0))
    return SuccessCurve(n_grid=n_grid, p0=np.mean(fractions, axis=0))


def ns_of_curve(curve: SuccessCurve) -> float:
    """n_s = min_n n log(0.01) / log(1 - p0(n)); inf when no success anywhere."""
    best = math.inf
    for n, p in zip(curve.n_grid, curve.p0):
        if p <= 0.0:
            continue
        value = float(n) if p >= 1.0 else float(n) * math.log(0.01) / math.log1p(-p)
        best = min(best, value)
    return best


def iterations_to_solution(curve: SuccessCurve) -> float:
    return ns_of_curve(curve)


def per_instance_ns(records, n_grid, rel_tol: float = 1e-9) -> dict:
    """n_s computed from each instance's own success curve."""
    by_instance: dict = {}
    for rec in records:
        by_instance.setdefault(rec.instance_id, []).append(rec)
    out = {}
    for label, recs in by_instance.items():
        curve = success_probability(recs, n_grid, rel_tol)
        out[label] = ns_of_curve(curve)
    return out


def percentiles(values, ps) -> np.ndarray:
    """Nearest-rank percentiles of finite values (pre-sorted internally)."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise ValueError("no values")
    if not np.all(np.isfinite(vals)):
        raise ValueError("percentiles require finite values; filter inf first")
    out = []
    for p in ps:
        if not 0 <= p <= 100:
            raise ValueError(f"percentile {p} outside [0, 100]")
        rank = max(1, math.ceil(p / 100.0 * vals.size))
        out.append(vals[rank - 1])
    return np.array(out)


def ns_summary(ns_values, ps=(50, 80, 90)) -> dict:
    """Nearest-rank percentiles of the finite n_s values plus attainment rate."""
    vals = np.asarray(list(ns_values), dtype=float)
    finite = vals[np.isfinite(vals)]
    attainment = float(finite.size) / float(vals.size) if vals.size else 0.0
    summary = {"attainment": attainment, "percentiles": {}}
    if finite.size:
        for p, v in zip(ps, percentiles(finite, ps)):
            summary["percentiles"][int(p)] = float(v)
    return summary


def records_to_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "solver", "seed", "step", "best_energy"])
        for rec in records:
            for step, e in zip(rec.steps, rec.energies):
                writer.writerow([rec.instance_id, rec.solver_id, rec.seed, step, e])


def curve_to_csv(curve: SuccessCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "p0"])
        for n, p in zip(curve.n_grid, curve.p0):
            writer.writerow([int(n), float(p)])
