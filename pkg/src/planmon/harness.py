"""Monte Carlo sweeps over (task, policy) cells with Wilson intervals."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional

from . import __version__
from .executive import Budgets, Policy, run_trial
from .tasks import TASKS, load_task, toml_loads
from .vqa import load_profile
from .worldsim import ConfigError, WorldConfig

SEED_ENV = "PLANMON_MASTER_SEED"
CSV_COLUMNS = ("task", "policy", "trials", "successes", "rate", "ci_low", "ci_high",
               "mean_steps", "mean_replans")
Z95 = 1.959963984540054


class ExperimentError(RuntimeError):
    pass


def summarize(successes: int, trials: int, z: float = Z95) -> tuple[float, float, float]:
    """(rate, ci_low, ci_high) with the Wilson score interval."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, {trials}], got {successes}")
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # clamp rounding noise at the extremes
    return p, min(lo, p), max(hi, p)


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: tuple[str, ...] = TASKS
    policies: tuple[Policy, ...] = tuple(Policy)
    trials_per_cell: int = 1000
    master_seed: int = 0
    world: WorldConfig = WorldConfig()
    profile: str = "measured"
    budgets: Budgets = Budgets()
    workers: int = 1

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise ConfigError("trials_per_cell must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r}")
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "policies", tuple(Policy(p) for p in self.policies))

    @classmethod
    def from_dict(cls, d: Mapping, env: Optional[Mapping[str, str]] = None) -> "ExperimentConfig":
        d = dict(d)
        known = {"tasks", "policies", "trials_per_cell", "master_seed", "world", "profile",
                 "budgets", "workers"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {', '.join(sorted(unknown))}")
        if "world" in d:
            d["world"] = WorldConfig.from_dict(d["world"])
        if "budgets" in d:
            d["budgets"] = Budgets(**d["budgets"])
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            try:
                d["master_seed"] = int(env[SEED_ENV], 0)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, env: Optional[Mapping[str, str]] = None) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            data = toml_loads(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data, env)

    def to_dict(self) -> dict:
        world = self.world.to_dict()
        world.pop("seed", None)
        return {
            "tasks": list(self.tasks),
            "policies": [p.value for p in self.policies],
            "trials_per_cell": self.trials_per_cell,
            "master_seed": self.master_seed,
            "profile": self.profile,
            "world": world,
            "budgets": asdict(self.budgets),
        }


@dataclass(frozen=True)
class CellSummary:
    task: str
    policy: str
    trials: int
    successes: int
    rate: float
    ci_low: float
    ci_high: float
    mean_steps: float
    mean_replans: float


@dataclass(frozen=True)
class Report:
    config: dict
    cells: tuple[CellSummary, ...]
    seeds: tuple[dict, ...] = ()
    version: str = __version__

    def cell(self, task: str, policy) -> CellSummary:
        policy = Policy(policy).value
        for c in self.cells:
            if c.task == task and c.policy == policy:
                return c
        raise KeyError((task, policy))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "seeds": list(self.seeds),
            "cells": [asdict(c) for c in self.cells],
        }


def cell_seed(master_seed: int, task: str, policy) -> tuple[int, int, int]:
    return (master_seed, zlib.crc32(task.encode()), zlib.crc32(Policy(policy).value.encode()))


def _run_cell(args) -> tuple[int, int, int]:
    """Worker: (successes, total steps, total replans) for one cell."""
    task_id, policy, world_dict, profile, budgets, prefix, trials = args
    task = load_task(task_id)
    world = WorldConfig.from_dict(world_dict)
    prof = load_profile(profile)
    budgets = Budgets(**budgets)
    ok = steps = replans = 0
    for i in range(trials):
        seed = (*prefix, i)
        try:
            r = run_trial(policy, task, world, prof, budgets, seed=seed)
        except Exception as exc:
            raise ExperimentError(f"trial failed for {task_id}/{policy} seed {list(seed)}: {exc}") from exc
        ok += r.completed
        steps += r.steps_taken
        replans += r.replans
    return ok, steps, replans


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> Report:
    workers = config.workers if workers is None else workers
    load_profile(config.profile)
    for t in config.tasks:
        load_task(t)
    world_dict = config.world.to_dict()
    jobs, seeds = [], []
    for task in config.tasks:
        for policy in config.policies:
            prefix = cell_seed(config.master_seed, task, policy)
            seeds.append({"task": task, "policy": policy.value, "seed": list(prefix)})
            jobs.append((task, policy.value, world_dict, config.profile,
                         asdict(config.budgets), prefix, config.trials_per_cell))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    n = config.trials_per_cell
    cells = []
    for job, (ok, steps, replans) in zip(jobs, results):
        rate, lo, hi = summarize(ok, n)
        cells.append(CellSummary(job[0], job[1], n, ok, rate, lo, hi, steps / n, replans / n))
    return Report(config.to_dict(), tuple(cells), tuple(seeds))


def _fmt(x) -> str:
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def render_report(report: Report, fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report.cells:
        w.writerow([_fmt(getattr(c, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report: Report, fmt: str, sink) -> None:
    """Write the report to a path; ``"-"`` means stdout."""
    text = render_report(report, fmt)
    if str(sink) == "-":
        import sys
        sys.stdout.write(text)
        return
    Path(sink).write_text(text, encoding="utf-8")
