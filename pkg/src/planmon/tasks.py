"""Bundled kitchen domain, the three household tasks and oracle/template data."""

from __future__ import annotations

import sys
from functools import lru_cache
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .pddl import Domain, GroundTask, Problem, ground, parse_domain, parse_problem

TASKS = ("clean_dishes", "serve_breakfast", "eat_apple")
DOMAIN_FILE = "kitchen.pddl"


def asset_text(name: str) -> str:
    return resources.files("planmon").joinpath("assets").joinpath(name).read_text(encoding="utf-8")


def toml_loads(text: str) -> dict:
    return _toml.loads(text)


def asset_path(name: str):
    return resources.files("planmon").joinpath("assets").joinpath(name)


@lru_cache(maxsize=None)
def load_domain() -> Domain:
    return parse_domain(asset_text(DOMAIN_FILE))


@lru_cache(maxsize=None)
def load_problem(task_id: str) -> Problem:
    if task_id not in TASKS:
        raise KeyError(f"unknown task {task_id!r} (expected one of {', '.join(TASKS)})")
    return parse_problem(asset_text(f"{task_id}.pddl"), load_domain())


@lru_cache(maxsize=None)
def load_task(task_id: str) -> GroundTask:
    return ground(load_domain(), load_problem(task_id))
