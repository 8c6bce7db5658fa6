"""Breadth-first forward search, plan validation and plan files."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Union

from .pddl import GroundAction, GroundTask, apply, normalize_action_name

DEFAULT_NODE_BUDGET = 10**6


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def lines(self) -> list[str]:
        return [a.name for a in self.steps]


@dataclass(frozen=True)
class Solved:
    plan: Plan


@dataclass(frozen=True)
class Unsolvable:
    pass


@dataclass(frozen=True)
class BudgetExceeded:
    expanded: int


PlanOutcome = Union[Solved, Unsolvable, BudgetExceeded]


def plan(task: GroundTask, max_expansions: int = DEFAULT_NODE_BUDGET) -> PlanOutcome:
    """Shortest plan under unit costs.

    Successors are generated in canonical action order and states are
    deduplicated on first discovery, so among all shortest plans the one
    returned is the smallest in that order.
    """
    if task.goal <= task.init:
        return Solved(Plan())
    compiled = _compile(task)
    stray = task.init - compiled.index.keys()
    init = compiled.mask(task.init - stray)
    goal = compiled.mask(task.goal) if task.goal <= compiled.index.keys() else None
    if goal is None:
        return Unsolvable()
    found = _search(compiled, init, goal, max_expansions)
    if isinstance(found, int):
        return BudgetExceeded(found)
    if found is None:
        return Unsolvable()
    return Solved(Plan(tuple(compiled.actions[i] for i in found)))


class _Compiled:
    """Bitmask view of a task's atoms and actions, shared by tasks differing only in init."""

    def __init__(self, task: GroundTask):
        atoms = sorted(task.atoms)
        self.index = {a: i for i, a in enumerate(atoms)}
        self.actions = tuple(sorted(task.actions))
        self.ops = tuple((self.mask(a.pre), self.mask(a.add), self.mask(a.delete))
                         for a in self.actions)

    def mask(self, atoms) -> int:
        m = 0
        for a in atoms:
            m |= 1 << self.index[a]
        return m


_compiled: dict[int, tuple] = {}


def _compile(task: GroundTask) -> _Compiled:
    hit = _compiled.get(id(task.actions))
    if hit is not None and hit[0] is task.actions and hit[1] == task.atoms:
        return hit[2]
    c = _Compiled(task)
    if len(_compiled) > 64:
        _compiled.clear()
    _compiled[id(task.actions)] = (task.actions, task.atoms, c)
    return c


@lru_cache(maxsize=200_000)
def _search(compiled: _Compiled, init: int, goal: int, max_expansions: int):
    """Index path to the goal, None if unreachable, or the expansion count on budget overrun."""
    ops = compiled.ops
    parent: dict[int, Optional[tuple[int, int]]] = {init: None}
    frontier = deque([init])
    expanded = 0
    while frontier:
        if expanded >= max_expansions:
            return expanded
        state = frontier.popleft()
        expanded += 1
        for i, (pre, add, dele) in enumerate(ops):
            if pre & state != pre:
                continue
            succ = (state & ~dele) | add
            if succ in parent:
                continue
            parent[succ] = (state, i)
            if succ & goal == goal:
                path = []
                while parent[succ] is not None:
                    succ, j = parent[succ]
                    path.append(j)
                return tuple(reversed(path))
            frontier.append(succ)
    return None


def replan(task: GroundTask, new_init: Iterable, max_expansions: int = DEFAULT_NODE_BUDGET) -> PlanOutcome:
    new_init = frozenset(new_init)
    stray = new_init - task.atoms
    if stray:
        raise ValueError(f"atoms outside the task: {', '.join(sorted(map(str, stray)))}")
    return plan(task.with_init(new_init), max_expansions)


def check_plan(task: GroundTask, steps: Iterable[GroundAction]) -> Optional[str]:
    """Return None for a valid plan, else a short reason."""
    state = task.init
    for i, action in enumerate(steps, start=1):
        if not action.pre <= state:
            return f"step {i} inapplicable"
        state = apply(state, action)
    if not task.goal <= state:
        return "goal not reached"
    return None


def validate_plan(task: GroundTask, plan: Plan) -> bool:
    return check_plan(task, plan.steps) is None


def format_plan(plan: Plan) -> str:
    return "".join(line + "\n" for line in plan.lines())


def parse_plan(text: str, task: GroundTask) -> Plan:
    """Read one ``name(arg1, arg2)`` per line; blank lines and ``;`` comments skipped."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        try:
            steps.append(task.action(normalize_action_name(line)))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return Plan(tuple(steps))
