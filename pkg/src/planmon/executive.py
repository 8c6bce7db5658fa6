"""Closed-loop plan execution policies.

Policies see the world only through execution calls and yes/no answers; the
true state stays inside the world and the oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .pddl import Atom, GroundAction, GroundTask, apply
from .planner import Solved, replan
from .vqa import (Answer, OracleProfile, QueryStyle, SimulatedOracle, TemplateTable,
                  render_query)
from .worldsim import Observation, WorldConfig, fallback_locations, reset

log = logging.getLogger(__name__)

POSSESSION_PREDICATES = ("in_hand",)


class Policy(str, Enum):
    TPVQA = "tpvqa"
    EFFECT_VQA = "effectvqa"
    TP = "tp"
    SUCCESS_VQA = "successvqa"
    PALME_VQA = "palmevqa"


class FailureReason(str, Enum):
    GOAL_REACHED = "goal_reached"
    BUDGET_EXHAUSTED = "budget_exhausted"
    UNSOLVABLE = "unsolvable"
    PLAN_EXHAUSTED = "plan_exhausted"


@dataclass(frozen=True)
class Verdict:
    """Answers to a batch of checks; each entry is (target, answer, expected_yes).

    The batch is unsatisfied only when a strict majority of the checks came
    back the wrong way; ties and empty batches count as satisfied.
    """

    answers: tuple[tuple[Union[Atom, GroundAction], Answer, bool], ...] = ()

    @property
    def unsatisfied_count(self) -> int:
        return sum(1 for _, ans, expected in self.answers if ans.yes != expected)

    @property
    def satisfied(self) -> bool:
        return self.unsatisfied_count <= len(self.answers) // 2

    def to_dict(self) -> dict:
        return {
            "answers": [[str(t), a.verdict] for t, a, _ in self.answers],
            "unsatisfied": self.unsatisfied_count,
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class Budgets:
    max_retries_per_action: int = 10
    max_replans: int = 10
    max_total_steps: int = 100

    def __post_init__(self):
        for name in ("max_retries_per_action", "max_replans", "max_total_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrialResult:
    completed: bool
    steps_taken: int
    replans: int
    retries: int
    failure_reason: FailureReason
    trace: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "steps_taken": self.steps_taken,
            "replans": self.replans,
            "retries": self.retries,
            "failure_reason": self.failure_reason.value,
        }


def check_preconditions(action: GroundAction, observation: Observation, oracle, rng,
                        templates: Optional[TemplateTable] = None) -> Verdict:
    answers = []
    for atom in sorted(action.pre):
        q = render_query(atom, QueryStyle.PREDICATE_PRECONDITION, templates)
        answers.append((atom, oracle.answer(q, observation, rng), True))
    return Verdict(tuple(answers))


def check_effects(action: GroundAction, observation: Observation, oracle, rng,
                  templates: Optional[TemplateTable] = None) -> Verdict:
    """Add effects should be answered Yes, delete effects No."""
    answers = []
    for atom, expected in [(a, True) for a in sorted(action.add)] + [(a, False) for a in sorted(action.delete)]:
        q = render_query(atom, QueryStyle.PREDICATE_EFFECT, templates)
        answers.append((atom, oracle.answer(q, observation, rng), expected))
    return Verdict(tuple(answers))


def repair_belief(belief: Iterable[Atom], verdict: Verdict, fallback: Mapping[str, Atom],
                  possession: Iterable[str] = POSSESSION_PREDICATES,
                  events: Optional[list] = None) -> frozenset:
    """Retract atoms answered No, assert atoms answered Yes.

    A retracted possession atom (e.g. ``in_hand(plate)``) puts the object back
    at its fallback location.
    """
    possession = set(possession)
    out = set(belief)
    for target, answer, _ in verdict.answers:
        if answer.yes:
            out.add(target)
            continue
        out.discard(target)
        if target.predicate in possession and target.args:
            loc = fallback.get(target.args[0])
            if loc is None:
                msg = f"no fallback location for {target.args[0]!r}"
                log.warning(msg)
                if events is not None:
                    events.append({"warning": msg})
            else:
                out.add(loc)
    return frozenset(out)


# (precondition query, effect query) per policy; None = not queried
_LOOPS = {
    Policy.TPVQA: ("predicate", "predicate"),
    Policy.EFFECT_VQA: (None, "predicate"),
    Policy.TP: (None, None),
    Policy.SUCCESS_VQA: (None, "name"),
    Policy.PALME_VQA: ("name", "name"),
}


class _Trial:
    def __init__(self, policy: Policy, task: GroundTask, world_config: WorldConfig, oracle,
                 budgets: Budgets, seed, templates: Optional[TemplateTable]):
        entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
        world_ss, oracle_ss = np.random.SeedSequence(entropy).spawn(2)
        self.world = reset(task, world_config, np.random.Generator(np.random.PCG64(world_ss)))
        self.rng = np.random.Generator(np.random.PCG64(oracle_ss))
        self.policy = policy
        self.task = task
        self.oracle = oracle
        self.budgets = budgets
        self.templates = templates
        self.fallback = fallback_locations(task)
        self.belief = task.init
        self.trace: list[dict] = []
        self.steps = self.replans = self.retries = 0

    def event(self, phase: str, **payload) -> None:
        self.trace.append({"step": self.steps, "phase": phase, "payload": payload})

    def plan(self) -> Optional[list[GroundAction]]:
        outcome = replan(self.task, self.belief)
        if isinstance(outcome, Solved):
            steps = list(outcome.plan.steps)
            self.event("plan", plan=[a.name for a in steps])
            return steps
        self.event("plan", plan=None, outcome=type(outcome).__name__)
        return None

    def finish(self, reason: FailureReason) -> TrialResult:
        return TrialResult(reason is FailureReason.GOAL_REACHED, self.steps, self.replans,
                           self.retries, reason, self.trace)

    def name_query(self, action: GroundAction, style: QueryStyle, obs: Observation) -> Verdict:
        q = render_query(action, style, self.templates)
        return Verdict(((action, self.oracle.answer(q, obs, self.rng), True),))

    def run(self) -> TrialResult:
        pre_mode, eff_mode = _LOOPS[self.policy]
        budgets = self.budgets
        queue = self.plan()
        if queue is None:
            return self.finish(FailureReason.UNSOLVABLE)
        obs = self.world.observe()
        retries_here = 0
        while True:
            if not queue:
                return self.finish(FailureReason.GOAL_REACHED if self.world.goal_reached() else FailureReason.PLAN_EXHAUSTED)
            action = queue[0]

            if pre_mode is not None:
                if pre_mode == "predicate":
                    verdict = check_preconditions(action, obs, self.oracle, self.rng, self.templates)
                else:
                    verdict = self.name_query(action, QueryStyle.NAME_AFFORDANCE, obs)
                self.event("precheck", action=action.name, **verdict.to_dict())
                if not verdict.satisfied:
                    if self.replans >= budgets.max_replans:
                        return self.finish(FailureReason.BUDGET_EXHAUSTED)
                    self.replans += 1
                    before = self.belief
                    if pre_mode == "predicate":
                        notes: list = []
                        self.belief = repair_belief(self.belief, verdict, self.fallback, events=notes)
                    else:
                        notes = []
                        self.belief = self.belief - action.pre
                    self.event("repair", removed=[str(a) for a in sorted(before - self.belief)],
                               added=[str(a) for a in sorted(self.belief - before)], notes=notes)
                    queue = self.plan()
                    if queue is None:
                        return self.finish(FailureReason.UNSOLVABLE)
                    retries_here = 0
                    continue

            if self.steps >= budgets.max_total_steps:
                return self.finish(FailureReason.BUDGET_EXHAUSTED)
            outcome = self.world.execute(action)
            self.steps += 1
            obs = self.world.observe()
            self.event("execute", action=action.name, succeeded=outcome.succeeded,
                       regressed=outcome.regressed)

            if eff_mode is not None:
                if eff_mode == "predicate":
                    verdict = check_effects(action, obs, self.oracle, self.rng, self.templates)
                else:
                    verdict = self.name_query(action, QueryStyle.NAME_SUCCESS, obs)
                self.event("effectcheck", action=action.name, **verdict.to_dict())
                if not verdict.satisfied:
                    if retries_here >= budgets.max_retries_per_action:
                        return self.finish(FailureReason.BUDGET_EXHAUSTED)
                    retries_here += 1
                    self.retries += 1
                    continue

            self.belief = apply(self.belief, action, strict=False)
            queue.pop(0)
            retries_here = 0


def run_trial(policy: Union[Policy, str], task: GroundTask, world_config: WorldConfig,
              profile: Optional[OracleProfile] = None, budgets: Budgets = Budgets(),
              seed: Union[int, Sequence[int]] = 0, *, oracle=None,
              templates: Optional[TemplateTable] = None) -> TrialResult:
    """Run one seeded trial; ``oracle`` overrides the simulated oracle built from ``profile``.

    ``seed`` may be an int or a tuple of ints (as the harness derives them).
    """
    if oracle is None:
        if profile is None:
            raise ValueError("either a profile or an oracle is required")
        oracle = SimulatedOracle(profile, task.name)
    return _Trial(Policy(policy), task, world_config, oracle, budgets, seed, templates).run()
