"""Ground-truth world: stochastic action failure and regression of achieved facts.

A failed action may regress the world.  Two models are available:

``rules`` (default)
    schema-specific :class:`RegressionRule` entries, falling back to undoing
    the most recently achieved fact matched by a ``"*"`` rule.
``rollback``
    the true state jumps back to one of the distinct states visited earlier
    in the episode, chosen uniformly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .pddl import Atom, GroundAction, GroundTask, parse_atom

log = logging.getLogger(__name__)

POOL_SIZE = 10
FALLBACK = "fallback"
LOCATION_PREDICATES = ("on",)
REGRESSION_MODELS = ("rollback", "rules")


class ConfigError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """PCG64 stream from an int or a tuple of ints (hashed by SeedSequence)."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class RegressionRule:
    """Candidate side effect of a failed ``trigger`` action (``"*"`` = any action).

    Pattern arguments ``?i`` stand for the i-th argument of the ground action
    and ``*`` matches any object currently in such an atom.  ``fallback(x)``
    in ``restores`` expands to that object's location in the initial state.
    """

    trigger: str
    reverts: tuple[str, ...]
    restores: tuple[str, ...] = ()

    def candidates(self, action: GroundAction, state: frozenset,
                   fallback: Mapping[str, Atom]) -> list[tuple[frozenset, frozenset]]:
        """Every (reverts, restores) instantiation whose reverted atoms are partly true."""
        patterns = [self._bind(parse_atom(p), action) for p in self.reverts]
        wild = [p for p in patterns if "*" in p.args]
        fixed = frozenset(p for p in patterns if "*" not in p.args)
        if not wild:
            if not fixed & state:
                return []
            return [(fixed, self._restores(action, fallback, None))]
        out = []
        for atom in sorted(state):
            if any(_matches(p, atom) for p in wild):
                out.append((fixed | {atom}, self._restores(action, fallback, atom)))
        return out

    def _bind(self, atom: Atom, action: GroundAction) -> Atom:
        args = []
        for a in atom.args:
            if a.startswith("?"):
                idx = int(a[1:])
                if idx >= len(action.binding):
                    raise ConfigError(f"rule for {self.trigger!r} uses {a} but "
                                      f"{action.name} has {len(action.binding)} argument(s)")
                a = action.binding[idx]
            args.append(a)
        return Atom(atom.predicate, tuple(args))

    def _restores(self, action: GroundAction, fallback: Mapping[str, Atom],
                  matched: Optional[Atom]) -> frozenset:
        out = set()
        for p in self.restores:
            atom = self._bind(parse_atom(p), action)
            if "*" in atom.args:
                if matched is None or not matched.args:
                    continue
                atom = Atom(atom.predicate, tuple(matched.args[0] if a == "*" else a for a in atom.args))
            if atom.predicate == FALLBACK:
                loc = fallback.get(atom.args[0])
                if loc is not None:
                    out.add(loc)
            else:
                out.add(atom)
        return frozenset(out)


def _matches(pattern: Atom, atom: Atom) -> bool:
    return pattern.predicate == atom.predicate and len(pattern.args) == len(atom.args) and \
        all(p == "*" or p == a for p, a in zip(pattern.args, atom.args))


# Schema rules fire first, in listed order; otherwise the robot loses sight
# of whatever it most recently found.  Manipulation failures drop the held
# objects along with enough of the setting that a re-check notices.
KITCHEN_REGRESSIONS: tuple[RegressionRule, ...] = (
    RegressionRule("pickup", ("near(?0)",)),
    RegressionRule("place_on", ("in_hand(?0)", "near(?1)"), ("fallback(?0)",)),
    RegressionRule("wash", ("in_hand(?0)", "near(sink)"), ("fallback(?0)",)),
    RegressionRule("open", ("near(?0)",)),
    RegressionRule("turnon", ("near(?0)",)),
    RegressionRule("cutintohalf", ("in_hand(?0)", "in_hand(knife)"), ("fallback(?0)", "fallback(knife)")),
    RegressionRule("*", ("near(*)",)),
)


def fallback_locations(task: GroundTask, predicates: Iterable[str] = LOCATION_PREDICATES) -> dict[str, Atom]:
    """Object -> its first location atom in the initial state."""
    out: dict[str, Atom] = {}
    for atom in sorted(task.init):
        if atom.predicate in predicates and atom.args:
            out.setdefault(atom.args[0], atom)
    return out


class ImageManifest:
    """Per-action pools of observation image paths, ``POOL_SIZE`` each for success and failure."""

    def __init__(self, pools: Mapping[str, Mapping[str, list]]):
        self.pools: dict[str, dict[str, tuple[str, ...]]] = {}
        for key, entry in pools.items():
            if not isinstance(entry, Mapping):
                raise ConfigError(f"manifest entry {key!r} must be an object")
            pool = {}
            for outcome in ("success", "failure"):
                paths = entry.get(outcome)
                if not isinstance(paths, list) or len(paths) != POOL_SIZE or \
                        not all(isinstance(p, str) for p in paths):
                    raise ConfigError(f"manifest entry {key!r}: {outcome!r} must list exactly "
                                      f"{POOL_SIZE} paths")
                pool[outcome] = tuple(paths)
            self.pools[key.replace(" ", "")] = pool

    @classmethod
    def load(cls, path) -> "ImageManifest":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def pool(self, action: GroundAction, succeeded: bool) -> tuple[str, ...]:
        outcome = "success" if succeeded else "failure"
        for key in (action.name.replace(" ", ""), action.schema):
            if key in self.pools:
                return self.pools[key][outcome]
        raise ConfigError(f"no {outcome} image pool for {action.name}")


@dataclass(frozen=True)
class WorldConfig:
    p_fail: float = 0.25
    p_regress: float = 0.25
    regression_rules: tuple[RegressionRule, ...] = KITCHEN_REGRESSIONS
    seed: int = 0
    manifest: Optional[ImageManifest] = field(default=None, compare=False)
    regression: str = "rules"

    def __post_init__(self):
        for name in ("p_fail", "p_regress"):
            p = getattr(self, name)
            if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if self.regression not in REGRESSION_MODELS:
            raise ConfigError(f"regression must be one of {', '.join(REGRESSION_MODELS)}, "
                              f"got {self.regression!r}")

    def to_dict(self) -> dict:
        return {
            "p_fail": self.p_fail,
            "p_regress": self.p_regress,
            "seed": self.seed,
            "regression": self.regression,
            "regression_rules": [
                {"trigger": r.trigger, "reverts": list(r.reverts), "restores": list(r.restores)}
                for r in self.regression_rules
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping, **overrides) -> "WorldConfig":
        kw = dict(d)
        if "regression_rules" in kw:
            kw["regression_rules"] = tuple(
                RegressionRule(r["trigger"], tuple(r.get("reverts", ())), tuple(r.get("restores", ())))
                for r in kw["regression_rules"])
        manifest = kw.pop("manifest", None)
        if isinstance(manifest, (str, Path)):
            kw["manifest"] = ImageManifest.load(manifest)
        kw.update(overrides)
        unknown = set(kw) - {"p_fail", "p_regress", "regression", "regression_rules", "seed", "manifest"}
        if unknown:
            raise ConfigError(f"unknown world config keys: {', '.join(sorted(unknown))}")
        return cls(**kw)


@dataclass(frozen=True)
class ExecutionOutcome:
    succeeded: bool
    regressed: bool
    _state: frozenset = field(default=frozenset(), repr=False, compare=False)


class Observation:
    """What the robot sees after a step.

    The snapshot of the true state is only readable through
    :func:`observation_truth`, which the simulated oracle uses; control
    policies pass observations along without looking inside.
    """

    __slots__ = ("_snapshot", "_last_action", "_succeeded", "image_ref")

    def __init__(self, snapshot: frozenset, last_action: Optional[GroundAction],
                 succeeded: Optional[bool], image_ref: Optional[str] = None):
        self._snapshot = snapshot
        self._last_action = last_action
        self._succeeded = succeeded
        self.image_ref = image_ref

    @property
    def last_action(self) -> Optional[str]:
        return self._last_action.name if self._last_action else None

    def __repr__(self) -> str:
        return f"Observation(last_action={self.last_action!r}, image_ref={self.image_ref!r})"


def observation_truth(obs: Observation) -> tuple[frozenset, Optional[bool]]:
    """(true state snapshot, outcome of the last execution) for oracle use."""
    return obs._snapshot, obs._succeeded


class World:
    def __init__(self, task: GroundTask, config: WorldConfig, rng: Optional[np.random.Generator] = None):
        self.task = task
        self.config = config
        self._rng = rng if rng is not None else make_rng(config.seed)
        self._image_rng = make_rng((config.seed, 1)) if rng is None else self._rng.spawn(1)[0]
        self._state = task.init
        self._history: list[frozenset] = [task.init]
        self._achieved: dict[Atom, int] = {}
        self._fallback = fallback_locations(task)
        self._rules: dict[str, list[RegressionRule]] = {}
        for r in config.regression_rules:
            self._rules.setdefault(r.trigger, []).append(r)
        self._known = set(task.actions)
        self.steps = 0
        self._last: Optional[GroundAction] = None
        self._last_ok: Optional[bool] = None

    def execute(self, action: GroundAction) -> ExecutionOutcome:
        if action not in self._known:
            raise KeyError(f"unknown action {action.name}")
        self.steps += 1
        self._last = action
        regressed = False
        if action.pre <= self._state and self._rng.random() >= self.config.p_fail:
            self._set_state((self._state - action.delete) | action.add)
            succeeded = True
        else:
            succeeded = False
            if self._rng.random() < self.config.p_regress:
                regressed = self._regress(action)
        self._last_ok = succeeded
        return ExecutionOutcome(succeeded, regressed, self._state)

    def _regress(self, action: GroundAction) -> bool:
        if self.config.regression == "rollback":
            return self._rollback(action)
        return self._apply_rules(action)

    def _rollback(self, action: GroundAction) -> bool:
        earlier = [s for s in self._history if s != self._state]
        if not earlier:
            return False
        target = earlier[int(self._rng.integers(len(earlier)))]
        log.debug("failed %s rolled the world back to an earlier state", action.name)
        self._set_state(target)
        return True

    def _apply_rules(self, action: GroundAction) -> bool:
        chosen = None
        for rule in self._rules.get(action.schema, ()):
            found = rule.candidates(action, self._state, self._fallback)
            if found:
                chosen = found[0]
                break
        if chosen is None:
            generic = [c for rule in self._rules.get("*", ())
                       for c in rule.candidates(action, self._state, self._fallback)]
            if generic:
                # most recently achieved reverted fact; ties by canonical order
                chosen = max(generic, key=lambda c: max((self._achieved.get(a, 0), a)
                                                        for a in c[0] & self._state))
        if chosen is None:
            return False
        reverts, restores = chosen
        self._set_state((self._state - reverts) | restores)
        log.debug("regression after failed %s: -%s +%s", action.name,
                  sorted(map(str, reverts)), sorted(map(str, restores)))
        return True

    def _set_state(self, state: frozenset) -> None:
        for atom in state - self._state:
            self._achieved[atom] = self.steps
        self._state = state
        if state not in self._history:
            self._history.append(state)

    def observe(self) -> Observation:
        image = None
        if self.config.manifest is not None and self._last is not None:
            pool = self.config.manifest.pool(self._last, bool(self._last_ok))
            image = pool[int(self._image_rng.integers(len(pool)))]
        return Observation(self._state, self._last, self._last_ok, image)

    def goal_reached(self) -> bool:
        return self.task.goal <= self._state


def reset(task: GroundTask, config: WorldConfig, rng: Optional[np.random.Generator] = None) -> World:
    return World(task, config, rng)


def goal_reached(world: World, task: GroundTask) -> bool:
    return task.goal <= world._state
