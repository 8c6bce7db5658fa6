"""Natural-language yes/no queries about atoms and actions, and who answers them.

Two answerers share one interface (``answer(question, observation, rng)``):
:class:`SimulatedOracle`, which flips the ground truth at a per-(task, style)
rate, and :class:`RemoteOracle`, which POSTs to a VQA service.
"""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .pddl import Atom, GroundAction, GroundTask
from .tasks import asset_text, toml_loads
from .worldsim import Observation, observation_truth

DEFAULT_TIMEOUT = 30.0


class QueryStyle(str, Enum):
    PREDICATE_PRECONDITION = "precondition"
    PREDICATE_EFFECT = "effect"
    NAME_AFFORDANCE = "affordance"
    NAME_SUCCESS = "success"

    @property
    def about_action(self) -> bool:
        return self in (QueryStyle.NAME_AFFORDANCE, QueryStyle.NAME_SUCCESS)


class TemplateError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class ProfileError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class RemoteVQAError(RuntimeError):
    pass


class RemoteTransportError(RemoteVQAError):
    pass


class RemoteTimeoutError(RemoteVQAError):
    pass


class MalformedResponseError(RemoteVQAError):
    pass


@dataclass(frozen=True)
class QuestionTemplate:
    predicate: str
    pattern: str
    style: QueryStyle


class TemplateTable:
    def __init__(self, templates: Iterable[QuestionTemplate]):
        self._by_key: dict[tuple[str, QueryStyle], QuestionTemplate] = {}
        for t in templates:
            self._by_key[(t.predicate, t.style)] = t

    @classmethod
    def from_entries(cls, entries: Iterable[Mapping]) -> "TemplateTable":
        return cls(QuestionTemplate(e["predicate"], e["pattern"], QueryStyle(e["style"]))
                   for e in entries)

    @classmethod
    def load(cls, path) -> "TemplateTable":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            entries = toml_loads(text)["template"]
        else:
            entries = json.loads(text)
        return cls.from_entries(entries)

    def get(self, name: str, style: QueryStyle) -> QuestionTemplate:
        try:
            return self._by_key[(name, QueryStyle(style))]
        except KeyError:
            raise TemplateError(f"no template for {name!r} in style {QueryStyle(style).value!r}") from None

    def missing(self, task: GroundTask) -> list[str]:
        """Predicates/schemas of ``task`` without a template in a style they are queried in."""
        out = set()
        for a in task.actions:
            for atom, style in [(x, QueryStyle.PREDICATE_PRECONDITION) for x in a.pre] + \
                               [(x, QueryStyle.PREDICATE_EFFECT) for x in a.add | a.delete]:
                if (atom.predicate, style) not in self._by_key:
                    out.add(f"{atom.predicate}/{style.value}")
            for style in (QueryStyle.NAME_AFFORDANCE, QueryStyle.NAME_SUCCESS):
                if (a.schema, style) not in self._by_key:
                    out.add(f"{a.schema}/{style.value}")
        return sorted(out)


_default_templates: Optional[TemplateTable] = None


def default_templates() -> TemplateTable:
    global _default_templates
    if _default_templates is None:
        _default_templates = TemplateTable.from_entries(json.loads(asset_text("templates.json")))
    return _default_templates


@dataclass(frozen=True)
class Question:
    text: str
    target: Union[Atom, GroundAction]
    style: QueryStyle


def _words(name: str) -> str:
    return name.replace("_", " ")


def render_query(target: Union[Atom, GroundAction], style: QueryStyle,
                 templates: Optional[TemplateTable] = None) -> Question:
    style = QueryStyle(style)
    templates = templates or default_templates()
    if style.about_action:
        if not isinstance(target, GroundAction):
            raise TypeError(f"{style.value} queries are about actions, got {target!r}")
        name, args = target.schema, target.binding
    else:
        if not isinstance(target, Atom):
            raise TypeError(f"{style.value} queries are about atoms, got {target!r}")
        name, args = target.predicate, target.args
    tpl = templates.get(name, style)
    try:
        text = tpl.pattern.format(*(_words(a) for a in args))
    except IndexError:
        raise TemplateError(f"template for {name!r} has more slots than {len(args)} argument(s)") from None
    return Question(text, target, style)


@dataclass(frozen=True)
class Answer:
    verdict: str  # "yes" | "no"
    truthful: Optional[bool] = None  # diagnostics only; unknown for remote answers

    @property
    def yes(self) -> bool:
        return self.verdict == "yes"

    def __str__(self) -> str:
        return self.verdict


YES = "yes"
NO = "no"


@dataclass(frozen=True)
class OracleProfile:
    name: str
    accuracy: Mapping[tuple[str, QueryStyle], float]

    def __post_init__(self):
        for key, p in self.accuracy.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"profile {self.name!r}: accuracy for {key} outside [0, 1]: {p}")

    def get(self, task_id: str, style: QueryStyle) -> float:
        try:
            return self.accuracy[(task_id, QueryStyle(style))]
        except KeyError:
            raise ProfileError(f"profile {self.name!r} has no accuracy for "
                               f"({task_id}, {QueryStyle(style).value})") from None

    @classmethod
    def from_dict(cls, name: str, table: Mapping[str, Mapping[str, float]]) -> "OracleProfile":
        acc = {(task, QueryStyle(style)): float(p)
               for task, row in table.items() for style, p in row.items()}
        return cls(name, acc)

    @classmethod
    def uniform(cls, accuracy: float, tasks: Iterable[str], name: str = "uniform") -> "OracleProfile":
        return cls(name, {(t, s): accuracy for t in tasks for s in QueryStyle})

    def to_dict(self) -> dict:
        out: dict[str, dict[str, float]] = {}
        for (task, style), p in sorted(self.accuracy.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            out.setdefault(task, {})[style.value] = p
        return out


def load_profile(name_or_path: str) -> OracleProfile:
    """A bundled profile id (``measured``, ``perfect``) or a JSON file of the same shape."""
    bundled = json.loads(asset_text("profiles.json"))
    if name_or_path in bundled:
        return OracleProfile.from_dict(name_or_path, bundled[name_or_path])
    path = Path(name_or_path)
    if not path.exists():
        raise ProfileError(f"unknown oracle profile {name_or_path!r} "
                           f"(bundled: {', '.join(sorted(bundled))})")
    return OracleProfile.from_dict(path.stem, json.loads(path.read_text(encoding="utf-8")))


def ground_truth(question: Question, observation: Observation) -> bool:
    snapshot, last_ok = observation_truth(observation)
    if question.style is QueryStyle.NAME_SUCCESS:
        if last_ok is None:
            raise ValueError("success query before any action was executed")
        return last_ok
    if question.style is QueryStyle.NAME_AFFORDANCE:
        return question.target.pre <= snapshot
    return question.target in snapshot


def oracle_answer(question: Question, observation: Observation, profile: OracleProfile,
                  rng: np.random.Generator, task_id: str) -> Answer:
    """Truth with probability ``profile[task, style]``, its negation otherwise."""
    accuracy = profile.get(task_id, question.style)
    truth = ground_truth(question, observation)
    truthful = bool(rng.random() < accuracy)
    said = truth if truthful else not truth
    return Answer(YES if said else NO, truthful)


class SimulatedOracle:
    def __init__(self, profile: OracleProfile, task_id: str):
        self.profile = profile
        self.task_id = task_id

    def answer(self, question: Question, observation: Observation, rng: np.random.Generator) -> Answer:
        return oracle_answer(question, observation, self.profile, rng, self.task_id)


def _parse_response(raw: bytes) -> Answer:
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedResponseError(f"response is not JSON: {exc}") from None
    if not isinstance(body, dict):
        raise MalformedResponseError("response is not a JSON object")
    answer = body.get("answer")
    conf = body.get("confidence")
    if not isinstance(answer, str) or answer.lower() not in (YES, NO):
        raise MalformedResponseError(f"'answer' must be 'yes' or 'no', got {answer!r}")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        raise MalformedResponseError(f"'confidence' must be a number in [0, 1], got {conf!r}")
    said_yes = answer.lower() == YES
    # confidence is in the stated answer; below 0.5 the other answer is likelier
    if conf < 0.5:
        said_yes = not said_yes
    return Answer(YES if said_yes else NO)


def remote_answer(question: Question, image_ref: Optional[str], endpoint: str,
                  timeout: float = DEFAULT_TIMEOUT) -> Answer:
    """POST ``{"question", "image"}`` to ``<endpoint>/v1/answer``."""
    url = endpoint.rstrip("/") + "/v1/answer"
    payload = json.dumps({"question": question.text, "image": image_ref or ""}).encode("utf-8")
    req = urllib.request.Request(url, data=payload, method="POST",
                                 headers={"Content-Type": "application/json; charset=utf-8"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            status = resp.status
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise RemoteTransportError(f"{url}: HTTP {exc.code}") from None
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise RemoteTimeoutError(f"{url}: no response within {timeout:g} s") from None
        raise RemoteTransportError(f"{url}: {exc.reason}") from None
    except (socket.timeout, TimeoutError):
        raise RemoteTimeoutError(f"{url}: no response within {timeout:g} s") from None
    except (ConnectionError, OSError) as exc:
        raise RemoteTransportError(f"{url}: {exc}") from None
    if status != 200:
        raise RemoteTransportError(f"{url}: HTTP {status}")
    return _parse_response(raw)


class RemoteOracle:
    """Remote VQA answerer.

    A refused or broken connection always propagates (there is no service to
    abstain with).  Timeouts and malformed replies become abstentions whose
    verdict is ``on_error`` ("no" by default), or propagate with ``"raise"``.
    """

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT, on_error: str = NO):
        if on_error not in (YES, NO, "raise"):
            raise ValueError(f"on_error must be 'yes', 'no' or 'raise', got {on_error!r}")
        self.endpoint = endpoint
        self.timeout = timeout
        self.on_error = on_error
        self.abstentions: list[str] = []

    def answer(self, question: Question, observation: Observation, rng=None) -> Answer:
        try:
            return remote_answer(question, observation.image_ref, self.endpoint, self.timeout)
        except (RemoteTimeoutError, MalformedResponseError) as exc:
            if self.on_error == "raise":
                raise
            self.abstentions.append(str(exc))
            return Answer(self.on_error)
