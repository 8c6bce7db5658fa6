"""``planmon`` command line.

Results go to stdout, diagnostics to stderr.  Exit status: 0 ok, 1 domain
error (parse failure, unsolvable task, invalid plan, bad config), 2 usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .executive import Policy, run_trial
from .harness import ExperimentConfig, ExperimentError, emit_report, run_experiment
from .pddl import GroundAction, ParseError, ground, parse_atom, parse_domain, parse_problem
from .planner import BudgetExceeded, Solved, check_plan, format_plan, parse_plan, plan
from .tasks import TASKS, asset_text, load_task
from .vqa import (ProfileError, QueryStyle, RemoteOracle, RemoteVQAError, TemplateError,
                  TemplateTable, load_profile, render_query)
from .worldsim import ConfigError, ImageManifest

log = logging.getLogger("planmon")


class DomainError(Exception):
    """Reported on stderr with exit status 1."""


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_task(args):
    if args.problem is None:
        if args.task is None:
            raise DomainError("give --problem or --task")
        if args.domain is None:
            return load_task(args.task)
        problem_text = asset_text(f"{args.task}.pddl")
    else:
        problem_text = _read(args.problem)
    domain_text = asset_text("kitchen.pddl") if args.domain is None else _read(args.domain)
    domain = parse_domain(domain_text)
    try:
        return ground(domain, parse_problem(problem_text, domain))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise DomainError(str(exc)) from None


def cmd_plan(args) -> int:
    task = _load_task(args)
    outcome = plan(task)
    if isinstance(outcome, Solved):
        sys.stdout.write(format_plan(outcome.plan))
        return 0
    if isinstance(outcome, BudgetExceeded):
        raise DomainError(f"search budget exceeded after {outcome.expanded} expansions")
    raise DomainError("unsolvable: no plan reaches the goal")


def cmd_validate(args) -> int:
    task = _load_task(args)
    try:
        steps = parse_plan(_read(args.plan), task)
    except ValueError as exc:
        raise DomainError(f"invalid plan: {exc}") from None
    reason = check_plan(task, steps.steps)
    if reason is None:
        print("valid plan")
        return 0
    print(f"invalid plan: {reason}")
    return 1


def cmd_query(args) -> int:
    templates = TemplateTable.load(args.templates) if args.templates else None
    style = QueryStyle(args.style)
    if args.atom is not None:
        target = parse_atom(args.atom)
    else:
        # name-style questions only need the schema and its arguments
        head = parse_atom(args.action)
        target = GroundAction((), head.predicate, head.args)
    print(render_query(target, style, templates).text)
    return 0


def _trial_settings(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.manifest:
        world = dataclasses.replace(cfg.world, manifest=ImageManifest.load(args.manifest))
        cfg = dataclasses.replace(cfg, world=world)
    return cfg


def cmd_trial(args) -> int:
    cfg = _trial_settings(args)
    task = load_task(args.task)
    oracle = RemoteOracle(args.endpoint) if args.endpoint else None
    profile = None if oracle else load_profile(cfg.profile)
    result = run_trial(args.policy, task, cfg.world, profile, cfg.budgets, seed=args.seed,
                       oracle=oracle)
    if args.trace:
        for event in result.trace:
            print(json.dumps(event, sort_keys=True))
    print(json.dumps({"task": args.task, "policy": args.policy, "seed": args.seed,
                      **result.summary()}, sort_keys=True))
    if oracle is not None and oracle.abstentions:
        log.warning("%d remote answers abstained", len(oracle.abstentions))
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    report = run_experiment(cfg)
    emit_report(report, args.format, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="planmon",
                                description="Plan, monitor and evaluate VQA-grounded task plans.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def task_source(sp):
        sp.add_argument("--domain", help="domain .pddl (default: bundled kitchen domain)")
        sp.add_argument("--problem", help="problem .pddl")
        sp.add_argument("--task", choices=TASKS, help="bundled problem instead of --problem")

    sp = sub.add_parser("plan", help="print a shortest plan, one action per line")
    task_source(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("validate", help="check a plan file against a task")
    task_source(sp)
    sp.add_argument("--plan", required=True, help="plan file, one name(args) per line")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("query", help="render the question asked about an atom or action")
    what = sp.add_mutually_exclusive_group(required=True)
    what.add_argument("--atom", help='e.g. "in_hand(plate)"')
    what.add_argument("--action", help='e.g. "wash(plate)"')
    sp.add_argument("--style", required=True, choices=[s.value for s in QueryStyle])
    sp.add_argument("--templates", help="JSON/TOML template table (default: bundled)")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("trial", help="run one seeded trial")
    sp.add_argument("--policy", required=True, choices=[x.value for x in Policy])
    sp.add_argument("--task", required=True, choices=TASKS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="experiment config supplying world, budgets and profile")
    sp.add_argument("--trace", action="store_true", help="print the event log as JSON lines")
    sp.add_argument("--endpoint", help="remote VQA service base URL")
    sp.add_argument("--manifest", help="image manifest JSON")
    sp.set_defaults(func=cmd_trial)

    sp = sub.add_parser("experiment", help="run a policy x task sweep and write a report")
    sp.add_argument("--config", help="experiment config (JSON or TOML)")
    sp.add_argument("--out", default="-", help="output path (default: stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--seed", type=int, help="override master_seed")
    sp.add_argument("--workers", type=int, help="worker processes")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
    except (DomainError, ConfigError, TemplateError, ProfileError, ExperimentError,
            RemoteVQAError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
