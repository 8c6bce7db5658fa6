"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line, shown in pytest's terminal summary
and also printed when this file is run directly (``python tests/test_acceptance.py``).
"""

from __future__ import annotations

import random
import sys
import time
import zlib
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from planmon.executive import Budgets, Policy, Verdict  # noqa: E402
from planmon.harness import ExperimentConfig, render_report, run_experiment  # noqa: E402
from planmon.pddl import Atom, ground, parse_domain, parse_problem  # noqa: E402
from planmon.planner import Solved, Unsolvable, plan  # noqa: E402
from planmon.tasks import TASKS, asset_text, load_task  # noqa: E402
from planmon.vqa import Answer, QueryStyle, load_profile, oracle_answer, render_query  # noqa: E402
from planmon.worldsim import WorldConfig, make_rng, reset  # noqa: E402

from oracles import random_task, shortest_length  # noqa: E402

EXPECTED_PLANS = {
    "clean_dishes": ["find(plate)", "pickup(plate)", "find(sink)", "wash(plate)"],
    "serve_breakfast": ["find(bread)", "pickup(bread)", "find(plate)", "place_on(bread, plate)",
                        "find(tv)", "turnon(tv)"],
    "eat_apple": ["find(fridge)", "open(fridge)", "find(apple)", "pickup(apple)", "find(knife)",
                  "pickup(knife)", "cutintohalf(apple)"],
}
NAME_BASELINES = (Policy.SUCCESS_VQA, Policy.PALME_VQA)


def c1_plans():
    t0 = time.perf_counter()
    domain = parse_domain(asset_text("kitchen.pddl"))
    got = {}
    for tid in TASKS:
        task = ground(domain, parse_problem(asset_text(f"{tid}.pddl"), domain))
        out = plan(task)
        got[tid] = out.plan.lines() if isinstance(out, Solved) else None
    dt = time.perf_counter() - t0
    ok = got == EXPECTED_PLANS and dt < 1.0
    return ok, f"lengths {[len(got[t] or []) for t in TASKS]}, {dt:.3f} s"


def c2_random_tasks():
    t0 = time.perf_counter()
    rng = random.Random(500)
    agree = 0
    for _ in range(500):
        task = random_task(rng)
        expected = shortest_length(task)
        out = plan(task)
        if expected is None:
            agree += out == Unsolvable()
        else:
            agree += isinstance(out, Solved) and len(out.plan) == expected
    dt = time.perf_counter() - t0
    return agree == 500 and dt < 60, f"{agree}/500 agree, {dt:.1f} s"


def c3_open_loop():
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig(policies=(Policy.TP,), trials_per_cell=10_000))
    dt = time.perf_counter() - t0
    rates, ok = [], dt < 30
    for tid, n in zip(TASKS, (4, 6, 7)):
        r = rep.cell(tid, Policy.TP).rate
        rates.append(f"{tid} {r:.4f} vs {0.75 ** n:.4f}")
        ok &= abs(r - 0.75 ** n) <= 0.02
    return ok, "; ".join(rates) + f", {dt:.1f} s"


def c4_perfect_oracle():
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig(policies=(Policy.TPVQA,), trials_per_cell=1000,
                                          profile="perfect", budgets=Budgets(50, 50, 500)))
    dt = time.perf_counter() - t0
    rates = [rep.cell(t, Policy.TPVQA).rate for t in TASKS]
    return all(r >= 0.99 for r in rates) and dt < 60, f"rates {rates}, {dt:.1f} s"


def c5_ordering():
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig(trials_per_cell=1000))
    dt = time.perf_counter() - t0
    problems = []
    for t in TASKS:
        top = rep.cell(t, Policy.TPVQA)
        for p in Policy:
            if p is not Policy.TPVQA and rep.cell(t, p).rate >= top.rate:
                problems.append(f"{t}: tpvqa {top.rate:.3f} <= {p.value} {rep.cell(t, p).rate:.3f}")
        tp = rep.cell(t, Policy.TP)
        for p in NAME_BASELINES:
            c = rep.cell(t, p)
            if top.ci_low <= c.ci_high:
                problems.append(f"{t}: tpvqa interval overlaps {p.value}")
            if tp.rate <= c.rate:
                problems.append(f"{t}: tp {tp.rate:.3f} <= {p.value} {c.rate:.3f}")
    if dt >= 300:
        problems.append(f"took {dt:.0f} s")
    return not problems, "; ".join(problems) or f"ordering holds, {dt:.1f} s"


def c6_calibration():
    t0 = time.perf_counter()
    profile = load_profile("measured")
    worst = 0.0
    for (tid, style), acc in sorted(profile.accuracy.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        task = load_task(tid)
        w = reset(task, WorldConfig(p_fail=0.0), make_rng(0))
        first = task.action(EXPECTED_PLANS[tid][0])
        w.execute(first)
        obs = w.observe()
        target = first if style.about_action else sorted(first.add)[0]
        q = render_query(target, style)
        rng = np.random.default_rng(zlib.crc32(f"{tid}/{style.value}".encode()))
        n = 100_000
        hits = sum(oracle_answer(q, obs, profile, rng, tid).truthful for _ in range(n))
        worst = max(worst, abs(hits / n - acc))
    dt = time.perf_counter() - t0
    return worst <= 0.01 and dt < 10, f"max deviation {worst:.4f}, {dt:.1f} s"


def c7_determinism():
    cfg = ExperimentConfig(trials_per_cell=200)
    serial = run_experiment(cfg, workers=1)
    parallel = run_experiment(cfg, workers=4)
    again = run_experiment(cfg, workers=1)
    same = all(render_report(serial, f) == render_report(parallel, f) == render_report(again, f)
               for f in ("csv", "json"))
    return same, "serial, parallel and repeat runs byte-identical" if same else "reports differ"


def c8_majority():
    def v(*answers):
        return Verdict(tuple((Atom("p", (str(i),)), Answer(a), True) for i, a in enumerate(answers)))
    results = [not v("no", "no", "yes").satisfied, v("no", "yes").satisfied, v().satisfied]
    return all(results), f"{sum(results)}/3 patterns"


CRITERIA = [
    (1, "plan reproduction", c1_plans),
    (2, "planner vs brute-force oracle", c2_random_tasks),
    (3, "open-loop analytic rates", c3_open_loop),
    (4, "perfect-oracle recovery", c4_perfect_oracle),
    (5, "policy ordering under the measured oracle", c5_ordering),
    (6, "oracle calibration", c6_calibration),
    (7, "determinism", c7_determinism),
    (8, "majority rule", c8_majority),
]


def _check(criterion, number):
    _, title, fn = CRITERIA[number - 1]
    ok, detail = fn()
    criterion(number, title, ok, detail)
    assert ok, detail


def test_criterion_1_plan_reproduction(criterion):
    _check(criterion, 1)


def test_criterion_2_planner_oracle_agreement(criterion):
    _check(criterion, 2)


def test_criterion_3_open_loop_rates(criterion):
    _check(criterion, 3)


def test_criterion_4_perfect_oracle_recovery(criterion):
    _check(criterion, 4)


def test_criterion_5_policy_ordering(criterion):
    _check(criterion, 5)


def test_criterion_6_oracle_calibration(criterion):
    _check(criterion, 6)


def test_criterion_7_determinism(criterion):
    _check(criterion, 7)


def test_criterion_8_majority_rule(criterion):
    _check(criterion, 8)


if __name__ == "__main__":
    failed = 0
    for number, title, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})", flush=True)
    sys.exit(1 if failed else 0)
