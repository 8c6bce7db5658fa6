import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from planmon.pddl import Atom, GroundAction, GroundTask
from planmon.planner import (BudgetExceeded, Plan, Solved, Unsolvable, check_plan, format_plan,
                             parse_plan, plan, replan, validate_plan)
from planmon.tasks import load_task

from oracles import random_task, replay, shortest_length

EXPECTED_PLANS = {
    "clean_dishes": ["find(plate)", "pickup(plate)", "find(sink)", "wash(plate)"],
    "serve_breakfast": ["find(bread)", "pickup(bread)", "find(plate)", "place_on(bread, plate)",
                        "find(tv)", "turnon(tv)"],
    "eat_apple": ["find(fridge)", "open(fridge)", "find(apple)", "pickup(apple)", "find(knife)",
                  "pickup(knife)", "cutintohalf(apple)"],
}


@pytest.mark.parametrize("task_id", EXPECTED_PLANS)
def test_bundled_plans(task_id):
    out = plan(load_task(task_id))
    assert isinstance(out, Solved)
    assert out.plan.lines() == EXPECTED_PLANS[task_id]
    assert validate_plan(load_task(task_id), out.plan)


def test_goal_in_init_gives_empty_plan():
    task = load_task("clean_dishes")
    assert plan(task.with_init(task.goal)) == Solved(Plan())


def test_unreachable_goal_is_unsolvable():
    g = Atom("g")
    task = GroundTask("t", (), frozenset({g, Atom("h")}), frozenset(), frozenset({g}),
                      (GroundAction((0,), "a", (), frozenset(), frozenset({Atom("h")}), frozenset()),))
    assert plan(task) == Unsolvable()


def test_budget_exceeded():
    task = load_task("eat_apple")
    out = plan(task, max_expansions=3)
    assert isinstance(out, BudgetExceeded) and out.expanded == 3


def test_validate_examples():
    task = load_task("clean_dishes")
    good = parse_plan("\n".join(EXPECTED_PLANS["clean_dishes"]), task)
    assert validate_plan(task, good)
    assert validate_plan(task.with_init(task.goal), Plan())
    bad = Plan((task.action("wash(plate)"),))
    assert not validate_plan(task, bad)
    assert check_plan(task, bad.steps) == "step 1 inapplicable"
    assert check_plan(task, good.steps[:2]) == "goal not reached"


def test_replan_after_belief_repair_reacquires_plate():
    task = load_task("clean_dishes")
    belief = frozenset({Atom("on", ("plate", "table")), Atom("near", ("sink",))})
    out = replan(task, belief)
    assert out.plan.lines()[0] == "find(plate)"
    assert out.plan.lines() == ["find(plate)", "pickup(plate)", "wash(plate)"]


def test_replan_edge_cases():
    task = load_task("clean_dishes")
    assert replan(task, task.goal) == Solved(Plan())
    g = Atom("g")
    t = GroundTask("t", (), frozenset({g, Atom("h")}), frozenset(), frozenset({g}),
                   (GroundAction((0,), "a", (), frozenset({Atom("h")}), frozenset({g}), frozenset()),))
    assert replan(t, frozenset()) == Unsolvable()
    with pytest.raises(ValueError):
        replan(task, {Atom("bogus")})


def test_plan_file_round_trip():
    task = load_task("serve_breakfast")
    p = plan(task).plan
    text = format_plan(p)
    assert text.splitlines() == EXPECTED_PLANS["serve_breakfast"]
    assert parse_plan("; header\n" + text.replace("place_on(bread, plate)", "(place_on bread plate)"), task) == p
    with pytest.raises(ValueError, match="line 1"):
        parse_plan("fly(plate)", task)


def test_against_brute_force_oracle():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    for _ in range(500):
        task = random_task(rng)
        expected = shortest_length(task)
        out = plan(task)
        if expected is None:
            assert out == Unsolvable()
        else:
            assert isinstance(out, Solved)
            assert len(out.plan) == expected
            assert replay(task, out.plan.steps)
    assert time.perf_counter() - t0 < 60


def test_determinism_and_tie_break():
    a0 = GroundAction((0,), "a", (), frozenset(), frozenset({Atom("g")}), frozenset())
    a1 = GroundAction((1,), "b", (), frozenset(), frozenset({Atom("g")}), frozenset())
    task = GroundTask("t", (), frozenset({Atom("g")}), frozenset(), frozenset({Atom("g")}), (a1, a0))
    assert plan(task).plan.lines() == ["a()"]
    for tid in EXPECTED_PLANS:
        assert format_plan(plan(load_task(tid)).plan) == format_plan(plan(load_task(tid)).plan)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_soundness_property(seed):
    task = random_task(random.Random(seed))
    out = plan(task)
    if isinstance(out, Solved):
        assert validate_plan(task, out.plan)
        assert replay(task, out.plan.steps)
    else:
        assert shortest_length(task) is None
