import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_task, make_vol
from wcb.assignment import (
    AssignmentError,
    RemunerationPolicy,
    SkillEncoder,
    UtilityWeights,
    assign_round,
    budget_ok,
    candidate_utility,
    covers,
    remuneration,
)
from wcb.model import SkillCatalog

W = UtilityWeights()
COST = RemunerationPolicy("cost_coverage")


def test_weights_must_sum_to_one():
    with pytest.raises(AssignmentError):
        UtilityWeights(0.5, 0.5, 0.5)
    with pytest.raises(AssignmentError):
        UtilityWeights(1.5, -0.5, 0.0)


def test_utility_full_cover():
    v = make_vol(expense=0.0, skills=("a", "b"), willingness=1.0)
    t = make_task(skills=("a", "b"))
    assert candidate_utility(v, t, set(), W) == pytest.approx(2 / 3, abs=1e-12)


def test_utility_requires_new_skill():
    with pytest.raises(AssignmentError):
        candidate_utility(make_vol(skills=("a",)), make_task(skills=("a", "b")), {"a"}, W)


def test_utility_monotone_in_willingness():
    t = make_task(skills=("a",))
    lo = candidate_utility(make_vol(willingness=0.2), t, set(), W)
    hi = candidate_utility(make_vol(willingness=0.3), t, set(), W)
    assert hi > lo


def test_two_part_cover():
    alloc = assign_round([make_task(skills=("a", "b"))],
                         [make_vol("v1", skills=("a",)), make_vol("v2", skills=("b",))], W, COST, 1)
    assert set(alloc.volunteers("t1")) == {"v1", "v2"}


def test_incomplete_cover_releases_picks():
    alloc = assign_round([make_task(skills=("a", "b"))], [make_vol(skills=("a",))], W, COST, 1)
    assert len(alloc) == 0 and alloc.assigned_ids() == set()


def test_budget_blocks_second_volunteer():
    vols = [make_vol("v1", 39.9, ("a",)), make_vol("v2", 39.9, ("b",))]
    alloc = assign_round([make_task(budget=50, skills=("a", "b"))], vols, W, COST, 1)
    assert len(alloc) == 0


def test_released_volunteer_serves_later_task():
    tasks = [make_task("t1", skills=("a", "b"), arrival=0), make_task("t2", skills=("a",), arrival=1)]
    alloc = assign_round(tasks, [make_vol("v1", skills=("a",))], W, COST, 1)
    assert list(alloc.entries) == ["t2"]


def test_tie_break_by_volunteer_id():
    vols = [make_vol("v2"), make_vol("v1")]
    alloc = assign_round([make_task()], vols, W, COST, 1)
    assert alloc.volunteers("t1") == ["v1"]


def test_task_order_by_arrival_then_id():
    tasks = [make_task("t2", arrival=0), make_task("t1", arrival=0), make_task("t0", arrival=5)]
    alloc = assign_round(tasks, [make_vol("v1")], W, COST, 1)
    assert list(alloc.entries) == ["t1"]


@pytest.mark.parametrize("policy,round_,expect", [
    (RemunerationPolicy("cost_coverage"), 4, 39.9),
    (RemunerationPolicy("fixed"), 4, 39.9),
    (RemunerationPolicy("training", base=60, slope=10), 7, 0.0),
    (RemunerationPolicy("training", base=60, slope=10), 3, 40.0),
    (RemunerationPolicy("increasing", base=20, slope=5), 3, 30.0),
])
def test_remuneration(policy, round_, expect):
    assert remuneration(policy, make_vol(expense=39.9), round_) == pytest.approx(expect, abs=1e-12)


def test_flat_policy_pays_flat_amount():
    pol = RemunerationPolicy("increasing", base=20, slope=5)
    alloc = assign_round([make_task()], [make_vol(expense=3.0)], W, pol, 3)
    assert alloc.payments() == {"v1": 30.0}


def test_encoder_matches_sets():
    cat = SkillCatalog.numbered(130)
    enc = SkillEncoder(cat)
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = frozenset(rng.choice(cat.skills, 20, replace=False))
        b = frozenset(rng.choice(cat.skills, 20, replace=False))
        got = int(np.bitwise_count(enc.encode(a) & enc.encode(b)).sum())
        assert got == len(a & b)


# --- exhaustive oracle on small instances -----------------------------------


def feasible_maps(tasks, vols, pay):
    """Every exclusive task -> volunteer-subset map whose bundles cover and fit the budget."""
    options = []
    for t in tasks:
        opts = [None]
        for k in range(1, len(vols) + 1):
            for combo in itertools.combinations(vols, k):
                have = set().union(*(v.skills for v in combo))
                if t.required_skills <= have and sum(pay(v) for v in combo) <= t.budget + 1e-9:
                    opts.append(frozenset(v.id for v in combo))
        options.append(opts)
    out = set()
    for choice in itertools.product(*options):
        used = [c for c in choice if c is not None]
        if sum(len(c) for c in used) == len(frozenset().union(*used)) if used else True:
            out.add(tuple(choice))
    return out


small_skill = st.frozensets(st.sampled_from("abc"), min_size=1, max_size=3)


@st.composite
def small_instance(draw):
    nt = draw(st.integers(1, 2))
    nv = draw(st.integers(0, 4))
    tasks = [make_task(f"t{i}", draw(st.sampled_from([10.0, 25.0, 50.0, 90.0])), draw(small_skill),
                       arrival=float(i)) for i in range(nt)]
    vols = [make_vol(f"v{i}", draw(st.sampled_from([5.0, 20.0, 39.9])),
                     draw(st.frozensets(st.sampled_from("abc"), max_size=3)),
                     willingness=draw(st.floats(0, 1))) for i in range(nv)]
    policy = draw(st.sampled_from([
        COST, RemunerationPolicy("training", 30, 5), RemunerationPolicy("increasing", 10, 5)]))
    return tasks, vols, policy, draw(st.integers(1, 6))


@settings(max_examples=300, deadline=None)
@given(small_instance())
def test_greedy_within_exhaustive_feasible_set(inst):
    tasks, vols, policy, r = inst
    alloc = assign_round(tasks, vols, W, policy, r)
    got = tuple(frozenset(alloc.volunteers(t.id)) if t.id in alloc else None for t in tasks)
    assert got in feasible_maps(tasks, vols, lambda v: remuneration(policy, v, r))
