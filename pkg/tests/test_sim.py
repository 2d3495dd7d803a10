import logging

import numpy as np
import pytest

from conftest import make_task, make_vol
from wcb.model import SkillCatalog, write_tasks_csv, write_volunteers_csv
from wcb.sim import (
    SimulationConfig,
    SimulationError,
    SyntheticSource,
    WorldState,
    arrival_stamps,
    generate_arrivals,
    load_dataset,
    run_experiment,
    run_replication,
    run_round,
)


def test_arrival_count_tail_bounds():
    counts = [len(arrival_stamps(5, 50, np.random.default_rng(s))) for s in range(1000)]
    inside = np.mean([(175 <= c <= 325) for c in counts])
    assert inside >= 0.99
    assert abs(np.mean(counts) - 250) < 3


def test_arrival_mean_at_volunteer_rate():
    counts = [len(arrival_stamps(75, 50, np.random.default_rng(s))) for s in range(300)]
    assert abs(np.mean(counts) - 3750) < 0.01 * 3750


def test_arrival_stamps_inside_units():
    stamps = arrival_stamps(3, 4, np.random.default_rng(1), start=100)
    assert np.all((stamps >= 100) & (stamps < 104)) and np.all(np.diff(stamps) >= 0)
    assert arrival_stamps(5, 0, np.random.default_rng(1)).size == 0
    with pytest.raises(ValueError):
        arrival_stamps(0, 5, np.random.default_rng(1))


def test_generate_arrivals_entities(tiny_config):
    src = SyntheticSource(tiny_config)
    vols = generate_arrivals(4, 10, src, np.random.default_rng(0), kind="volunteer", start=20, first_serial=7)
    assert vols and vols[0].id == "v00000007"
    assert all(20 <= v.arrival_time < 30 and v.departure_time >= v.arrival_time for v in vols)
    assert all(1 <= len(v.skills) and v.skills <= set(src.catalog.skills) for v in vols)
    assert generate_arrivals(4, 0, src, np.random.default_rng(0), kind="task") == []


def write_pair(tmp_path, tasks, vols):
    tp, vp = tmp_path / "tasks.csv", tmp_path / "volunteers.csv"
    write_tasks_csv(tp, tasks)
    write_volunteers_csv(vp, vols)
    return tp, vp


def test_load_dataset_dedupes_with_warning(tmp_path, caplog):
    tp, vp = write_pair(tmp_path, [make_task(skills=("java", "sql"))],
                        [make_vol("v1"), make_vol("v1", expense=99.0)])
    with caplog.at_level(logging.WARNING):
        tasks, vols, cat = load_dataset(tp, vp)
    assert len(vols) == 1 and vols[0].expense == 10.0
    assert "duplicate" in caplog.text
    assert tasks[0].required_skills == {"java", "sql"}
    assert set(cat.skills) == {"a", "java", "sql"}


def test_load_dataset_rejects_invalid(tmp_path):
    tp, vp = write_pair(tmp_path, [make_task(budget=-5)], [make_vol()])
    with pytest.raises(ValueError):
        load_dataset(tp, vp)


def small_state(config, skills=("a",)):
    return WorldState.fresh(config, SkillCatalog(skills))


def test_empty_round_leaves_state_alone():
    cfg = SimulationConfig(round_length=10)
    state = small_state(cfg)
    state, rep = run_round(state, cfg)
    assert (rep.completed_tasks, rep.retained, rep.dropped, rep.active_volunteers) == (0, 0, 0, 0)
    assert rep.total_remuneration == 0 and rep.total_dividend == 0 and rep.sat_mean is None
    assert not state.open_tasks and not state.active and state.contingency.balance == 0.0


def test_hand_traced_single_task():
    cfg = SimulationConfig(round_length=10)
    state = small_state(cfg)
    task = make_task(budget=100.0, arrival=1.0)
    vol = make_vol(expense=30.0, arrival=2.0)
    state, rep = run_round(state, cfg, [task], [vol])
    assert rep.completed_tasks == 1 and rep.assigned_volunteers == 1
    assert state.contingency.balance == pytest.approx(70.0)
    assert state.ledgers["v1"].cumulative_income == pytest.approx(30.0)
    assert rep.total_dividend == 0 and rep.dropped == 0
    assert state.conservation_residual() == pytest.approx(0.0, abs=1e-9)


def test_all_assigned_means_no_dividend():
    cfg = SimulationConfig(round_length=10)
    state = small_state(cfg)
    run_round(state, cfg, [make_task("t1", 100)], [make_vol("v1", 30)])
    state, rep = run_round(state, cfg, [make_task("t2", 100, arrival=11)], [])
    assert rep.assigned_volunteers == 1 and rep.total_dividend == 0 and rep.dropped == 0


def test_unassigned_volunteer_gets_dividend_in_round_two():
    cfg = SimulationConfig(round_length=10, threshold=0.0)
    state = small_state(cfg)
    run_round(state, cfg, [make_task("t1", 100)], [make_vol("v1", 30), make_vol("v2", 30, skills=())])
    state, rep = run_round(state, cfg)
    # both unassigned now; fund 70 and gamma 0.5 -> 35 paid out, split by potential
    assert rep.total_dividend == pytest.approx(35.0)
    assert state.contingency.balance == pytest.approx(35.0)
    assert state.conservation_residual() == pytest.approx(0.0, abs=1e-9)


def test_baseline_pays_no_dividend_and_keeps_everyone():
    cfg = SimulationConfig(round_length=10, policy="fixed", threshold=1.0)
    state = small_state(cfg)
    run_round(state, cfg, [make_task("t1", 100)], [make_vol("v1", 30), make_vol("v2", 30, skills=())])
    state, rep = run_round(state, cfg)
    assert rep.total_dividend == 0 and rep.dropped == 0 and len(state.active) == 2
    assert rep.sat_count == 2  # scored for reporting


def test_departure_and_expiry():
    cfg = SimulationConfig(round_length=10)
    state = small_state(cfg)
    run_round(state, cfg, [make_task("t1", 1.0, arrival=0, duration=3)],
              [make_vol("v1", 30, departure=15)])
    assert "t1" in state.open_tasks  # too expensive, carried over
    state, rep = run_round(state, cfg)
    assert rep.expired_tasks == 1 and rep.departed == 1 and not state.active


def manual_replication(cfg, seed):
    """Same loop as run_replication but keeping every allocation map."""
    src = SyntheticSource(cfg)
    state = WorldState.fresh(cfg, src.catalog)
    state.keep_allocations = True
    for r in range(1, cfg.rounds + 1):
        rng = np.random.default_rng([seed, r])
        start = (r - 1) * cfg.round_length
        tasks = generate_arrivals(cfg.task_rate, cfg.round_length, src, rng, kind="task",
                                  start=start, first_serial=state.task_serial)
        vols = generate_arrivals(cfg.volunteer_rate, cfg.round_length, src, rng, kind="volunteer",
                                 start=start, first_serial=state.volunteer_serial)
        state.task_serial += len(tasks)
        state.volunteer_serial += len(vols)
        run_round(state, cfg, tasks, vols)
    return state


@pytest.mark.parametrize("policy", ["vrave", "fixed", "training", "increasing"])
def test_population_accounting_and_no_zombies(tiny_config, policy):
    cfg = tiny_config.replace(rounds=6, policy=policy)
    state = manual_replication(cfg, 5)
    prev = 0
    for rep in state.round_reports:
        assert rep.active_volunteers == prev + rep.newcomers_admitted - rep.departed - rep.dropped
        prev = rep.active_volunteers
    for i, alloc in enumerate(state.allocations):
        gone = {e["volunteer_id"] for e in state.events if e["round"] <= i}
        assert not (alloc.assigned_ids() & gone)
    assert abs(state.conservation_residual()) < 1e-6
    for led in state.ledgers.values():
        assert led.violations() == []


def test_replication_is_deterministic(tiny_config):
    a = run_replication(tiny_config, 3)
    b = run_replication(tiny_config, 3)
    assert a.reports == b.reports and a.seed == tiny_config.rng_seed ^ 3


def test_policies_share_arrivals(tiny_config):
    reps = [run_replication(tiny_config.replace(policy=p), 1) for p in ("vrave", "fixed")]
    assert [r.newcomers_admitted for r in reps[0].reports] == [r.newcomers_admitted for r in reps[1].reports]
    assert [r.tasks_admitted for r in reps[0].reports] == [r.tasks_admitted for r in reps[1].reports]


def test_workers_match_serial(tiny_config):
    serial = run_experiment(tiny_config)
    pooled = run_experiment(tiny_config.replace(workers=2))
    assert [r.reports for r in serial.replications] == [r.reports for r in pooled.replications]


def test_empty_dataset_gives_zero_summary(tmp_path):
    tp, vp = write_pair(tmp_path, [], [])
    cfg = SimulationConfig(replications=1, rounds=1, tasks_path=str(tp), volunteers_path=str(vp))
    summary = run_experiment(cfg).summary()
    for name, agg in summary.items():
        assert agg["mean"] == 0 and agg["median"] == 0 and agg["iqr"] == 0, name


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(threshold=1.5)
    with pytest.raises(ValueError):
        SimulationConfig(task_rate=0)
    with pytest.raises(ValueError):
        SimulationConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        SimulationConfig(dividend_eligibility="weekly")
    cfg = SimulationConfig.from_dict({"weights": {"w_skill": 0.5, "w_willingness": 0.25, "w_cost": 0.25}})
    assert SimulationConfig.from_dict(cfg.to_dict()) == cfg


def test_conservation_failure_names_replication(tiny_config, monkeypatch):
    monkeypatch.setattr(WorldState, "conservation_residual", lambda self: 1.0)
    with pytest.raises(SimulationError, match="replication 0"):
        run_replication(tiny_config, 0)
