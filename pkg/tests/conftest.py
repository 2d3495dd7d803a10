import pytest

from wcb.model import Task, Volunteer


def make_task(tid="t1", budget=100.0, skills=("a",), arrival=0.0, duration=5.0):
    return Task(tid, budget, frozenset(skills), arrival, duration)


def make_vol(vid="v1", expense=10.0, skills=("a",), arrival=0.0, departure=1e9,
             willingness=0.5, bias=0.5, rating=0.5):
    return Volunteer(vid, expense, frozenset(skills), arrival, departure, willingness, bias, rating)


@pytest.fixture
def tiny_config():
    from wcb.sim import SimulationConfig

    return SimulationConfig(
        rounds=3, round_length=10, replications=2, task_rate=0.5, volunteer_rate=4,
        catalog_size=12, volunteer_skill_mean=3, task_skill_mean=3, volunteer_stay_mean=40,
    )


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
