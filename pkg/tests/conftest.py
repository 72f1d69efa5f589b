import functools

import pytest

from infodesign import corpus
from infodesign.backward import measure_slack, solve
from infodesign.grid import BeliefGrid

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


@functools.lru_cache(maxsize=None)
def solved(name: str, mode: str, M: int = 20):
    """Solved corpus game, cached across tests: (spec, policy, tables, slack)."""
    spec = corpus.get(name)
    policy, tables = solve(spec, mode, BeliefGrid(spec.n_states, M))
    return spec, policy, tables, measure_slack(policy)


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        verdict = "PASS" if passed else "FAIL"
        ACCEPTANCE_RESULTS[number] = (verdict, detail)
        print(f"criterion {number}: {verdict} ({detail})")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        verdict, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")
