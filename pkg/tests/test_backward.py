import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import solved
from gamegen import random_spec, seeds
from infodesign import corpus
from infodesign.backward import (
    StageFailure,
    UnsolvedBelief,
    evaluate_value,
    measure_slack,
    policy_csv,
    recursion_error,
    solve,
    values_csv,
)
from infodesign.game import GameSpec
from infodesign.grid import BeliefGrid, Interp
from infodesign.stage import NoFixedPointFound, SolverConfig
from infodesign.verify import full_info_dp


def test_single_signal_reduces_to_prior_response():
    spec = corpus.judge()
    spec = GameSpec(2, 1, 1, (2,), spec.transition, spec.initial, spec.sender_reward,
                    spec.receiver_rewards, 1)
    for mode in ("pbe", "cpse"):
        policy, tables = solve(spec, mode, BeliefGrid(2, 10))
        mu = spec.initial
        # the judge acquits at the prior: correct with probability 0.7
        assert evaluate_value(tables, "receiver", 1, mu, 0) == pytest.approx(0.7)
        v = evaluate_value(tables, "sender", 1, mu)
        assert float(np.sum(mu * v) if mode == "pbe" else v) == pytest.approx(0.0)


def test_zero_sender_reward_gives_zero_tables():
    spec = corpus.conflict()
    spec = GameSpec(2, 2, 1, (2,), spec.transition, spec.initial, np.zeros((2, 2)),
                    spec.receiver_rewards, 2)
    for mode in ("pbe", "cpse"):
        _, tables = solve(spec, mode, BeliefGrid(2, 8))
        for t in (1, 2, 3):
            assert np.all(tables.sender[t] == 0.0)


def test_judge_tabulated_value():
    _, _, tables, _ = solved("judge", "cpse", 100)
    assert evaluate_value(tables, "sender", 1, [0.7, 0.3]) == pytest.approx(0.6, abs=0.02)


def test_evaluate_value_lookups():
    _, _, tables, _ = solved("conflict", "pbe")
    grid = tables.grid
    g = 7
    assert evaluate_value(tables, "receiver", 1, grid.points[g], 0) == tables.receiver[1][g, 0]
    a, b = grid.points[7], grid.points[8]
    mid = evaluate_value(tables, "receiver_plus", 2, (a + b) / 2, 0)
    assert mid == pytest.approx((tables.receiver_plus[2][7, 0] + tables.receiver_plus[2][8, 0]) / 2)
    near = BeliefGrid(2, 20, Interp.NEAREST)
    tables.grid, saved = near, tables.grid
    try:
        q = grid.points[7] * 0.9 + grid.points[8] * 0.1
        assert evaluate_value(tables, "receiver", 1, q, 0) == tables.receiver[1][7, 0]
    finally:
        tables.grid = saved


@pytest.mark.parametrize("name,mode", [("conflict", "pbe"), ("two_receivers", "pbe"),
                                       ("persuasion_dynamic", "cpse"), ("steering", "pbe")])
def test_recursion_identity(name, mode):
    _, policy, _, _ = solved(name, mode)
    assert recursion_error(policy) <= 1e-9


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_tables_are_bounded_and_stages_converged(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n_states=2, horizon=2)
    spec = GameSpec(2, spec.n_signals, 1, spec.action_counts, spec.transition, spec.initial,
                    spec.sender_reward, spec.receiver_rewards, 2, discount=1.0)
    for mode in ("pbe", "cpse"):
        policy, tables = solve(spec, mode, BeliefGrid(2, 6), SolverConfig(cpse_grid=6))
        assert not policy.partial
        lo = min(spec.sender_reward.min(), spec.receiver_rewards.min())
        hi = max(spec.sender_reward.max(), spec.receiver_rewards.max())
        for table in (tables.sender, tables.receiver, tables.receiver_plus):
            for t, arr in table.items():
                remaining = spec.horizon - t + 1  # periods left, including t
                assert np.all(np.isfinite(arr))
                assert np.all(arr >= remaining * lo - 1e-9) and np.all(arr <= remaining * hi + 1e-9)
        for t in range(1, spec.horizon + 1):
            assert all(d.residual <= 1e-6 for d in policy.sender_diag[t])
        assert np.all(tables.sender[spec.horizon + 1] == 0)


def test_refinement_trend_on_off_grid_prior():
    spec = corpus.judge()
    spec = GameSpec(2, 2, 1, (2,), spec.transition, np.array([0.69, 0.31]), spec.sender_reward,
                    spec.receiver_rewards, 1)
    exact = 0.31 / 0.5  # concave envelope of the conviction indicator
    values = []
    for M in (10, 20, 40, 80):
        _, tables = solve(spec, "cpse", BeliefGrid(2, M))
        values.append(evaluate_value(tables, "sender", 1, spec.initial))
    changes = np.abs(np.diff(values))
    print("refinement values", values, "changes", changes)
    assert all(b <= a + 1e-9 for a, b in zip(changes, changes[1:]))
    assert abs(values[-1] - exact) <= 0.02


def test_aligned_full_revelation_matches_full_information_dp():
    spec, policy, tables, _ = solved("aligned_cpse", "cpse")
    gamma = policy.sender_prescription(1, spec.initial)
    assert np.array_equal(np.sort(gamma, axis=1), [[0.0, 1.0], [0.0, 1.0]])
    assert gamma[0].argmax() != gamma[1].argmax()  # fully revealing
    assert evaluate_value(tables, "sender", 1, spec.initial) == pytest.approx(full_info_dp(spec)[0])


def test_stage_failure_marks_policy_partial(monkeypatch):
    import infodesign.backward as backward

    real = backward.sender_stage

    def flaky(ctx, mu, responder):
        if ctx.t == 2 and mu[0] == 0.5:
            raise NoFixedPointFound("injected")
        return real(ctx, mu, responder)

    monkeypatch.setattr(backward, "sender_stage", flaky)
    spec = corpus.conflict()
    policy, tables = solve(spec, "pbe", BeliefGrid(2, 4))
    assert policy.partial
    assert policy.failures() == [("sender", 2, 2)]
    g = 2
    assert "injected" in policy.sender_diag[2][g].note
    assert isinstance(StageFailure(2, g, tables.grid.points[g], "x"), RuntimeError)
    assert np.all(np.isnan(tables.sender[2][g]))
    with pytest.raises(UnsolvedBelief):
        policy.sender_prescription(2, np.array([0.5, 0.5]))


def test_csv_exports_parse():
    spec, policy, tables, _ = solved("two_receivers", "pbe")
    rows = list(csv.DictReader(io.StringIO(values_csv(tables))))
    G = len(tables.grid)
    assert len(rows) == G * (spec.horizon + 1)
    r = rows[5]
    assert float(r["V_r_2"]) == tables.receiver[1][5, 1]
    assert float(r["Vplus_s_x1"]) == tables.sender[1][5, 1]
    prow = list(csv.DictReader(io.StringIO(policy_csv(policy))))
    assert len(prow) == G * spec.horizon
    assert float(prow[3]["sender_x1_s0"]) == policy.sender[1][3][1, 0]
    assert float(prow[3]["receiver_2_a1"]) == policy.receivers[1][1][3, 1]
    assert prow[3]["sender_status"] == "ok"


def test_slack_positive_off_grid_with_nearest_lookup():
    spec = corpus.judge()
    policy, _ = solve(spec, "cpse", BeliefGrid(2, 6))
    exact = measure_slack(policy, "exact")
    near = measure_slack(policy, "nearest")
    assert exact.complete and near.complete
    assert near.value[0] > 0 and exact.value[0] <= near.value[0]
