"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line through ``record_criterion``; the lines
are also printed in the terminal summary under "acceptance criteria".
"""
import time

import numpy as np

from conftest import solved
from gamegen import random_spec
from infodesign import cli, corpus
from infodesign.backward import evaluate_value, measure_slack, solve
from infodesign.forward import exact_payoff, make_strategy, rollout
from infodesign.game import GameSpec, babbling, update_on_action, update_on_signal
from infodesign.grid import BeliefGrid
from infodesign.stage import SolverConfig, pbe_residual
from infodesign.verify import check_cpse, check_pbe, full_info_dp


# -- 1. belief filter against explicit joint enumeration ------------------------------------


def _joint_tensor(spec, gammas, pis):
    """Joint law of (x1, s1, a1, x2, s2, a2, ..., xT, sT) as one array."""
    J = spec.initial[:, None] * gammas[0]
    for t in range(1, spec.horizon):
        K = np.einsum("a,xay,ys->xays", pis[t - 1], spec.transition, gammas[t])
        J = J[..., :, :, None, None, None] * K[:, None]
    return J


def _filter_error(spec, gammas, pis) -> tuple[float, int]:
    """Max gap between chained updates and enumerated conditionals, and histories checked."""
    J = _joint_tensor(spec, gammas, pis)
    worst, count = 0.0, 0

    def marginal(tensor, axis):
        other = tuple(k for k in range(tensor.ndim) if k != axis)
        m = tensor.sum(axis=other)
        return m / m.sum()

    def visit(tensor, t, mu):
        # axes: x_1..x_{t-1} (masked, summed out), then x_t, s_t, a_t, ...
        nonlocal worst, count
        ax = t - 1
        worst = max(worst, float(np.abs(marginal(tensor, ax) - mu).max()))
        count += 1
        for s in range(spec.n_signals):
            Js = np.take(tensor, s, axis=ax + 1)
            if Js.sum() <= 1e-10:
                continue
            nu = update_on_signal(mu, gammas[t - 1], s)
            worst = max(worst, float(np.abs(marginal(Js, ax) - nu).max()))
            if t == spec.horizon:
                continue
            for a in range(spec.n_joint):
                Ja = np.take(Js, a, axis=ax + 1)
                for r in spec.reward_values(a):
                    match = np.all(np.abs(spec.receiver_rewards[:, :, a] - r[:, None]) <= 1e-9, axis=0)
                    shape = [1] * Ja.ndim
                    shape[ax] = spec.n_states
                    Jr = Ja * match.reshape(shape)
                    if Jr.sum() <= 1e-10:
                        continue
                    visit(Jr, t + 1, update_on_action(nu, a, r, spec))

    visit(J, 1, spec.initial)
    return worst, count


def test_criterion_1_belief_filter(record_criterion):
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst, histories = 0.0, 0
    for _ in range(50):
        spec = random_spec(rng, n_receivers=1)
        gammas = rng.dirichlet(np.ones(spec.n_signals), size=(spec.horizon, spec.n_states))
        # some rows become pure so that zero-probability branches also occur
        pure = rng.random((spec.horizon, spec.n_states)) < 0.3
        gammas[pure] = np.eye(spec.n_signals)[rng.integers(spec.n_signals, size=int(pure.sum()))]
        pis = rng.dirichlet(np.ones(spec.n_joint), size=spec.horizon)
        err, n = _filter_error(spec, gammas, pis)
        worst, histories = max(worst, err), histories + n
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-10 and elapsed < 10
    record_criterion(1, passed, f"max error {worst:.2e} over {histories} histories, {elapsed:.1f}s")
    assert passed


# -- 2. one-shot persuasion recovery --------------------------------------------------------


def test_criterion_2_judge_recovery(record_criterion):
    spec = corpus.judge()
    start = time.perf_counter()
    values = {}
    for M in (25, 50, 100, 200):
        _, tables = solve(spec, "cpse", BeliefGrid(2, M))
        values[M] = evaluate_value(tables, "sender", 1, spec.initial)
    elapsed = time.perf_counter() - start
    errors = [abs(v - 0.6) for v in values.values()]
    trend = all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    passed = abs(values[100] - 0.6) <= 0.02 and trend and elapsed < 30
    detail = ", ".join(f"M={M}: {v:.10f}" for M, v in values.items())
    record_criterion(2, passed, f"{detail}; errors {[f'{e:.1e}' for e in errors]}, "
                                f"{'non-increasing' if trend else 'not monotone'}, {elapsed:.1f}s")
    assert passed


# -- 3. PBE no-deviation --------------------------------------------------------------------


def test_criterion_3_pbe_no_deviation(record_criterion):
    M = 20
    start = time.perf_counter()
    lines, passed = [], True
    assert len(corpus.PBE_CORPUS) == 5
    assert any(corpus.get(n).n_receivers == 2 for n in corpus.PBE_CORPUS)
    for name in corpus.PBE_CORPUS:
        spec, policy, _, slack = solved(name, "pbe", M)
        assert (spec.n_states, spec.n_signals, spec.horizon) == (2, 2, 2)
        reports = check_pbe(spec, make_strategy(policy), slack=slack.deviation)
        gain = max(r.gain for r in reports)
        ok = all(r.passed for r in reports)
        passed &= ok
        lines.append(f"{name}: max gain {gain:.2e}, C={float(slack.deviation.max()) * M:.2e}")
    elapsed = time.perf_counter() - start
    passed &= elapsed < 300
    record_criterion(3, passed, "; ".join(lines) + f"; {elapsed:.1f}s")
    assert passed


# -- 4. cPSE no-deviation -------------------------------------------------------------------


def test_criterion_4_cpse_no_deviation(record_criterion):
    start = time.perf_counter()
    lines, passed = [], True
    assert len(corpus.CPSE_CORPUS) == 3
    for name in corpus.CPSE_CORPUS:
        spec, policy, _, slack = solved(name, "cpse")
        assert spec.horizon <= 2
        receiver, sender = check_cpse(spec, make_strategy(policy), slack=slack.deviation)
        passed &= receiver.passed and sender.passed
        lines.append(f"{name}: receiver gain {receiver.gain:.2e}, sender gain {sender.gain:.2e}"
                     + (" (restricted)" if sender.restricted else ""))
    elapsed = time.perf_counter() - start
    passed &= elapsed < 300
    record_criterion(4, passed, "; ".join(lines) + f"; {elapsed:.1f}s")
    assert passed


# -- 5. babbling is a stage fixed point -----------------------------------------------------


def test_criterion_5_babbling_fixed_point(record_criterion):
    worst, points = 0.0, 0
    for name in corpus.ALL:
        spec, policy, _, _ = solved(name, "pbe")
        gamma = babbling(spec.n_states, spec.n_signals)
        for t in range(1, spec.horizon + 1):
            ctx, responder = policy.context(t), policy.responder(t)
            for mu in policy.grid.points:
                worst = max(worst, pbe_residual(ctx, mu, gamma, responder))
                points += 1
    passed = worst <= 1e-9
    record_criterion(5, passed, f"max babbling gain {worst:.2e} over {points} (instance, t, belief) points")
    assert passed


# -- 6. value / rollout consistency ---------------------------------------------------------


CORPUS_RUNS = [(name, "pbe") for name in corpus.PBE_CORPUS] + [(name, "cpse") for name in corpus.CPSE_CORPUS]


def test_criterion_6_rollout_consistency(record_criterion):
    lines, passed = [], True
    for k, (name, mode) in enumerate(CORPUS_RUNS):
        spec, policy, tables, slack = solved(name, mode)
        strategy = make_strategy(policy)
        result = rollout(spec, strategy, 100_000, seed=1000 + k)
        mean, se = result.mean(), result.stderr()
        exact = exact_payoff(spec, strategy).values
        sender = evaluate_value(tables, "sender", 1, spec.initial)
        tabulated = np.concatenate([[spec.initial @ sender if mode == "pbe" else sender],
                                    evaluate_value(tables, "receiver", 1, spec.initial)])
        band = 4 * se + 1e-9
        vs_exact = float(np.max(np.abs(mean - exact) / band))
        ok = np.all(np.abs(mean - exact) <= band) and np.all(np.abs(mean - tabulated) <= band + slack.value)
        passed &= bool(ok)
        lines.append(f"{name}/{mode}: |mean-exact| = {vs_exact:.2f} x 4SE, "
                     f"|exact-table| {float(np.max(np.abs(exact - tabulated))):.1e}")
    record_criterion(6, passed, "; ".join(lines))
    assert passed


# -- 7. aligned rewards: information can only be lost ----------------------------------------


def _aligned_instances():
    yield "aligned", corpus.aligned()
    yield "aligned_cpse", corpus.aligned_cpse()
    rng = np.random.default_rng(7)
    for k in range(4):
        base = random_spec(rng, n_states=2, n_signals=2, horizon=2)
        yield f"random{k}", GameSpec(2, 2, 1, base.action_counts, base.transition, base.initial,
                                     base.receiver_rewards[0].copy(), base.receiver_rewards,
                                     2, discount=base.discount)


def test_criterion_7_aligned_upper_bound(record_criterion):
    lines, passed = [], True
    for name, spec in _aligned_instances():
        policy, tables = solve(spec, "cpse", BeliefGrid(2, 20), SolverConfig(cpse_grid=10))
        slack = measure_slack(policy)
        value = evaluate_value(tables, "sender", 1, spec.initial)
        bound = full_info_dp(spec)[0]
        ok = value <= bound + 1e-9
        result = rollout(spec, make_strategy(policy), 2000, seed=3)
        revealing = bool(np.all(result.nu.max(axis=-1) == 1.0))
        if revealing:
            ok &= abs(value - bound) <= slack.value[0] + 1e-9
        passed &= ok
        lines.append(f"{name}: {value:.6f} <= {bound:.6f}" + (" (revealing, equal)" if revealing else ""))
    record_criterion(7, passed, "; ".join(lines))
    assert passed


# -- 8. determinism -------------------------------------------------------------------------


def test_criterion_8_determinism(tmp_path, record_criterion):
    from test_cli import SPECS, outputs

    lines, passed = [], True
    for spec_name, mode in (("judge", "cpse"), ("two_receivers", "pbe")):
        argv = ["rollout", "--spec", str(SPECS / f"{spec_name}.json"), "--mode", mode,
                "--paths", "5000", "--seed", "42"]
        codes = [cli.run(argv + ["--out", str(tmp_path / spec_name / run)]) for run in ("a", "b")]
        a, b = outputs(tmp_path / spec_name / "a"), outputs(tmp_path / spec_name / "b")
        ok = codes == [0, 0] and a == b and "trajectories.csv" in a
        passed &= ok
        lines.append(f"{spec_name}/{mode}: {len(a)} files {'identical' if a == b else 'differ'}")
    record_criterion(8, passed, "; ".join(lines))
    assert passed
