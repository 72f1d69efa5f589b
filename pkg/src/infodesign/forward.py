"""Forward recursion: strategies, belief tracking and simulated play.

Beliefs along a history are always tracked with the exact Bayes maps; the
belief grid only enters when a prescription is fetched from the policy.

Randomness comes from the Philox counter-based generator keyed by the
seed.  Path ``i`` owns the block of ``D`` uniforms starting at output
``i * D`` (``D`` is a multiple of four, so this is counter ``i * D / 4``),
which makes every path reproducible on its own, independently of how many
paths are drawn or in what order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .backward import LOOKUPS, EquilibriumPolicy, UnsolvedBelief
from .game import GameSpec, OffSupport, joint_distribution, update_on_action, update_on_signal


class TreeTooLarge(RuntimeError):
    """The explicit history tree exceeds the configured node cap."""


class Strategy:
    """Behavioral strategy profile generated from belief-indexed prescriptions.

    Subclasses provide :meth:`sender_prescription` and
    :meth:`receiver_factors`; the belief system (exact Bayes updates with a
    uniform reset when Bayes' rule is silent) is shared.
    """

    def __init__(self, spec: GameSpec):
        self.spec = spec

    def initial_belief(self) -> np.ndarray:
        return self.spec.initial.copy()

    def sender_prescription(self, t: int, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def receiver_factors(self, t: int, nu: np.ndarray) -> tuple[np.ndarray, ...]:
        raise NotImplementedError

    def receiver_joint(self, t: int, nu: np.ndarray) -> np.ndarray:
        return joint_distribution(self.receiver_factors(t, nu))

    def after_signal(self, t: int, mu: np.ndarray, s: int) -> np.ndarray:
        return update_on_signal(mu, self.sender_prescription(t, mu), s, OffSupport.UNIFORM)

    def after_action(self, t: int, nu: np.ndarray, a: int, r) -> np.ndarray:
        return update_on_action(nu, a, r, self.spec, OffSupport.UNIFORM)


class PolicyStrategy(Strategy):
    """Strategy read off a solved :class:`EquilibriumPolicy`.

    ``lookup="exact"`` solves the stage at off-grid beliefs; ``"nearest"``
    plays the stored prescription of the L1-nearest grid point.
    """

    def __init__(self, policy: EquilibriumPolicy, lookup: str = "exact"):
        super().__init__(policy.spec)
        if lookup not in LOOKUPS:
            raise ValueError(f"unknown lookup {lookup!r}")
        self.policy, self.lookup = policy, lookup
        self.mode = policy.mode

    def sender_prescription(self, t, mu):
        return self.policy.sender_prescription(t, np.asarray(mu, dtype=float), self.lookup)

    def receiver_factors(self, t, nu):
        return self.policy.receiver_factors(t, np.asarray(nu, dtype=float), self.lookup)


def make_strategy(policy: EquilibriumPolicy, lookup: str = "exact") -> PolicyStrategy:
    return PolicyStrategy(policy, lookup)


# -- rollouts ----------------------------------------------------------------------


@dataclass
class Trajectory:
    path: int
    x: np.ndarray  # (T,)
    s: np.ndarray  # (T,)
    a: np.ndarray  # (T,) flattened joint actions
    r: np.ndarray  # (T, N) realized receiver rewards
    mu: np.ndarray  # (T, X)
    nu: np.ndarray  # (T, X)
    payoff: np.ndarray  # (1 + N,) discounted, sender first
    seed: int


@dataclass
class RolloutResult:
    seed: int
    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    payoff: np.ndarray  # (n, 1 + N)

    @property
    def n_paths(self) -> int:
        return len(self.payoff)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(i, self.x[i], self.s[i], self.a[i], self.r[i], self.mu[i], self.nu[i],
                          self.payoff[i], self.seed)

    def __iter__(self) -> Iterator[Trajectory]:
        return (self.trajectory(i) for i in range(self.n_paths))

    def mean(self) -> np.ndarray:
        n = self.n_paths
        if n == 0:
            return np.full(self.payoff.shape[1], np.nan)
        return np.array([math.fsum(col) / n for col in self.payoff.T])

    def stderr(self) -> np.ndarray:
        n = self.n_paths
        if n < 2:
            return np.zeros(self.payoff.shape[1])
        m = self.mean()
        return np.array([math.sqrt(math.fsum((col - mk) ** 2) / (n - 1) / n)
                         for col, mk in zip(self.payoff.T, m)])


def draws_per_path(spec: GameSpec) -> int:
    """Uniforms reserved per path, rounded up to a whole Philox block."""
    d = 1 + spec.horizon * (spec.n_receivers + 2)
    return 4 * math.ceil(d / 4)


def path_uniforms(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Uniforms of paths ``start..stop-1``; ``width`` must be a multiple of 4."""
    bitgen = np.random.Philox(key=int(seed), counter=start * width // 4)
    return np.random.Generator(bitgen).random((stop - start, width))


def _sample(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws from the rows of ``probs`` with uniforms ``u``."""
    cdf = np.cumsum(probs, axis=-1)
    return (u[:, None] >= cdf[:, :-1]).sum(axis=1)


def rollout(spec: GameSpec, strategy: Strategy, n_paths: int, seed: int = 0) -> RolloutResult:
    """Simulate ``n_paths`` independent plays of the game.

    Paths sharing a common history share one prescription lookup and one
    belief update, so the cost grows with the number of distinct histories
    rather than with the number of paths.
    """
    if n_paths < 0:
        raise ValueError("n_paths must be >= 0")
    T, N, X = spec.horizon, spec.n_receivers, spec.n_states
    n = int(n_paths)
    width = draws_per_path(spec)
    U = path_uniforms(seed, 0, n, width)
    xs = np.zeros((n, T), dtype=np.int64)
    ss = np.zeros((n, T), dtype=np.int64)
    acts = np.zeros((n, T), dtype=np.int64)
    rs = np.zeros((n, T, N))
    mus = np.zeros((n, T, X))
    nus = np.zeros((n, T, X))
    payoff = np.zeros((n, 1 + N))
    if n == 0:
        return RolloutResult(seed, xs, ss, acts, rs, mus, nus, payoff)

    class_of, _ = spec.reward_classes()
    x = _sample(np.broadcast_to(spec.initial, (n, X)), U[:, 0])
    group = np.zeros(n, dtype=np.int64)
    beliefs = [strategy.initial_belief()]
    for t in range(1, T + 1):
        col = 1 + (t - 1) * (N + 2)
        disc = spec.discount ** (t - 1)
        xs[:, t - 1] = x
        s = np.zeros(n, dtype=np.int64)
        prescriptions = []
        for k, mu in enumerate(beliefs):
            idx = np.flatnonzero(group == k)
            gamma = strategy.sender_prescription(t, mu)
            prescriptions.append(gamma)
            s[idx] = _sample(gamma[x[idx]], U[idx, col])
            mus[idx, t - 1] = mu
        ss[:, t - 1] = s
        keys, post = np.unique(np.stack([group, s], axis=1), axis=0, return_inverse=True)
        post = post.ravel()
        a = np.zeros(n, dtype=np.int64)
        post_beliefs = []
        for k, (g, sig) in enumerate(keys):
            idx = np.flatnonzero(post == k)
            nu = update_on_signal(beliefs[g], prescriptions[g], int(sig), OffSupport.UNIFORM)
            post_beliefs.append(nu)
            nus[idx, t - 1] = nu
            factors = strategy.receiver_factors(t, nu)
            profile = [_sample(np.broadcast_to(f, (len(idx), len(f))), U[idx, col + 1 + i])
                       for i, f in enumerate(factors)]
            a[idx] = np.ravel_multi_index(profile, spec.action_counts)
        acts[:, t - 1] = a
        r = spec.receiver_rewards[:, x, a].T  # (n, N)
        rs[:, t - 1] = r
        payoff[:, 0] += disc * spec.sender_reward[x, a]
        payoff[:, 1:] += disc * r
        if t == T:
            break
        keys, group = np.unique(np.stack([post, a, class_of[a, x]], axis=1), axis=0, return_inverse=True)
        group = group.ravel()
        beliefs = []
        for k, (p, act, _) in enumerate(keys):
            first = int(np.flatnonzero(group == k)[0])
            beliefs.append(strategy.after_action(t, post_beliefs[p], int(act), r[first]))
        x = _sample(spec.transition[x, a], U[:, col + N + 1])
    return RolloutResult(seed, xs, ss, acts, rs, mus, nus, payoff)


# -- exact enumeration --------------------------------------------------------------


@dataclass
class PathRecord:
    prob: float
    x: tuple[int, ...]
    s: tuple[int, ...]
    a: tuple[int, ...]
    payoff: np.ndarray  # (1 + N,) discounted
    rewards: np.ndarray  # (T, 1 + N) undiscounted per-period rewards


def enumerate_paths(spec: GameSpec, strategy: Strategy, node_cap: int = 10 ** 7) -> Iterator[PathRecord]:
    """Every positive-probability (x, s, a) path with its probability."""
    T, N = spec.horizon, spec.n_receivers
    nodes = 0

    def visit(t, x, mu, prob, hist, rewards):
        nonlocal nodes
        nodes += 1
        if nodes > node_cap:
            raise TreeTooLarge(f"history tree exceeds {node_cap} nodes")
        gamma = strategy.sender_prescription(t, mu)
        for s in np.flatnonzero(gamma[x] > 0):
            nu = strategy.after_signal(t, mu, int(s))
            joint = strategy.receiver_joint(t, nu)
            for a in np.flatnonzero(joint > 0):
                p = prob * gamma[x, s] * joint[a]
                r = spec.receiver_rewards[:, x, a]
                step = np.concatenate([[spec.sender_reward[x, a]], r])
                h = (hist[0] + (x,), hist[1] + (int(s),), hist[2] + (int(a),))
                rw = rewards + [step]
                if t == T:
                    rw_arr = np.array(rw)
                    disc = spec.discount ** np.arange(T)
                    yield PathRecord(p, *h, disc @ rw_arr, rw_arr)
                    continue
                mu_next = strategy.after_action(t, nu, int(a), r)
                for x2 in np.flatnonzero(spec.transition[x, a] > 0):
                    yield from visit(t + 1, int(x2), mu_next, p * spec.transition[x, a, x2], h, rw)

    mu1 = strategy.initial_belief()
    for x in np.flatnonzero(spec.initial > 0):
        yield from visit(1, int(x), mu1, float(spec.initial[x]), ((), (), ()), [])


@dataclass
class ExactPayoff:
    values: np.ndarray  # (1 + N,) expected discounted payoff, sender first
    per_period: np.ndarray  # (T, 1 + N) expected undiscounted reward per period
    n_paths: int


def exact_payoff(spec: GameSpec, strategy: Strategy, node_cap: int = 10 ** 7) -> ExactPayoff:
    """Expected payoffs by explicit enumeration of the history tree."""
    records = list(enumerate_paths(spec, strategy, node_cap))
    P1, T = spec.n_receivers + 1, spec.horizon
    values = np.array([math.fsum(rec.prob * rec.payoff[k] for rec in records) for k in range(P1)])
    per = np.array([[math.fsum(rec.prob * rec.rewards[t, k] for rec in records) for k in range(P1)]
                    for t in range(T)])
    return ExactPayoff(values, per, len(records))


# -- dumps -------------------------------------------------------------------------


def trajectories_csv(result: RolloutResult) -> str:
    """Trajectory dump: one row per (path, t); ``a`` is the flattened joint action."""
    n, T = result.x.shape
    N = result.r.shape[2]
    X = result.mu.shape[2]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "t", "x", "s", "a"] + [f"r_{i + 1}" for i in range(N)]
               + [f"mu_{k}" for k in range(X)] + [f"nu_{k}" for k in range(X)])
    for i in range(n):
        for t in range(T):
            w.writerow([i, t + 1, int(result.x[i, t]), int(result.s[i, t]), int(result.a[i, t])]
                       + [repr(float(v)) for v in result.r[i, t]]
                       + [repr(float(v)) for v in result.mu[i, t]]
                       + [repr(float(v)) for v in result.nu[i, t]])
    return buf.getvalue()


def write_trajectories(result: RolloutResult, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(trajectories_csv(result))
    return path
