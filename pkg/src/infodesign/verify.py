"""Brute-force oracles for equilibrium checks.

Nothing here calls the stage solvers or the backward recursion: a strategy
is treated as a black box mapping beliefs to prescriptions, the full
common-history tree is built explicitly, and best responses are computed by
backward induction on that tree with the oracle's own Bayes weights.

Two solution concepts are checked:

* :func:`check_pbe` -- every player, at every information set, against all
  pure behavioral deviations (a best reply in pure behavioral strategies
  always exists on a finite tree).
* :func:`check_cpse` -- the receivers' strategy must be an exact best reply
  to the committed sender strategy, and at every common history no pure
  commitment of the sender (re-solving the receivers' reply) may gain.

Sender commitments for a single receiver are enumerated exactly through
sets of attainable (receiver value, sender value) outcomes; only Pareto
points and the receiver-minimal point of each set are kept, which is all
the receiver's comparisons at ancestor nodes can use.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .game import GameSpec

DEVIATION_CLASSES = ("pure-behavioral", "one-shot")
MATCH_TOL = 1e-9


class TreeTooLarge(RuntimeError):
    """The history tree (or outcome enumeration) exceeds the node cap."""


@dataclass(frozen=True)
class OracleConfig:
    max_nodes: int = 200_000
    deviation_class: str = "pure-behavioral"
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.deviation_class not in DEVIATION_CLASSES:
            raise ValueError(f"deviation_class must be one of {DEVIATION_CLASSES}")


@dataclass
class DeviationReport:
    """Largest deviation gain found for one player.

    ``gain`` is the raw gain at the worst information set ``info_set``;
    ``tolerance`` is the base tolerance and ``slack`` the measured
    interpolation slack added to it.
    """

    player: int  # 0 = sender, i >= 1 = receiver i
    deviation: dict = field(default_factory=dict)
    equilibrium_payoff: float = 0.0
    deviation_payoff: float = 0.0
    gain: float = 0.0
    tolerance: float = 1e-6
    slack: float = 0.0
    info_set: str = ""
    restricted: bool = False
    belief_error: float = 0.0
    note: str = ""

    @property
    def net_gain(self) -> float:
        return self.gain - self.slack

    @property
    def passed(self) -> bool:
        return self.gain <= self.tolerance + self.slack and self.belief_error <= MATCH_TOL

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def render(self) -> str:
        who = "sender" if self.player == 0 else f"receiver {self.player}"
        lines = [
            f"{who}: {self.verdict}",
            f"  gain {self.gain:.6g} (net of slack {self.net_gain:.6g}) at {self.info_set or 'root'}",
            f"  tolerance {self.tolerance:.3g} + slack {self.slack:.3g}",
            f"  equilibrium payoff {self.equilibrium_payoff:.10g}, deviation payoff {self.deviation_payoff:.10g}",
        ]
        if self.belief_error:
            lines.append(f"  belief error {self.belief_error:.3g}")
        if self.restricted:
            lines.append("  deviation class restricted (see note)")
        if self.note:
            lines.append(f"  note: {self.note}")
        return "\n".join(lines)


def reports_csv(reports: list[DeviationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["player", "verdict", "gain", "net_gain", "tolerance", "slack", "equilibrium_payoff",
                "deviation_payoff", "info_set", "restricted", "belief_error"])
    for r in reports:
        w.writerow([r.player, r.verdict, repr(float(r.gain)), repr(float(r.net_gain)),
                    repr(float(r.tolerance)), repr(float(r.slack)), repr(float(r.equilibrium_payoff)),
                    repr(float(r.deviation_payoff)), r.info_set, int(r.restricted),
                    repr(float(r.belief_error))])
    return buf.getvalue()


# -- the explicit common-history tree ---------------------------------------------


def _classes(spec: GameSpec) -> tuple[list[list[int]], list[list[np.ndarray]]]:
    """Per joint action, the class id of each state and the class reward vectors."""
    cls, reps = [], []
    for a in range(spec.n_joint):
        ids, vals = [], []
        for x in range(spec.n_states):
            r = spec.receiver_rewards[:, x, a]
            for k, v in enumerate(vals):
                if np.max(np.abs(v - r)) <= MATCH_TOL:
                    ids.append(k)
                    break
            else:
                ids.append(len(vals))
                vals.append(r)
        cls.append(ids)
        reps.append(vals)
    return cls, reps


@dataclass
class _Post:
    t: int
    label: str
    nu: np.ndarray  # assessment belief
    b: np.ndarray  # oracle Bayes belief
    factors: tuple
    joint: np.ndarray
    children: dict = field(default_factory=dict)  # (a, c) -> _Pre


@dataclass
class _Pre:
    t: int
    label: str
    mu: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    posts: list = field(default_factory=list)
    bayes: bool = True


def _joint(factors) -> np.ndarray:
    out = np.ones(1)
    for f in factors:
        out = np.multiply.outer(out, np.asarray(f, dtype=float)).ravel()
    return out


class _Tree:
    def __init__(self, spec: GameSpec, strategy, beliefs=None, max_nodes: int = 200_000):
        self.spec, self.strategy = spec, strategy
        self.beliefs = beliefs or strategy
        self.cls, self.reps = _classes(spec)
        self.nodes = 0
        self.max_nodes = max_nodes
        self.belief_error = 0.0
        mu1 = np.asarray(self.beliefs.initial_belief(), dtype=float)
        self.belief_error = float(np.abs(mu1 - spec.initial).max())
        self.root = self._pre(1, "", mu1, spec.initial.copy())

    def _count(self):
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise TreeTooLarge(f"history tree exceeds {self.max_nodes} nodes")

    def _pre(self, t, label, mu, b) -> _Pre:
        self._count()
        gamma = np.asarray(self.strategy.sender_prescription(t, mu), dtype=float)
        node = _Pre(t, label, mu, b, gamma)
        for s in range(self.spec.n_signals):
            nu = np.asarray(self.beliefs.after_signal(t, mu, s), dtype=float)
            w = b * gamma[:, s]
            if w.sum() > 0:
                bs = w / w.sum()
                self.belief_error = max(self.belief_error, float(np.abs(bs - nu).max()))
            else:
                bs = nu
            node.posts.append(self._post(t, f"{label}s{t}={s}", nu, bs))
        return node

    def _post(self, t, label, nu, b) -> _Post:
        self._count()
        factors = tuple(np.asarray(f, dtype=float) for f in self.strategy.receiver_factors(t, nu))
        post = _Post(t, label, nu, b, factors, _joint(factors))
        if t == self.spec.horizon:
            return post
        Q = self.spec.transition
        for a in range(self.spec.n_joint):
            for c, r in enumerate(self.reps[a]):
                mu2 = np.asarray(self.beliefs.after_action(t, nu, a, r), dtype=float)
                mask = np.array([k == c for k in self.cls[a]])
                w = (b * mask) @ Q[:, a, :]
                if w.sum() > 0:
                    b2 = w / w.sum()
                    self.belief_error = max(self.belief_error, float(np.abs(b2 - mu2).max()))
                else:
                    b2 = mu2
                lab = f"{label},a{t}={a},r{t}={_fmt_r(r)}|"
                post.children[(a, c)] = self._pre(t + 1, lab, mu2, b2)
        return post

    def pre_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            for post in node.posts:
                stack.extend(post.children.values())

    def post_nodes(self):
        for node in self.pre_nodes():
            yield from node.posts


def _fmt_r(r) -> str:
    return "(" + ",".join(f"{float(v):g}" for v in r) + ")"


# -- values of the strategy profile, per current state -----------------------------


def _profile_values(tree: _Tree) -> tuple[dict, dict]:
    """W[node] of shape (1 + N, X): expected discounted payoff given the state."""
    spec = tree.spec
    R = np.concatenate([spec.sender_reward[None], spec.receiver_rewards], axis=0)  # (P, X, A)
    Wpre, Wpost = {}, {}

    def pre(node):
        vals = np.stack([post_(p) for p in node.posts], axis=-1)  # (P, X, S)
        Wpre[id(node)] = (vals * node.gamma[None]).sum(axis=-1)
        return Wpre[id(node)]

    def post_(node):
        q = R.copy()  # (P, X, A)
        if node.children:
            for a in range(spec.n_joint):
                for x in range(spec.n_states):
                    child = node.children[(a, tree.cls[a][x])]
                    q[:, x, a] += spec.discount * (pre(child) if id(child) not in Wpre else Wpre[id(child)]) \
                        @ spec.transition[x, a]
        Wpost[id(node)] = q @ node.joint
        return Wpost[id(node)]

    pre(tree.root)
    return Wpre, Wpost


# -- PBE ---------------------------------------------------------------------------------


def _sender_best(tree: _Tree) -> tuple[dict, dict]:
    """Sender's best pure behavioral reply per (pre node, state)."""
    spec = tree.spec
    Vpre, choice = {}, {}

    def pre(node):
        vals = np.stack([post_(p) for p in node.posts], axis=-1)  # (X, S)
        Vpre[id(node)] = vals.max(axis=1)
        choice[id(node)] = vals.argmax(axis=1)
        return Vpre[id(node)]

    def post_(node):
        q = spec.sender_reward.copy()
        if node.children:
            for a in range(spec.n_joint):
                for x in range(spec.n_states):
                    child = node.children[(a, tree.cls[a][x])]
                    q[x, a] += spec.discount * pre(child) @ spec.transition[x, a]
        return q @ node.joint

    pre(tree.root)
    return Vpre, choice


def _own_payoffs(P, factors, i):
    for j in reversed(range(len(factors))):
        if j != i:
            P = np.tensordot(P, factors[j], axes=([j], [0]))
    return P


def _receiver_best(tree: _Tree, i: int) -> tuple[dict, dict, dict]:
    """Receiver ``i``'s best pure reply: conditional values at post and pre nodes."""
    spec = tree.spec
    Rr = spec.receiver_rewards[i]
    Vpost, Vpre, choice = {}, {}, {}

    def pre(node):
        if id(node) in Vpre:
            return Vpre[id(node)]
        v = 0.0
        for s, post in enumerate(node.posts):
            p = float(node.b @ node.gamma[:, s])
            val = post_(post)
            v += p * val
        Vpre[id(node)] = v
        return v

    def post_(node):
        b = node.b
        q = b @ Rr  # (A,)
        if node.children:
            for a in range(spec.n_joint):
                for c in range(len(tree.reps[a])):
                    mass = sum(b[x] for x in range(spec.n_states) if tree.cls[a][x] == c)
                    q[a] += spec.discount * mass * pre(node.children[(a, c)])
        E = _own_payoffs(q.reshape(spec.action_counts), node.factors, i)
        Vpost[id(node)] = float(E.max())
        choice[id(node)] = int(E.argmax())
        return Vpost[id(node)]

    pre(tree.root)
    return Vpost, Vpre, choice


def _receiver_reports(tree: _Tree, W_post: dict, cfg: OracleConfig, slack) -> list[DeviationReport]:
    reports = []
    for i in range(tree.spec.n_receivers):
        Vpost, _, choice = _receiver_best(tree, i)
        best = None
        for node in tree.post_nodes():
            eq = float(node.b @ W_post[id(node)][i + 1])
            gain = Vpost[id(node)] - eq
            if best is None or gain > best[0] + 1e-15:
                best = (gain, node, eq, Vpost[id(node)])
        gain, node, eq, dev = best
        reports.append(DeviationReport(
            player=i + 1,
            deviation={n.label: choice[id(n)] for n in tree.post_nodes()},
            equilibrium_payoff=eq, deviation_payoff=dev, gain=max(gain, 0.0),
            tolerance=cfg.tolerance, slack=_slack_of(slack, i + 1), info_set=node.label,
            belief_error=tree.belief_error))
    return reports


def _slack_of(slack, player: int) -> float:
    if slack is None:
        return 0.0
    if np.isscalar(slack):
        return float(slack)
    return float(np.asarray(slack)[player])


def check_pbe(spec: GameSpec, strategy, beliefs=None, cfg: OracleConfig | None = None,
              slack=None) -> list[DeviationReport]:
    """Sequential-rationality check of a strategy profile and belief system.

    ``beliefs`` supplies ``initial_belief``/``after_signal``/``after_action``
    (defaults to the strategy's own).  ``slack`` is a scalar or a per-player
    array (sender first) added to the tolerance.  Returns one report per
    player, sender first.
    """
    cfg = cfg or OracleConfig()
    tree = _Tree(spec, strategy, beliefs, cfg.max_nodes)
    W_pre, W_post = _profile_values(tree)
    V, choice = _sender_best(tree)
    best = None
    for node in tree.pre_nodes():
        gains = V[id(node)] - W_pre[id(node)][0]
        x = int(np.argmax(gains))
        if best is None or gains[x] > best[0] + 1e-15:
            best = (float(gains[x]), node, x)
    gain, node, x = best
    deviation = {f"{n.label}x={k}": int(choice[id(n)][k]) for n in tree.pre_nodes()
                 for k in range(spec.n_states)}
    sender = DeviationReport(
        player=0, deviation=deviation, equilibrium_payoff=float(W_pre[id(node)][0][x]),
        deviation_payoff=float(V[id(node)][x]), gain=max(gain, 0.0), tolerance=cfg.tolerance,
        slack=_slack_of(slack, 0), info_set=f"{node.label}x={x}", belief_error=tree.belief_error)
    return [sender] + _receiver_reports(tree, W_post, cfg, slack)


def equilibrium_payoffs(spec: GameSpec, strategy, max_nodes: int = 200_000) -> np.ndarray:
    """Ex-ante payoffs (sender first) computed on the oracle's tree."""
    tree = _Tree(spec, strategy, None, max_nodes)
    W_pre, _ = _profile_values(tree)
    return W_pre[id(tree.root)] @ spec.initial


# -- cPSE ----------------------------------------------------------------------------------


class _TooMany(Exception):
    pass


def _prune(O: np.ndarray) -> np.ndarray:
    """Pareto points of (receiver, sender) outcomes plus the receiver-minimal one."""
    if len(O) <= 1:
        return O
    order = np.lexsort((-O[:, 1], -O[:, 0]))  # receiver desc, sender desc
    O = O[order]
    keep = [0]
    top = O[0, 1]
    for k in range(1, len(O)):
        if O[k, 1] > top:
            keep.append(k)
            top = O[k, 1]
    low = int(np.argmin(O[:, 0]))
    if low not in keep:
        keep.append(low)
    return O[sorted(keep)]


def _minkowski(sets: list[np.ndarray], cap: int) -> np.ndarray:
    out = np.zeros((1, 2))
    for O in sets:
        if len(out) * len(O) > cap:
            raise _TooMany
        out = _prune((out[:, None, :] + O[None, :, :]).reshape(-1, 2))
    return out


class _Commitments:
    """Attainable (receiver, sender) outcome sets for a single receiver.

    Weights are unnormalized state masses; outcome values are in the same
    mass units.
    """

    def __init__(self, spec: GameSpec, cls, cap: int):
        self.spec, self.cls, self.cap = spec, cls, cap
        self.pre_cache: dict = {}
        self.post_cache: dict = {}
        X, S = spec.n_states, spec.n_signals
        self.pure = [np.eye(S)[list(c)] for c in itertools.product(range(S), repeat=X)]

    def pre(self, t: int, w: np.ndarray) -> np.ndarray:
        if w.sum() <= 0:
            return np.zeros((1, 2))
        key = (t, w.tobytes())
        if key not in self.pre_cache:
            union = [self._commit(t, w, g) for g in self.pure]
            self.pre_cache[key] = _prune(np.concatenate(union))
            if len(self.pre_cache[key]) > self.cap:
                raise _TooMany
        return self.pre_cache[key]

    def _commit(self, t, w, gamma):
        return _minkowski([self.post(t, w * gamma[:, s]) for s in range(self.spec.n_signals)], self.cap)

    def post(self, t: int, w: np.ndarray) -> np.ndarray:
        if w.sum() <= 0:
            return np.zeros((1, 2))
        key = (t, w.tobytes())
        if key in self.post_cache:
            return self.post_cache[key]
        spec = self.spec
        per_action = []
        for a in range(spec.n_joint):
            imm = np.array([w @ spec.receiver_rewards[0, :, a], w @ spec.sender_reward[:, a]])
            if t < spec.horizon:
                sets = []
                for c in range(max(self.cls[a]) + 1):
                    mask = np.array([k == c for k in self.cls[a]])
                    sets.append(spec.discount * self.pre(t + 1, (w * mask) @ spec.transition[:, a, :]))
                per_action.append(imm + _minkowski(sets, self.cap))
            else:
                per_action.append(imm[None])
        lows = [O[:, 0].min() for O in per_action]
        chosen = []
        for a, O in enumerate(per_action):
            ok = np.ones(len(O), dtype=bool)
            for b_, low in enumerate(lows):
                if b_ < a:
                    ok &= O[:, 0] > low
                elif b_ > a:
                    ok &= O[:, 0] >= low
            chosen.append(O[ok])
        out = _prune(np.concatenate(chosen))
        self.post_cache[key] = out
        return out


class _OneShot:
    """Deviations at a single history, continuation play fixed by the strategy.

    Below the deviating history the sender keeps playing its belief-indexed
    prescriptions (at the beliefs the deviation induces) and the receivers
    play the lexicographically first pure equilibrium of the continuation
    game, falling back to the strategy's own prescription when none exists.
    """

    def __init__(self, spec: GameSpec, strategy, cls):
        self.spec, self.strategy, self.cls = spec, strategy, cls
        self.approximate = False

    def pre(self, t, w, gamma=None):
        spec = self.spec
        P = spec.n_receivers + 1
        if w.sum() <= 0:
            return np.zeros(P)
        if gamma is None:
            gamma = np.asarray(self.strategy.sender_prescription(t, w / w.sum()), dtype=float)
        return sum(self.post(t, w * gamma[:, s]) for s in range(spec.n_signals))

    def post(self, t, w):
        spec = self.spec
        N, A = spec.n_receivers, spec.n_joint
        if w.sum() <= 0:
            return np.zeros(N + 1)
        vals = np.zeros((A, N + 1))
        for a in range(A):
            vals[a, 0] = w @ spec.sender_reward[:, a]
            vals[a, 1:] = w @ spec.receiver_rewards[:, :, a].T
            if t < spec.horizon:
                for c in range(max(self.cls[a]) + 1):
                    mask = np.array([k == c for k in self.cls[a]])
                    vals[a] += spec.discount * self.pre(t + 1, (w * mask) @ spec.transition[:, a, :])
        joint = self._equilibrium(t, w, vals[:, 1:])
        return joint @ vals

    def _equilibrium(self, t, w, U):
        spec = self.spec
        ac = spec.action_counts
        T = U.T.reshape((spec.n_receivers, *ac))
        for a in range(spec.n_joint):
            prof = np.unravel_index(a, ac)
            if all(T[i][prof] >= T[i][prof[:i] + (slice(None),) + prof[i + 1:]].max() for i in range(len(ac))):
                out = np.zeros(spec.n_joint)
                out[a] = 1.0
                return out
        self.approximate = True
        return _joint(self.strategy.receiver_factors(t, w / w.sum()))


def check_cpse(spec: GameSpec, strategy, cfg: OracleConfig | None = None,
               slack=None) -> tuple[DeviationReport, DeviationReport]:
    """Commitment-equilibrium check: (receiver report, sender report).

    With several receivers the first element covers the receiver with the
    largest gain.
    """
    cfg = cfg or OracleConfig()
    tree = _Tree(spec, strategy, None, cfg.max_nodes)
    W_pre, W_post = _profile_values(tree)
    receivers = _receiver_reports(tree, W_post, cfg, slack)
    receiver = max(receivers, key=lambda r: r.gain - r.tolerance - r.slack)

    cls = tree.cls
    restricted = cfg.deviation_class == "one-shot" or spec.n_receivers > 1
    note = ""
    pure = [np.eye(spec.n_signals)[list(c)] for c in itertools.product(range(spec.n_signals), repeat=spec.n_states)]
    best = None
    if not restricted:
        try:
            oracle = _Commitments(spec, cls, cfg.max_nodes)
            for node in tree.pre_nodes():
                eq = float(node.b @ W_pre[id(node)][0])
                dev = float(oracle.pre(node.t, node.b)[:, 1].max())
                if best is None or dev - eq > best[0] + 1e-15:
                    best = (dev - eq, node, eq, dev, None)
        except _TooMany:
            restricted = True
            note = "outcome enumeration over the cap; fell back to one-shot deviations"
            best = None
    if restricted:
        oracle1 = _OneShot(spec, strategy, cls)
        for node in tree.pre_nodes():
            eq = float(node.b @ W_pre[id(node)][0])
            for k, gamma in enumerate(pure):
                dev = float(oracle1.pre(node.t, node.b, gamma)[0])
                if best is None or dev - eq > best[0] + 1e-15:
                    best = (dev - eq, node, eq, dev, k)
        note = note or "one-shot deviations with lexicographic pure receiver replies"
        if oracle1.approximate:
            note += "; some continuation games had no pure equilibrium"
    gain, node, eq, dev, k = best
    deviation = {} if k is None else {node.label or "root": [int(v) for v in pure[k].argmax(axis=1)]}
    sender = DeviationReport(
        player=0, deviation=deviation, equilibrium_payoff=eq, deviation_payoff=dev, gain=max(gain, 0.0),
        tolerance=cfg.tolerance, slack=_slack_of(slack, 0), info_set=node.label,
        restricted=restricted, belief_error=tree.belief_error, note=note if restricted else "")
    return receiver, sender


# -- one-shot persuasion and full-information oracles ----------------------------------------


@dataclass
class ConcavifyResult:
    value: float
    posteriors: tuple[np.ndarray, ...]
    weights: tuple[float, ...]


def concavify(prior, value_fn, M: int) -> ConcavifyResult:
    """Concave envelope at ``prior`` of ``value_fn`` over a two-state posterior grid.

    Searches all Bayes-plausible splits of the prior into two posteriors
    from the grid ``{k/M}`` (plus the prior itself); the degenerate split is
    preferred on ties.
    """
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (2,):
        raise ValueError("concavify needs a two-state prior")
    p = prior[1]
    qs = sorted(set(np.arange(M + 1) / M) | {float(p)})
    vals = {q: float(value_fn(np.array([1.0 - q, q]))) for q in qs}
    best = ConcavifyResult(vals[float(p)], (prior.copy(),), (1.0,))
    lows = [q for q in qs if q < p]
    highs = [q for q in qs if q > p]
    for lo in lows:
        for hi in highs:
            lam = (hi - p) / (hi - lo)
            v = lam * vals[lo] + (1 - lam) * vals[hi]
            if v > best.value + 1e-12:
                best = ConcavifyResult(v, (np.array([1 - lo, lo]), np.array([1 - hi, hi])), (lam, 1 - lam))
    return best


def one_shot_sender_value(spec: GameSpec, b) -> float:
    """Sender's expected stage reward when one receiver best responds to belief ``b``."""
    b = np.asarray(b, dtype=float)
    q = b @ spec.receiver_rewards[0]
    a = int(np.flatnonzero(q >= q.max() - MATCH_TOL)[0])
    return float(b @ spec.sender_reward[:, a])


def full_info_dp(spec: GameSpec) -> np.ndarray:
    """Per-player optimum when that player picks the joint action knowing the state.

    Returns ``sum_x mu_1(x) V_1(x)`` for each player, sender first.
    """
    R = np.concatenate([spec.sender_reward[None], spec.receiver_rewards], axis=0)
    out = np.zeros(len(R))
    for p, Rp in enumerate(R):
        V = np.zeros(spec.n_states)
        for _ in range(spec.horizon):
            V = (Rp + spec.discount * spec.transition @ V).max(axis=1)
        out[p] = spec.initial @ V
    return out
