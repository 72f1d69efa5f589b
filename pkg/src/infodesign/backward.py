"""Backward recursion over the belief grid.

For t = T, ..., 1 the receivers' stage is solved at every post-signal grid
belief, then the sender's stage at every pre-signal grid belief, with
continuations read from the t+1 tables by interpolation.  The resulting
:class:`EquilibriumPolicy` also answers queries at beliefs off the grid:
by default it re-solves the stage exactly at the queried belief (memoized),
so the prescription is a genuine stage solution there and not the one of a
neighbouring grid point.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .game import GameSpec, OffSupport, joint_distribution, update_on_action, update_on_signal
from .grid import BeliefGrid, Interp
from .stage import (
    Continuation,
    Mode,
    NoFixedPointFound,
    ReceiverResponder,
    SolverConfig,
    StageContext,
    StageSolution,
    nash_gains,
    posteriors,
    receiver_q_values,
    sender_stage,
    sender_stage_value,
    signal_objective,
)

LOOKUPS = ("exact", "nearest")


class StageFailure(RuntimeError):
    """A stage solve failed at grid point ``index`` of period ``t``."""

    def __init__(self, t: int, index: int, belief: np.ndarray, reason: str):
        super().__init__(f"t={t} grid point {index} {np.round(belief, 6).tolist()}: {reason}")
        self.t, self.index, self.belief, self.reason = t, index, belief, reason


class UnsolvedBelief(RuntimeError):
    """A prescription was requested at a belief with no stage solution."""


@dataclass
class PointDiagnostics:
    status: str = "ok"  # "ok" or "failed"
    residual: float = 0.0
    iterations: int = 0
    method: str = ""
    note: str = ""


@dataclass
class ValueTables:
    """Per-period value tables on the grid; period T+1 is identically zero.

    * ``receiver[t]``: V^r_t at pre-signal beliefs, (G, N)
    * ``receiver_plus[t]``: V^{r+}_t at post-signal beliefs, (G, N)
    * ``sender[t]``: V^{s+}_t, (G, X) in PBE mode (indexed by the current
      state) and (G,) in cPSE mode
    """

    spec: GameSpec
    mode: Mode
    grid: BeliefGrid
    receiver: dict[int, np.ndarray] = field(default_factory=dict)
    receiver_plus: dict[int, np.ndarray] = field(default_factory=dict)
    sender: dict[int, np.ndarray] = field(default_factory=dict)

    def continuation(self, t: int) -> Continuation:
        """Continuation seen by the stage problems of period ``t``."""
        if t >= self.spec.horizon:
            return Continuation()
        return Continuation(self.grid, self.receiver[t + 1], self.sender[t + 1])


def evaluate_value(tables: ValueTables, which: str, t: int, b, index: int | None = None) -> float | np.ndarray:
    """Interpolated table value at belief ``b``.

    ``which`` is ``"sender"``, ``"receiver"`` or ``"receiver_plus"``.
    ``index`` selects a receiver, or the current state for the PBE sender
    table; without it the whole row is returned.
    """
    table = {"sender": tables.sender, "receiver": tables.receiver,
             "receiver_plus": tables.receiver_plus}[which][t]
    row = tables.grid.interpolate(table, np.asarray(b, dtype=float)[None])[0]
    if index is None:
        return row if np.ndim(row) else float(row)
    return float(row[index])


class EquilibriumPolicy:
    """Tabulated prescriptions plus on-demand stage solves between grid points."""

    def __init__(self, spec: GameSpec, mode: Mode, grid: BeliefGrid, config: SolverConfig,
                 tables: ValueTables):
        self.spec, self.mode, self.grid, self.config, self.tables = spec, mode, grid, config, tables
        T, G = spec.horizon, len(grid)
        self.sender = {t: np.full((G, spec.n_states, spec.n_signals), np.nan) for t in range(1, T + 1)}
        self.receivers = {t: [np.full((G, k), np.nan) for k in spec.action_counts] for t in range(1, T + 1)}
        self.sender_diag = {t: [PointDiagnostics() for _ in range(G)] for t in range(1, T + 1)}
        self.receiver_diag = {t: [PointDiagnostics() for _ in range(G)] for t in range(1, T + 1)}
        self._contexts: dict[int, StageContext] = {}
        self._responders: dict[int, ReceiverResponder] = {}
        self._sender_cache: dict[tuple[int, bytes], StageSolution | None] = {}

    # -- stage plumbing ----------------------------------------------------------

    def context(self, t: int) -> StageContext:
        if t not in self._contexts:
            self._contexts[t] = StageContext(self.spec, t, self.mode, self.tables.continuation(t), self.config)
        return self._contexts[t]

    def responder(self, t: int) -> ReceiverResponder:
        if t not in self._responders:
            self._responders[t] = ReceiverResponder(self.context(t))
        return self._responders[t]

    @property
    def partial(self) -> bool:
        return any(d.status != "ok" for diags in (self.sender_diag, self.receiver_diag)
                   for t in diags for d in diags[t])

    def failures(self) -> list[tuple[str, int, int]]:
        out = []
        for role, diags in (("receiver", self.receiver_diag), ("sender", self.sender_diag)):
            for t in sorted(diags):
                out += [(role, t, g) for g, d in enumerate(diags[t]) if d.status != "ok"]
        return out

    # -- lookups -----------------------------------------------------------------

    def _grid_index(self, b: np.ndarray, lookup: str) -> int | None:
        if lookup == "nearest":
            return int(self.grid.nearest(b[None])[0])
        if lookup != "exact":
            raise ValueError(f"unknown lookup {lookup!r}; expected one of {LOOKUPS}")
        return self.grid.find(b)

    def sender_prescription(self, t: int, mu, lookup: str = "exact") -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        g = self._grid_index(mu, lookup)
        if g is not None:
            if self.sender_diag[t][g].status != "ok":
                raise UnsolvedBelief(f"t={t}: sender stage failed at grid point {g}")
            return self.sender[t][g]
        key = (t, mu.tobytes())
        if key not in self._sender_cache:
            try:
                self._sender_cache[key] = sender_stage(self.context(t), mu, self.responder(t))
            except NoFixedPointFound:
                self._sender_cache[key] = None
        sol = self._sender_cache[key]
        if sol is None:
            raise UnsolvedBelief(f"t={t}: no sender stage solution at belief {mu.tolist()}")
        return sol.sender

    def receiver_factors(self, t: int, nu, lookup: str = "exact") -> tuple[np.ndarray, ...]:
        nu = np.asarray(nu, dtype=float)
        g = self._grid_index(nu, lookup)
        if g is not None:
            if self.receiver_diag[t][g].status != "ok":
                raise UnsolvedBelief(f"t={t}: receiver stage failed at grid point {g}")
            return tuple(f[g] for f in self.receivers[t])
        try:
            return self.responder(t).solve(nu).receivers
        except NoFixedPointFound as exc:
            raise UnsolvedBelief(f"t={t}: no receiver stage solution at belief {nu.tolist()}") from exc

    def receiver_joint(self, t: int, nu, lookup: str = "exact") -> np.ndarray:
        return joint_distribution(self.receiver_factors(t, nu, lookup))


# -- the recursion ------------------------------------------------------------------


def _solve_receivers(policy: EquilibriumPolicy, t: int) -> None:
    spec, grid = policy.spec, policy.grid
    tables = policy.tables
    responder = policy.responder(t)
    Vp = np.full((len(grid), spec.n_receivers), np.nan)
    if spec.n_receivers == 1:
        joint, vals = responder.respond(grid.points)
        policy.receivers[t][0][:] = joint
        Vp[:] = vals
        for d in policy.receiver_diag[t]:
            d.method = "argmax"
    else:
        for g, nu in enumerate(grid.points):
            diag = policy.receiver_diag[t][g]
            try:
                sol = responder.solve(nu)
            except NoFixedPointFound as exc:
                diag.status, diag.note = "failed", str(exc)
                continue
            for k, f in enumerate(sol.receivers):
                policy.receivers[t][k][g] = f
            Vp[g] = sol.receiver_values
            diag.residual, diag.method = sol.residual, sol.method
    tables.receiver_plus[t] = Vp


def _solve_sender(policy: EquilibriumPolicy, t: int) -> None:
    spec, grid = policy.spec, policy.grid
    ctx, responder = policy.context(t), policy.responder(t)
    shape = (len(grid), spec.n_states) if policy.mode is Mode.PBE else (len(grid),)
    Vs = np.full(shape, np.nan)
    Vr = np.full((len(grid), spec.n_receivers), np.nan)
    for g, mu in enumerate(grid.points):
        diag = policy.sender_diag[t][g]
        try:
            sol = sender_stage(ctx, mu, responder)
        except NoFixedPointFound as exc:
            failure = StageFailure(t, g, mu, str(exc))
            diag.status, diag.note = "failed", str(failure)
            continue
        policy.sender[t][g] = sol.sender
        Vs[g] = sol.values if policy.mode is Mode.PBE else sol.values[0]
        Vr[g] = sol.receiver_values
        diag.residual, diag.iterations, diag.method, diag.note = (
            sol.residual, sol.iterations, sol.method, sol.note)
    policy.tables.sender[t] = Vs
    policy.tables.receiver[t] = Vr


def solve(spec: GameSpec, mode: Mode | str, grid: BeliefGrid,
          config: SolverConfig | None = None) -> tuple[EquilibriumPolicy, ValueTables]:
    """Tabulate prescriptions and values for t = T, ..., 1.

    Stage failures are recorded per grid point (NaN values, status
    ``"failed"``) and the recursion carries on; check ``policy.partial``.
    """
    mode = Mode(mode)
    config = config or SolverConfig()
    if grid.n != spec.n_states:
        raise ValueError("grid dimension does not match the number of states")
    T, G = spec.horizon, len(grid)
    tables = ValueTables(spec, mode, grid)
    tables.receiver[T + 1] = np.zeros((G, spec.n_receivers))
    tables.receiver_plus[T + 1] = np.zeros((G, spec.n_receivers))
    tables.sender[T + 1] = np.zeros((G, spec.n_states) if mode is Mode.PBE else (G,))
    policy = EquilibriumPolicy(spec, mode, grid, config, tables)
    for t in range(T, 0, -1):
        _solve_receivers(policy, t)
        _solve_sender(policy, t)
    return policy, tables


def recursion_error(policy: EquilibriumPolicy) -> float:
    """Largest gap between a stored value and its recomputation from the stage solution."""
    err = 0.0
    spec = policy.spec
    for t in range(1, spec.horizon + 1):
        ctx, responder = policy.context(t), policy.responder(t)
        U = receiver_q_values(ctx, policy.grid.points)
        for g in range(len(policy.grid)):
            if policy.receiver_diag[t][g].status == "ok":
                joint = joint_distribution([f[g] for f in policy.receivers[t]])
                err = max(err, float(np.abs(U[g] @ joint - policy.tables.receiver_plus[t][g]).max()))
            if policy.sender_diag[t][g].status == "ok":
                sv, rv, _ = sender_stage_value(ctx, policy.grid.points[g], policy.sender[t][g], responder)
                stored = np.atleast_1d(policy.tables.sender[t][g])
                err = max(err, float(np.abs(sv - stored).max()),
                          float(np.abs(rv - policy.tables.receiver[t][g]).max()))
    return err


# -- interpolation slack ------------------------------------------------------------


@dataclass
class Slack:
    """Measured grid error of a policy, per player (0 = sender).

    ``defect[p][t-1]`` is the largest gap, over the beliefs the strategy can
    reach, between the interpolated table value and the one-step lookahead
    value of the prescription actually played there; ``regret[p][t-1]`` is
    the largest stage deviation gain.  ``value`` bounds the error of the
    tabulated payoff at the prior and ``deviation`` bounds the deviation gain
    attributable to the grid at any information set.
    """

    defect: np.ndarray
    defect_on_path: np.ndarray
    regret: np.ndarray
    value: np.ndarray
    deviation: np.ndarray
    nodes: int
    complete: bool = True


def _reward_reps(spec: GameSpec):
    class_of, n_classes = spec.reward_classes()
    return [[spec.receiver_rewards[:, int(np.flatnonzero(class_of[a] == c)[0]), a]
             for c in range(n_classes[a])] for a in range(spec.n_joint)]


def measure_slack(policy: EquilibriumPolicy, lookup: str = "exact", node_cap: int = 200_000) -> Slack:
    """Interpolation slack of the strategy induced by ``policy``.

    Walks every common-history belief reachable under the strategy's belief
    system (all signals, joint actions and reward classes; uniform reset off
    support), comparing tabulated values with one-step lookahead values of
    the prescriptions played.
    """
    spec = policy.spec
    T, N, X, S, A = spec.horizon, spec.n_receivers, spec.n_states, spec.n_signals, spec.n_joint
    P1 = N + 1
    defect = np.zeros((P1, T))
    defect_on = np.zeros((P1, T))
    regret = np.zeros((P1, T))
    reps = _reward_reps(spec)
    level = {spec.initial.tobytes(): (spec.initial.copy(), True)}
    nodes, complete = 0, True
    for t in range(1, T + 1):
        ctx = policy.context(t)
        nxt: dict[bytes, tuple[np.ndarray, bool]] = {}
        for mu, on in level.values():
            nodes += 1
            if nodes > node_cap:
                complete = False
                break
            try:
                gamma = policy.sender_prescription(t, mu, lookup)
                P, nus = posteriors(mu, gamma[None])
                P, nus = P[0], nus[0]
                joints = np.array([policy.receiver_joint(t, nu, lookup) for nu in nus])
                factors = [policy.receiver_factors(t, nu, lookup) for nu in nus]
            except UnsolvedBelief:
                complete = False
                continue
            U = receiver_q_values(ctx, nus)  # (S, N, A)
            rvals = np.einsum("sna,sa->sn", U, joints)
            for s in range(S):
                g = nash_gains(U[s], spec.action_counts, factors[s]) if N > 1 else \
                    np.array([U[s, 0].max() - rvals[s, 0]])
                regret[1:, t - 1] = np.maximum(regret[1:, t - 1], g)
            obj = signal_objective(ctx, nus, joints).T  # (X, S)
            state_vals = (gamma * obj).sum(axis=1)
            if policy.mode is Mode.PBE:
                d_s = float(np.abs(policy.grid.interpolate(policy.tables.sender[t], mu[None])[0]
                                   - state_vals).max())
                r_s = float(np.max(obj.max(axis=1) - state_vals))
            else:
                value = float(mu @ state_vals)
                d_s = abs(float(policy.grid.interpolate(policy.tables.sender[t], mu[None])[0]) - value)
                r_s = _pure_commitment_regret(policy, t, mu, value, lookup)
            d_r = np.abs(policy.grid.interpolate(policy.tables.receiver[t], mu[None])[0] - P @ rvals)
            d = np.concatenate([[d_s], d_r])
            defect[:, t - 1] = np.maximum(defect[:, t - 1], d)
            if on:
                defect_on[:, t - 1] = np.maximum(defect_on[:, t - 1], d)
            regret[0, t - 1] = max(regret[0, t - 1], max(r_s, 0.0))
            if t == T:
                continue
            for s in range(S):
                for a in range(A):
                    for r in reps[a]:
                        w = nus[s] * np.all(np.abs(spec.receiver_rewards[:, :, a] - r[:, None]) <= 1e-9, axis=0)
                        child = update_on_action(nus[s], a, r, spec, OffSupport.UNIFORM)
                        child_on = bool(on and P[s] > 0 and joints[s, a] > 0 and w.sum() > 0)
                        key = child.tobytes()
                        prev = nxt.get(key)
                        nxt[key] = (child, child_on or (prev is not None and prev[1]))
        level = nxt
    disc = spec.discount ** np.arange(T)
    value = defect_on @ disc
    dev = np.zeros(P1)
    for t in range(T):
        suffix = (regret[:, t:] + 2 * defect[:, t:]) @ disc[: T - t]
        dev = np.maximum(dev, suffix)
    if not complete:
        value = np.full(P1, np.inf)
        dev = np.full(P1, np.inf)
    return Slack(defect, defect_on, regret, value, dev, nodes, complete)


def _pure_commitment_regret(policy: EquilibriumPolicy, t: int, mu: np.ndarray, value: float,
                            lookup: str) -> float:
    ctx = policy.context(t)
    X, S = policy.spec.n_states, policy.spec.n_signals
    best = -np.inf
    for combo in itertools.product(range(S), repeat=X):
        gamma = np.zeros((X, S))
        gamma[np.arange(X), combo] = 1.0
        P, nus = posteriors(mu, gamma[None])
        joints = np.array([policy.receiver_joint(t, nu, lookup) for nu in nus[0]])
        obj = signal_objective(ctx, nus[0], joints).T
        best = max(best, float(mu @ (gamma * obj).sum(axis=1)))
    return best - value


# -- columnar export ------------------------------------------------------------------


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def values_csv(tables: ValueTables) -> str:
    """Value tables as CSV text, one row per (t, grid point), t = 1..T+1."""
    spec, grid = tables.spec, tables.grid
    X, N = spec.n_states, spec.n_receivers
    head = ["t", "grid_index"] + [f"b_{x}" for x in range(X)]
    head += [f"V_r_{i + 1}" for i in range(N)] + [f"Vplus_r_{i + 1}" for i in range(N)]
    if tables.mode is Mode.PBE:
        head += [f"Vplus_s_x{x}" for x in range(X)]
    else:
        head += ["Vplus_s"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for t in sorted(tables.sender):
        for g, b in enumerate(grid.points):
            row = [t, g] + [_fmt(v) for v in b]
            row += [_fmt(v) for v in tables.receiver[t][g]] + [_fmt(v) for v in tables.receiver_plus[t][g]]
            row += [_fmt(v) for v in np.atleast_1d(tables.sender[t][g])]
            w.writerow(row)
    return buf.getvalue()


def policy_csv(policy: EquilibriumPolicy) -> str:
    """Stored prescriptions and per-point diagnostics as CSV text."""
    spec, grid = policy.spec, policy.grid
    X, S = spec.n_states, spec.n_signals
    head = ["t", "grid_index"] + [f"b_{x}" for x in range(X)]
    head += ["sender_status", "sender_residual", "sender_method"]
    head += [f"sender_x{x}_s{s}" for x in range(X) for s in range(S)]
    head += ["receiver_status", "receiver_residual"]
    head += [f"receiver_{i + 1}_a{k}" for i, n in enumerate(spec.action_counts) for k in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for t in sorted(policy.sender):
        for g, b in enumerate(grid.points):
            sd, rd = policy.sender_diag[t][g], policy.receiver_diag[t][g]
            row = [t, g] + [_fmt(v) for v in b]
            row += [sd.status, _fmt(sd.residual), sd.method]
            row += [_fmt(v) for v in policy.sender[t][g].ravel()]
            row += [rd.status, _fmt(rd.residual)]
            for f in policy.receivers[t]:
                row += [_fmt(v) for v in f[g]]
            w.writerow(row)
    return buf.getvalue()


def write_tables(policy: EquilibriumPolicy, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vpath, ppath = directory / "values.csv", directory / "policy.csv"
    vpath.write_text(values_csv(policy.tables))
    ppath.write_text(policy_csv(policy))
    return vpath, ppath
