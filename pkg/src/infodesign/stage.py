"""Per-period equilibrium subproblems.

Every period is solved in two steps at a fixed belief:

1. the receivers' stage, at the post-signal belief: a single receiver best
   responds; several receivers play a stage Bayesian-Nash equilibrium of the
   game whose payoffs are expected reward plus discounted continuation;
2. the sender's stage, at the pre-signal belief, given the map from
   posteriors to receiver prescriptions:

   * PBE: a fixed point -- each state's signal distribution is a best reply
     when the posteriors are computed with the candidate prescription itself;
   * cPSE: a commitment -- the prescription maximizing the ex-ante value,
     with posteriors computed from the deviation.

Continuation values come from the next period's tables through
:class:`Continuation`, interpolated on the belief grid.
"""
from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .game import GameSpec, babbling, joint_distribution, uniform
from .grid import BeliefGrid, compositions


class Mode(str, enum.Enum):
    PBE = "pbe"
    CPSE = "cpse"


class NoFixedPointFound(RuntimeError):
    """The stage search schedule ended without an equilibrium."""


@dataclass(frozen=True)
class SolverConfig:
    tol_fp: float = 1e-6
    tol_nash: float = 1e-6
    tie_tol: float = 1e-9
    # PBE damped best-response fallback
    damping: float = 0.5
    n_starts: int = 8
    max_iter: int = 500
    step_tol: float = 1e-8
    seed: int = 0
    # cPSE commitment search
    cpse_grid: int = 20
    cpse_sweeps: int = 3
    cpse_max_candidates: int = 50_000
    golden_tol: float = 1e-10
    # multi-receiver fictitious play fallback
    fp_iter: int = 5000

    def __post_init__(self):
        for name in ("tol_fp", "tol_nash", "tie_tol", "step_tol", "golden_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cpse_grid < 1:
            raise ValueError("cpse_grid must be >= 1")


@dataclass(frozen=True)
class Continuation:
    """Next-period value tables, read through grid interpolation.

    ``receiver`` has shape (G, N).  ``sender`` has shape (G, X) in PBE mode
    (value given next state) and (G,) in cPSE mode.  Missing tables mean the
    next period is past the horizon and every continuation is zero.
    """

    grid: BeliefGrid | None = None
    receiver: np.ndarray | None = None
    sender: np.ndarray | None = None

    @property
    def terminal(self) -> bool:
        return self.receiver is None

    def receiver_at(self, B: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.receiver, B)

    def sender_at(self, B: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.sender, B)


@dataclass(frozen=True)
class StageContext:
    spec: GameSpec
    t: int
    mode: Mode
    cont: Continuation
    config: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class StageSolution:
    sender: np.ndarray | None = None
    receivers: tuple[np.ndarray, ...] | None = None
    joint: np.ndarray | None = None
    values: np.ndarray | None = None  # sender value(s) or per-receiver values
    receiver_values: np.ndarray | None = None
    residual: float = 0.0
    converged: bool = True
    iterations: int = 0
    method: str = ""
    note: str = ""


# -- shared batch machinery -----------------------------------------------------


@functools.lru_cache(maxsize=64)
def _class_onehot(spec: GameSpec) -> np.ndarray:
    class_of, n_classes = spec.reward_classes()
    A, X = class_of.shape
    onehot = np.zeros((A, X, int(n_classes.max())))
    onehot[np.arange(A)[:, None], np.arange(X)[None, :], class_of] = 1.0
    return onehot


def branches(spec: GameSpec, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reward-class masses and next-period beliefs for every joint action.

    Returns ``mass`` (m, A, C) and ``nxt`` (m, A, C, X).  Classes with zero
    mass (including padding) get the uniform belief.
    """
    onehot = _class_onehot(spec)
    mass = np.einsum("mx,axc->mac", B, onehot)
    nxt = np.einsum("mx,axc,xay->macy", B, onehot, spec.transition)
    tot = nxt.sum(axis=-1, keepdims=True)
    ok = mass[..., None] > 0
    nxt = np.where(ok, nxt / np.where(ok, tot, 1.0), 1.0 / spec.n_states)
    return mass, nxt


def receiver_q_values(ctx: StageContext, B: np.ndarray) -> np.ndarray:
    """Expected stage reward plus discounted continuation, (m, N, A).

    ``U[m, i, a] = sum_x B[m, x] (R_i(x, a) + delta V_i(G(B[m], a, R(x, a))))``.
    """
    spec = ctx.spec
    B = np.atleast_2d(B)
    U = np.einsum("mx,nxa->mna", B, spec.receiver_rewards)
    if not ctx.cont.terminal:
        mass, nxt = branches(spec, B)
        m, A, C, X = nxt.shape
        V = ctx.cont.receiver_at(nxt.reshape(-1, X)).reshape(m, A, C, spec.n_receivers)
        U = U + spec.discount * np.einsum("mac,macn->mna", mass, V)
    return U


def signal_objective(ctx: StageContext, nus: np.ndarray, joint: np.ndarray) -> np.ndarray:
    """Sender's value of each posterior, per true state, (m, X).

    ``obj[m, x] = sum_a joint[m, a] (R_s(x, a) + delta * cont(x, a))`` where
    the continuation follows the posterior ``nus[m]`` through the public
    reward that state ``x`` generates under ``a``.
    """
    spec = ctx.spec
    obj = joint @ spec.sender_reward.T
    if ctx.cont.terminal:
        return obj
    class_of, _ = spec.reward_classes()
    _, nxt = branches(spec, nus)
    m, A, C, X = nxt.shape
    a_idx = np.arange(A)[:, None]
    if ctx.mode is Mode.PBE:
        V = ctx.cont.sender_at(nxt.reshape(-1, X)).reshape(m, A, C, X)
        Vsel = V[:, a_idx, class_of, :]  # (m, A, X, X')
        cont = np.einsum("maxy,xay->max", Vsel, spec.transition)
    else:
        V = ctx.cont.sender_at(nxt.reshape(-1, X)).reshape(m, A, C)
        cont = V[:, a_idx, class_of]  # (m, A, X)
    return obj + spec.discount * np.einsum("ma,max->mx", joint, cont)


def posteriors(mu: np.ndarray, Gam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signal probabilities (n, S) and posteriors (n, S, X) for prescriptions (n, X, S).

    Zero-probability signals get the uniform belief; a signal column that is
    constant on the support of ``mu`` returns ``mu`` exactly.
    """
    num = mu[None, :, None] * Gam
    P = num.sum(axis=1)
    nus = np.transpose(num, (0, 2, 1)) / np.where(P > 0, P, 1.0)[..., None]
    nus = np.where(P[..., None] > 0, nus, 1.0 / mu.size)
    sup = mu > 0
    cols = Gam[:, sup, :]
    flat = (cols.max(axis=1) == cols.min(axis=1)) & (P > 0)
    nus = np.where(flat[..., None], mu, nus)
    return P, nus


def _first_max(values: np.ndarray, tol: float) -> np.ndarray:
    """Lowest index within ``tol`` of the row maximum."""
    values = np.atleast_2d(values)
    return np.argmax(values >= values.max(axis=1, keepdims=True) - tol, axis=1)


# -- receivers --------------------------------------------------------------------


def receiver_stage_best_response(ctx: StageContext, nu: np.ndarray) -> StageSolution:
    """Single receiver: deterministic best response, lowest index on ties."""
    spec = ctx.spec
    if spec.n_receivers != 1:
        raise ValueError("receiver_stage_best_response needs exactly one receiver")
    U = receiver_q_values(ctx, nu[None])[0, 0]
    a = int(_first_max(U, ctx.config.tie_tol)[0])
    f = np.zeros(spec.n_joint)
    f[a] = 1.0
    return StageSolution(receivers=(f,), joint=f.copy(), receiver_values=np.array([U[a]]),
                         residual=float(U.max() - U[a]), method="argmax")


def nash_gains(U: np.ndarray, action_counts: Sequence[int], factors: Sequence[np.ndarray]) -> np.ndarray:
    """Best unilateral deviation gain of each receiver against ``factors``.

    ``U`` has shape (N, A) over flattened joint actions.
    """
    N = len(action_counts)
    T = U.reshape((N, *action_counts))
    gains = np.empty(N)
    for i in range(N):
        E = _own_payoffs(T[i], factors, i)
        gains[i] = E.max() - factors[i] @ E
    return np.maximum(gains, 0.0)


def _own_payoffs(P: np.ndarray, factors: Sequence[np.ndarray], i: int) -> np.ndarray:
    for j in reversed(range(len(factors))):
        if j != i:
            P = np.tensordot(P, factors[j], axes=([j], [0]))
    return P


def _pure_factors(profile: Sequence[int], action_counts: Sequence[int]) -> list[np.ndarray]:
    out = []
    for k, n in zip(profile, action_counts):
        f = np.zeros(n)
        f[k] = 1.0
        out.append(f)
    return out


def _support_enumeration(U: np.ndarray, action_counts, tol: float):
    A1, A2 = action_counts
    P1, P2 = U.reshape((2, A1, A2))
    for k in range(2, min(A1, A2) + 1):
        for I in itertools.combinations(range(A1), k):
            for J in itertools.combinations(range(A2), k):
                y = _indifference(P1[np.ix_(I, J)])
                x = _indifference(P2[np.ix_(I, J)].T)
                if x is None or y is None:
                    continue
                fx = np.zeros(A1)
                fy = np.zeros(A2)
                fx[list(I)] = x
                fy[list(J)] = y
                factors = [fx, fy]
                if nash_gains(U, action_counts, factors).max() <= tol:
                    return factors
    return None


def _indifference(P: np.ndarray) -> np.ndarray | None:
    """Mixing over columns of ``P`` that makes every row earn the same payoff."""
    k = P.shape[0]
    lhs = np.zeros((k + 1, k + 1))
    lhs[:k, :k] = P
    lhs[:k, k] = -1.0
    lhs[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    y = sol[:k]
    if np.any(y < -1e-12):
        return None
    y = np.clip(y, 0.0, None)
    return y / y.sum()


def _fictitious_play(U: np.ndarray, action_counts, n_iter: int, tie_tol: float):
    N = len(action_counts)
    T = U.reshape((N, *action_counts))
    factors = [np.full(n, 1.0 / n) for n in action_counts]
    for k in range(n_iter):
        step = 1.0 / (k + 2)
        br = []
        for i in range(N):
            E = _own_payoffs(T[i], factors, i)
            f = np.zeros(action_counts[i])
            f[int(_first_max(E, tie_tol)[0])] = 1.0
            br.append(f)
        factors = [(1 - step) * f + step * b for f, b in zip(factors, br)]
    return factors


def solve_stage_game(U: np.ndarray, action_counts: Sequence[int], config: SolverConfig):
    """Equilibrium of the receivers' stage game with payoffs ``U`` (N, A).

    Schedule: lexicographically first pure profile; support enumeration for
    two receivers with at most three actions each; damped fictitious play
    (non-exhaustive).  Returns ``(factors, residual, method)``.
    """
    A = int(np.prod(action_counts))
    for joint in range(A):
        prof = np.unravel_index(joint, action_counts)
        factors = _pure_factors(prof, action_counts)
        if nash_gains(U, action_counts, factors).max() <= config.tie_tol:
            return factors, float(nash_gains(U, action_counts, factors).max()), "pure-scan"
    if len(action_counts) == 2 and max(action_counts) <= 3:
        factors = _support_enumeration(U, action_counts, config.tol_nash)
        if factors is not None:
            return factors, float(nash_gains(U, action_counts, factors).max()), "support-enumeration"
    factors = _fictitious_play(U, action_counts, config.fp_iter, config.tie_tol)
    res = float(nash_gains(U, action_counts, factors).max())
    if res <= config.tol_nash:
        return factors, res, "fictitious-play (non-exhaustive)"
    raise NoFixedPointFound(f"no stage Nash equilibrium found (best residual {res:.3g})")


def receiver_stage_nash(ctx: StageContext, nu: np.ndarray) -> StageSolution:
    """Several receivers: stage Bayesian-Nash equilibrium at belief ``nu``."""
    spec = ctx.spec
    U = receiver_q_values(ctx, nu[None])[0]
    factors, res, method = solve_stage_game(U, spec.action_counts, ctx.config)
    joint = joint_distribution(factors)
    return StageSolution(receivers=tuple(factors), joint=joint, receiver_values=U @ joint,
                         residual=res, method=method, converged=True)


class ReceiverResponder:
    """The receivers' prescription map for one period, at arbitrary beliefs.

    Identical beliefs always receive identical answers: batches are
    deduplicated, and multi-receiver solutions are memoized.
    """

    def __init__(self, ctx: StageContext):
        self.ctx = ctx
        self._cache: dict[bytes, StageSolution] = {}

    def solve(self, nu: np.ndarray) -> StageSolution:
        key = np.ascontiguousarray(nu, dtype=float).tobytes()
        sol = self._cache.get(key)
        if sol is None:
            if self.ctx.spec.n_receivers == 1:
                sol = receiver_stage_best_response(self.ctx, nu)
            else:
                sol = receiver_stage_nash(self.ctx, nu)
            self._cache[key] = sol
        return sol

    def respond(self, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint action distributions (m, A) and receiver values (m, N)."""
        B = np.ascontiguousarray(np.atleast_2d(B), dtype=float)
        uniq, inverse = np.unique(B, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        spec = self.ctx.spec
        if spec.n_receivers == 1:
            U = receiver_q_values(self.ctx, uniq)[:, 0, :]
            best = _first_max(U, self.ctx.config.tie_tol)
            joint = np.zeros_like(U)
            joint[np.arange(len(uniq)), best] = 1.0
            vals = U[np.arange(len(uniq)), best][:, None]
        else:
            sols = [self.solve(b) for b in uniq]
            joint = np.array([s.joint for s in sols])
            vals = np.array([s.receiver_values for s in sols])
        return joint[inverse], vals[inverse]


# -- sender: PBE fixed point ------------------------------------------------------


@dataclass
class SignalEvaluation:
    """Everything the sender stage needs about one candidate prescription."""

    gamma: np.ndarray
    P: np.ndarray  # (S,) signal probabilities under mu
    nus: np.ndarray  # (S, X) posteriors
    joint: np.ndarray  # (S, A) receiver responses
    receiver_values: np.ndarray  # (S, N)
    objective: np.ndarray  # (X, S) sender value of sending s in state x

    def state_values(self) -> np.ndarray:
        return (self.gamma * self.objective).sum(axis=1)

    def residual(self) -> float:
        return float(np.max(self.objective.max(axis=1) - self.state_values()))

    def receiver_value(self) -> np.ndarray:
        return self.P @ self.receiver_values


def evaluate_signals(ctx: StageContext, mu: np.ndarray, gamma: np.ndarray,
                     responder: ReceiverResponder) -> SignalEvaluation:
    """Evaluate ``gamma`` as the prescription that generates the posteriors."""
    P, nus = posteriors(mu, gamma[None])
    P, nus = P[0], nus[0]
    joint, rvals = responder.respond(nus)
    obj = signal_objective(ctx, nus, joint).T  # (X, S)
    return SignalEvaluation(gamma, P, nus, joint, rvals, obj)


def pbe_residual(ctx: StageContext, mu: np.ndarray, gamma: np.ndarray,
                 responder: ReceiverResponder) -> float:
    """Largest gain any state gets from switching to a pure signal."""
    return evaluate_signals(ctx, mu, gamma, responder).residual()


def pure_prescriptions(n_states: int, n_signals: int):
    """All state-to-signal maps in lexicographic order (state 0 most significant)."""
    return itertools.product(range(n_signals), repeat=n_states)


def _pure(signals, n_signals):
    g = np.zeros((len(signals), n_signals))
    g[np.arange(len(signals)), signals] = 1.0
    return g


def _pbe_solution(ev: SignalEvaluation, mu: np.ndarray, method: str, iterations: int, tol: float):
    return StageSolution(sender=ev.gamma, values=ev.state_values(),
                         receiver_values=ev.receiver_value(), residual=max(ev.residual(), 0.0),
                         converged=ev.residual() <= tol, iterations=iterations, method=method)


def sender_stage_pbe(ctx: StageContext, mu: np.ndarray, responder: ReceiverResponder) -> StageSolution:
    """Sender fixed point at pre-signal belief ``mu``.

    Candidates are babbling, then every pure prescription; among those that
    pass the per-state deviation test, the one with the highest ex-ante
    sender value is kept (earliest candidate on ties).  If none passes,
    damped best-response iteration runs from random mixed starts.
    """
    spec, cfg = ctx.spec, ctx.config
    X, S = spec.n_states, spec.n_signals
    best: tuple[float, SignalEvaluation, str] | None = None
    candidates = [("babbling", babbling(X, S))]
    candidates += [("pure", _pure(c, S)) for c in pure_prescriptions(X, S)]
    for n, (kind, gamma) in enumerate(candidates):
        ev = evaluate_signals(ctx, mu, gamma, responder)
        if ev.residual() > cfg.tol_fp:
            continue
        value = float(mu @ ev.state_values())
        if best is None or value > best[0] + cfg.tie_tol:
            best = (value, ev, kind)
    if best is not None:
        return _pbe_solution(best[1], mu, best[2], len(candidates), cfg.tol_fp)

    sol = damped_best_response(ctx, mu, responder)
    if sol is not None:
        sol.iterations += len(candidates)
        return sol
    raise NoFixedPointFound(f"t={ctx.t}: no sender fixed point at belief {np.round(mu, 6).tolist()}")


def damped_best_response(ctx: StageContext, mu: np.ndarray,
                         responder: ReceiverResponder) -> StageSolution | None:
    """Damped best-response iteration on mixed prescriptions from seeded random starts.

    Returns the first limit that passes the fixed-point test, or None.
    """
    cfg = ctx.config
    X, S = ctx.spec.n_states, ctx.spec.n_signals
    rng = np.random.default_rng(cfg.seed)
    iterations = 0
    for _ in range(cfg.n_starts):
        gamma = rng.dirichlet(np.ones(S), size=X)
        for _ in range(cfg.max_iter):
            ev = evaluate_signals(ctx, mu, gamma, responder)
            br = _pure(_first_max(ev.objective, cfg.tie_tol), S)
            new = (1 - cfg.damping) * gamma + cfg.damping * br
            iterations += 1
            step = np.abs(new - gamma).max()
            gamma = new
            if step <= cfg.step_tol:
                break
        ev = evaluate_signals(ctx, mu, gamma, responder)
        if ev.residual() <= cfg.tol_fp:
            return _pbe_solution(ev, mu, "damped-best-response", iterations, cfg.tol_fp)
    return None


# -- sender: commitment -------------------------------------------------------------


def commitment_values(ctx: StageContext, mu: np.ndarray, Gam: np.ndarray,
                      responder: ReceiverResponder) -> tuple[np.ndarray, np.ndarray]:
    """Ex-ante sender value (n,) and receiver values (n, N) of commitments (n, X, S)."""
    n, X, S = Gam.shape
    P, nus = posteriors(mu, Gam)
    flat = nus.reshape(-1, X)
    joint, rvals = responder.respond(flat)
    obj = signal_objective(ctx, flat, joint).reshape(n, S, X)
    weight = mu[None, :, None] * Gam  # (n, X, S)
    sender = np.einsum("nxs,nsx->n", weight, obj)
    receivers = np.einsum("ns,nsk->nk", P, rvals.reshape(n, S, -1))
    return sender, receivers


def _row_grid(n_signals: int, K: int) -> np.ndarray:
    return np.array(list(compositions(K, n_signals)), dtype=float).reshape(-1, n_signals) / K


def commitment_grid(n_states: int, n_signals: int, K: int, cap: int) -> tuple[np.ndarray, int]:
    """Candidate commitments: babbling, pure maps, then the product grid of rows.

    ``K`` is lowered until the product grid has at most ``cap`` members.
    """
    while K > 1 and math.comb(K + n_signals - 1, n_signals - 1) ** n_states > cap:
        K -= 1
    rows = _row_grid(n_signals, K)
    head = [babbling(n_states, n_signals)]
    head += [_pure(c, n_signals) for c in pure_prescriptions(n_states, n_signals)]
    idx = np.array(list(itertools.product(range(len(rows)), repeat=n_states)), dtype=np.int64)
    body = rows[idx]  # (n, X, S)
    return np.concatenate([np.array(head), body], axis=0), K


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float,
                start: float, f_start: float) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    best_u, best_f = start, f_start
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for u, fu in ((c, fc), (d, fd)):
        if fu > best_f:
            best_u, best_f = u, fu
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
            u, fu = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
            u, fu = d, fd
        if fu > best_f:
            best_u, best_f = u, fu
    return best_u, best_f


def sender_stage_cpse(ctx: StageContext, mu: np.ndarray, responder: ReceiverResponder) -> StageSolution:
    """Sender commitment at pre-signal belief ``mu``.

    Grid search over prescriptions (rows on a 1/K lattice), then coordinate
    golden-section polish that trades weight between pairs of signals within
    a row.  Equal values keep the earliest candidate: babbling, pure maps in
    lexicographic order, then the grid.
    """
    spec, cfg = ctx.spec, ctx.config
    X, S = spec.n_states, spec.n_signals
    Gam, K = commitment_grid(X, S, cfg.cpse_grid, cfg.cpse_max_candidates)
    values, _ = commitment_values(ctx, mu, Gam, responder)
    i = int(_first_max(values, cfg.tie_tol)[0])
    gamma = Gam[i].copy()
    best = float(values[i])
    evaluations = len(Gam)
    improved = False

    def value_of(g: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        return float(commitment_values(ctx, mu, g[None], responder)[0][0])

    if S > 1:
        h = 1.0 / K
        for _ in range(cfg.cpse_sweeps):
            swept = False
            for x in range(X):
                for s, s2 in itertools.combinations(range(S), 2):
                    m = gamma[x, s] + gamma[x, s2]
                    if m <= 0:
                        continue

                    def along(u, x=x, s=s, s2=s2, m=m):
                        g = gamma.copy()
                        g[x, s], g[x, s2] = u, m - u
                        return value_of(g)

                    u0 = gamma[x, s]
                    u, fu = _golden_max(along, max(0.0, u0 - h), min(m, u0 + h),
                                        cfg.golden_tol, u0, best)
                    if fu > best + 1e-12:
                        gamma[x, s], gamma[x, s2] = u, m - u
                        best = fu
                        improved = swept = True
            if not swept:
                break

    sender_value, receiver_values = commitment_values(ctx, mu, gamma[None], responder)
    return StageSolution(sender=gamma, values=np.array([sender_value[0]]),
                         receiver_values=receiver_values[0], residual=0.0, converged=True,
                         iterations=evaluations, method=f"grid(K={K})+golden",
                         note="" if improved else "polish-no-improvement")


def sender_stage(ctx: StageContext, mu: np.ndarray, responder: ReceiverResponder) -> StageSolution:
    if ctx.mode is Mode.PBE:
        return sender_stage_pbe(ctx, mu, responder)
    return sender_stage_cpse(ctx, mu, responder)


def sender_stage_value(ctx: StageContext, mu: np.ndarray, gamma: np.ndarray,
                       responder: ReceiverResponder) -> tuple[np.ndarray, np.ndarray, float]:
    """One-step lookahead value of a given prescription at ``mu``.

    Returns ``(sender, receivers, regret)``: sender values per state (PBE)
    or the ex-ante value as a length-1 array (cPSE), receiver values (N,),
    and the stage regret -- the PBE fixed-point residual, or in cPSE mode
    the best pure-commitment improvement (clipped at zero).
    """
    ev = evaluate_signals(ctx, mu, gamma, responder)
    if ctx.mode is Mode.PBE:
        return ev.state_values(), ev.receiver_value(), max(ev.residual(), 0.0)
    value = float(mu @ ev.state_values())
    X, S = gamma.shape
    pure = np.array([_pure(c, S) for c in itertools.product(range(S), repeat=X)])
    pv, _ = commitment_values(ctx, mu, pure, responder)
    return np.array([value]), ev.receiver_value(), max(float(pv.max()) - value, 0.0)


def is_uniform(b: np.ndarray) -> bool:
    return bool(np.allclose(b, uniform(b.size), atol=0, rtol=0))
