"""Game data model and the two Bayes belief maps.

A game has one sender who privately observes a controlled Markov state and
one or more receivers whose joint action drives both the rewards and the
state transition.  Each period has a signal stage followed by an action
stage.  The common belief is carried through the period by

* ``update_on_signal`` (belief before the signal -> belief after it), and
* ``update_on_action`` (belief after the signal -> next period's prior),

where the second map conditions on the publicly observed receiver rewards
and then predicts through the kernel.

Joint receiver actions are flattened row-major over ``action_counts``; see
:meth:`GameSpec.joint_index`.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = "1"

ROW_TOL = 1e-12
BELIEF_TOL = 1e-9
REWARD_MATCH_TOL = 1e-9


class SpecError(ValueError):
    """Raised when a game document cannot be turned into a GameSpec."""


class BeliefUpdateError(ValueError):
    pass


class ZeroProbabilitySignal(BeliefUpdateError):
    """The observed signal has probability zero under the prescription."""


class InconsistentReward(BeliefUpdateError):
    """No state in the belief support produces the observed rewards."""


class OffSupport(str, enum.Enum):
    """What to do when Bayes' rule has a zero denominator."""

    REJECT = "reject"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Finite-horizon information design game.

    Arrays are stored with joint receiver actions flattened:

    * ``transition[x, a, x']``  -- shape (X, A, X)
    * ``sender_reward[x, a]``   -- shape (X, A)
    * ``receiver_rewards[i, x, a]`` -- shape (N, X, A)

    where ``A = prod(action_counts)``.
    """

    n_states: int
    n_signals: int
    n_receivers: int
    action_counts: tuple[int, ...]
    transition: np.ndarray
    initial: np.ndarray
    sender_reward: np.ndarray
    receiver_rewards: np.ndarray
    horizon: int
    discount: float = 1.0
    full_support: bool = True
    name: str = ""
    _classes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "action_counts", tuple(int(k) for k in self.action_counts))
        for attr in ("transition", "initial", "sender_reward", "receiver_rewards"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "_classes", None)

    @property
    def n_joint(self) -> int:
        return int(np.prod(self.action_counts)) if self.action_counts else 0

    @property
    def n_players(self) -> int:
        """Sender plus receivers."""
        return 1 + self.n_receivers

    def joint_index(self, profile: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(p) for p in profile), self.action_counts))

    def profile(self, joint: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(int(joint), self.action_counts))

    def player_reward(self, player: int) -> np.ndarray:
        """Reward table (X, A) of ``player`` (0 = sender, i >= 1 = receiver i-1)."""
        if player == 0:
            return self.sender_reward
        return self.receiver_rewards[player - 1]

    def reward_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """Partition the states, per joint action, by the public reward vector.

        Returns ``(class_of, n_classes)`` where ``class_of[a, x]`` is the class
        id of state ``x`` under action ``a`` and ``n_classes[a]`` counts them.
        Two states share a class when every receiver reward agrees to within
        ``REWARD_MATCH_TOL``.
        """
        if self._classes is None:
            X, A = self.n_states, self.n_joint
            class_of = np.zeros((A, X), dtype=np.int64)
            n_classes = np.zeros(A, dtype=np.int64)
            for a in range(A):
                reps: list[np.ndarray] = []
                for x in range(X):
                    r = self.receiver_rewards[:, x, a]
                    for c, rep in enumerate(reps):
                        if np.all(np.abs(rep - r) <= REWARD_MATCH_TOL):
                            class_of[a, x] = c
                            break
                    else:
                        class_of[a, x] = len(reps)
                        reps.append(r)
                n_classes[a] = len(reps)
            class_of.setflags(write=False)
            n_classes.setflags(write=False)
            object.__setattr__(self, "_classes", (class_of, n_classes))
        return self._classes

    def reward_values(self, a: int) -> list[np.ndarray]:
        """Distinct public reward vectors reachable under joint action ``a``."""
        class_of, n_classes = self.reward_classes()
        out = []
        for c in range(n_classes[a]):
            x = int(np.flatnonzero(class_of[a] == c)[0])
            out.append(self.receiver_rewards[:, x, a].copy())
        return out


# -- validation ---------------------------------------------------------------


def validate(spec: GameSpec, strict_support: bool | None = None) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid).

    ``strict_support`` defaults to ``spec.full_support``.  When relaxed, zero
    transition entries only produce a warning.
    """
    if strict_support is None:
        strict_support = spec.full_support
    problems: list[str] = []
    X, S, N = spec.n_states, spec.n_signals, spec.n_receivers
    if X < 1:
        problems.append(f"n_states: must be >= 1, got {X}")
    if S < 1:
        problems.append(f"n_signals: must be >= 1, got {S}")
    if N < 1:
        problems.append(f"n_receivers: must be >= 1, got {N}")
    if len(spec.action_counts) != N:
        problems.append(f"action_counts: expected {N} entries, got {len(spec.action_counts)}")
    for i, k in enumerate(spec.action_counts):
        if k < 1:
            problems.append(f"action_counts[{i}]: must be >= 1, got {k}")
    if spec.horizon < 1:
        problems.append(f"horizon: must be >= 1, got {spec.horizon}")
    if not (0.0 < spec.discount <= 1.0):
        problems.append(f"discount: must lie in (0, 1], got {spec.discount}")
    if problems:
        return problems

    A = spec.n_joint
    shapes = {
        "transition": (spec.transition, (X, A, X)),
        "initial": (spec.initial, (X,)),
        "sender_reward": (spec.sender_reward, (X, A)),
        "receiver_rewards": (spec.receiver_rewards, (N, X, A)),
    }
    for name, (arr, shape) in shapes.items():
        if arr.shape != shape:
            problems.append(f"{name}: shape {arr.shape} does not match declared sizes {shape}")
        elif not np.all(np.isfinite(arr)):
            problems.append(f"{name}: contains non-finite entries")
    if problems:
        return problems

    Q = spec.transition
    for x in range(X):
        for a in range(A):
            row = Q[x, a]
            where = f"transition[x={x}, a={spec.profile(a)}]"
            if np.any(row < 0):
                problems.append(f"{where}: negative entry")
            total = float(row.sum())
            if abs(total - 1.0) > ROW_TOL:
                problems.append(f"{where}: row sums to {total!r}, expected 1")
            zeros = np.flatnonzero(row <= 0)
            if zeros.size and not np.any(row < 0):
                msg = f"{where}: zero probability for next states {zeros.tolist()} (full support required)"
                if strict_support:
                    problems.append(msg)
                else:
                    warnings.warn(msg, stacklevel=2)
    init = spec.initial
    if np.any(init < 0):
        problems.append("initial: negative entry")
    if abs(float(init.sum()) - 1.0) > ROW_TOL:
        problems.append(f"initial: sums to {float(init.sum())!r}, expected 1")
    return problems


def check_spec(spec: GameSpec) -> GameSpec:
    problems = validate(spec)
    if problems:
        raise SpecError("invalid game spec:\n  " + "\n  ".join(problems))
    return spec


# -- serialization ------------------------------------------------------------


def spec_to_dict(spec: GameSpec) -> dict[str, Any]:
    X, N = spec.n_states, spec.n_receivers
    ac = spec.action_counts
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    if spec.name:
        doc["name"] = spec.name
    doc.update(
        n_states=X,
        n_signals=spec.n_signals,
        n_receivers=N,
        action_counts=list(ac),
        transition=spec.transition.reshape((X, *ac, X)).tolist(),
        initial=spec.initial.tolist(),
        sender_reward=spec.sender_reward.reshape((X, *ac)).tolist(),
        receiver_rewards=spec.receiver_rewards.reshape((N, X, *ac)).tolist(),
        horizon=spec.horizon,
        discount=spec.discount,
        full_support=spec.full_support,
    )
    return doc


def spec_from_dict(doc: dict[str, Any]) -> GameSpec:
    version = str(doc.get("schema_version", ""))
    if version != SCHEMA_VERSION:
        raise SpecError(f"schema_version: expected {SCHEMA_VERSION!r}, got {version!r}")
    required = [
        "n_states", "n_signals", "n_receivers", "action_counts", "transition",
        "initial", "sender_reward", "receiver_rewards", "horizon",
    ]
    missing = [k for k in required if k not in doc]
    if missing:
        raise SpecError(f"missing fields: {', '.join(missing)}")
    try:
        X = int(doc["n_states"])
        N = int(doc["n_receivers"])
        ac = tuple(int(k) for k in doc["action_counts"])
        A = int(np.prod(ac)) if ac else 0
        Q = np.asarray(doc["transition"], dtype=float)
        Rs = np.asarray(doc["sender_reward"], dtype=float)
        Rr = np.asarray(doc["receiver_rewards"], dtype=float)
        expect = {"transition": (Q, (X, *ac, X)), "sender_reward": (Rs, (X, *ac)),
                  "receiver_rewards": (Rr, (N, X, *ac))}
        for key, (arr, shape) in expect.items():
            if arr.shape != shape:
                raise SpecError(f"{key}: shape {arr.shape} does not match declared sizes {shape}")
        return GameSpec(
            n_states=X,
            n_signals=int(doc["n_signals"]),
            n_receivers=N,
            action_counts=ac,
            transition=Q.reshape(X, A, X),
            initial=np.asarray(doc["initial"], dtype=float),
            sender_reward=Rs.reshape(X, A),
            receiver_rewards=Rr.reshape(N, X, A),
            horizon=int(doc["horizon"]),
            discount=float(doc.get("discount", 1.0)),
            full_support=bool(doc.get("full_support", True)),
            name=str(doc.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed game document: {exc}") from exc


def load_spec(path: str | Path) -> GameSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {str(path)!r}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    return spec_from_dict(doc)


def dump_spec(spec: GameSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


# -- beliefs and prescriptions ------------------------------------------------


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def is_belief(b: np.ndarray, tol: float = BELIEF_TOL) -> bool:
    b = np.asarray(b, dtype=float)
    return b.ndim == 1 and bool(np.all(b >= -tol)) and abs(float(b.sum()) - 1.0) <= tol


def check_prescription(gamma: np.ndarray, tol: float = BELIEF_TOL) -> None:
    """Raise ValueError unless every row of ``gamma`` is a distribution."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < -tol) or np.any(np.abs(gamma.sum(axis=-1) - 1.0) > tol):
        raise ValueError("prescription rows must be probability distributions")


def babbling(n_states: int, n_signals: int) -> np.ndarray:
    """Uniform, state-independent signalling."""
    return np.full((n_states, n_signals), 1.0 / n_signals)


def pure_prescription(signals: Sequence[int], n_signals: int) -> np.ndarray:
    gamma = np.zeros((len(signals), n_signals))
    gamma[np.arange(len(signals)), list(signals)] = 1.0
    return gamma


def joint_distribution(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Product distribution over flattened joint actions."""
    out = np.ones(1)
    for f in factors:
        out = np.multiply.outer(out, np.asarray(f, dtype=float)).ravel()
    return out


def update_on_signal(mu: np.ndarray, gamma: np.ndarray, s: int,
                     off_support: OffSupport = OffSupport.REJECT) -> np.ndarray:
    """Posterior over the current state after observing signal ``s``.

    ``nu(x) = mu(x) gamma(s|x) / sum_x mu(x) gamma(s|x)``.
    """
    mu = np.asarray(mu, dtype=float)
    col = np.asarray(gamma, dtype=float)[:, s]
    num = mu * col
    den = float(num.sum())
    if den <= 0.0:
        if OffSupport(off_support) is OffSupport.REJECT:
            raise ZeroProbabilitySignal(f"signal {s} has zero probability under the prescription")
        return uniform(mu.size)
    support = mu > 0
    if np.all(col[support] == col[support][0]):
        # uninformative on the support: the posterior is the prior, exactly
        return mu.copy()
    return num / den


def _reward_mask(spec: GameSpec, a: int, r: Any) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.shape != (spec.n_receivers,):
        raise ValueError(f"expected {spec.n_receivers} realized receiver rewards, got {r.shape}")
    diff = np.abs(spec.receiver_rewards[:, :, a] - r[:, None])
    return np.all(diff <= REWARD_MATCH_TOL, axis=0)


def update_on_action(nu: np.ndarray, a: int, r: Any, spec: GameSpec,
                     off_support: OffSupport = OffSupport.REJECT) -> np.ndarray:
    """Next-period prior after joint action ``a`` and public rewards ``r``.

    Conditions ``nu`` on the states whose receiver rewards match ``r`` and
    predicts through the kernel.  The receivers' mixing probability of ``a``
    cancels between numerator and denominator and so does not appear.
    """
    nu = np.asarray(nu, dtype=float)
    w = nu * _reward_mask(spec, a, r)
    den = float(w.sum())
    if den <= 0.0:
        if OffSupport(off_support) is OffSupport.REJECT:
            raise InconsistentReward(
                f"rewards {np.atleast_1d(r).tolist()} under action {spec.profile(a)} "
                "are impossible for every state in the belief support")
        return uniform(nu.size)
    nxt = (w / den) @ spec.transition[:, a, :]
    return nxt / nxt.sum()


def observation_consistent(spec: GameSpec, a: int, r: Any) -> bool:
    """True if some state yields public rewards ``r`` under joint action ``a``."""
    return bool(np.any(_reward_mask(spec, a, r)))


def stage_expected_reward(player: int, b: np.ndarray, gamma_s: np.ndarray,
                          gamma_r: np.ndarray | Sequence[np.ndarray], spec: GameSpec) -> float:
    """Expected one-period reward of ``player`` (0 = sender).

    ``gamma_r`` is either a joint distribution over flattened joint actions
    or a sequence of per-receiver factors.
    """
    if isinstance(gamma_r, (list, tuple)):
        gamma_r = joint_distribution(gamma_r)
    b = np.asarray(b, dtype=float)
    gamma_s = np.asarray(gamma_s, dtype=float)
    # the receivers' prescription does not depend on the signal, so the
    # signal marginalizes out: sum_s gamma_s(s|x) = 1
    weight = b * gamma_s.sum(axis=1)
    return float(weight @ spec.player_reward(player) @ np.asarray(gamma_r, dtype=float))


def max_abs_reward(spec: GameSpec) -> float:
    return float(max(np.abs(spec.sender_reward).max(), np.abs(spec.receiver_rewards).max()))


def discount_weights(spec: GameSpec) -> np.ndarray:
    """``delta**(t-1)`` for t = 1..T."""
    return spec.discount ** np.arange(spec.horizon)


