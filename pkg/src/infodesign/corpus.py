"""Small named games used by the tests, the examples and the CLI.

All PBE instances have two states, two signals, two actions per receiver
and horizon two; kernels use the entries 1/4 and 3/4 so that beliefs
reached by revealing play stay on grids whose resolution is a multiple of 4.
"""
from __future__ import annotations

import numpy as np

from .game import GameSpec

# kernel where the state tends to persist under action 0 and flip under action 1
_PERSIST_FLIP = np.array([
    [[0.75, 0.25], [0.25, 0.75]],
    [[0.25, 0.75], [0.75, 0.25]],
])
# kernel where action 0 pushes toward state 0 and action 1 toward state 1
_STEER = np.array([
    [[0.75, 0.25], [0.25, 0.75]],
    [[0.75, 0.25], [0.25, 0.75]],
])
_MATCH = np.array([[1.0, 0.0], [0.0, 1.0]])  # reward 1 for a == x


def judge() -> GameSpec:
    """One-shot persuasion: states (innocent, guilty), actions (convict, acquit).

    The judge wants a correct verdict; the prosecutor wants a conviction.
    """
    return GameSpec(
        n_states=2, n_signals=2, n_receivers=1, action_counts=(2,),
        transition=np.full((2, 2, 2), 0.5), initial=np.array([0.7, 0.3]),
        sender_reward=np.array([[1.0, 0.0], [1.0, 0.0]]),
        receiver_rewards=np.array([[[0.0, 1.0], [1.0, 0.0]]]),
        horizon=1, name="judge")


def conflict() -> GameSpec:
    """Receiver matches the state, sender wants the mismatch."""
    return GameSpec(2, 2, 1, (2,), _PERSIST_FLIP, np.array([0.5, 0.5]),
                    1.0 - _MATCH, _MATCH[None], horizon=2, name="conflict")


def aligned() -> GameSpec:
    """Sender and receiver both want the action to match the state."""
    return GameSpec(2, 2, 1, (2,), _PERSIST_FLIP, np.array([0.5, 0.5]),
                    _MATCH.copy(), _MATCH[None], horizon=2, name="aligned")


def steering() -> GameSpec:
    """Sender always prefers action 0; receiver matches the state; discounted.

    Action 1 gives the receiver the same reward in both states, so it reveals
    nothing about the state.
    """
    Rr = np.array([[[1.0, 0.5], [0.0, 0.5]]])
    Rs = np.array([[1.0, 0.0], [1.0, 0.0]])
    return GameSpec(2, 2, 1, (2,), _STEER, np.array([0.5, 0.5]), Rs, Rr,
                    horizon=2, discount=0.9, name="steering")


def partial_alignment() -> GameSpec:
    """Sender agrees with the receiver in state 0 and wants action 0 in state 1."""
    Rs = np.array([[1.0, 0.0], [1.0, 0.25]])
    return GameSpec(2, 2, 1, (2,), _PERSIST_FLIP, np.array([0.75, 0.25]), Rs, _MATCH[None],
                    horizon=2, name="partial_alignment")


def two_receivers() -> GameSpec:
    """Two receivers who each want to match the state, plus a coordination bonus.

    Joint actions are flattened as (a_1, a_2) row-major; the kernel depends
    on receiver 1's action only.
    """
    X, ac = 2, (2, 2)
    Q = np.zeros((X, 2, 2, X))
    for a1 in range(2):
        Q[:, a1, :, :] = _PERSIST_FLIP[:, a1, None, :]
    Rr = np.zeros((2, X, 2, 2))
    for x in range(X):
        for a1 in range(2):
            for a2 in range(2):
                bonus = 0.5 if a1 == a2 else 0.0
                Rr[0, x, a1, a2] = float(a1 == x) + bonus
                Rr[1, x, a1, a2] = float(a2 == x) + bonus
    Rs = np.zeros((X, 2, 2))
    Rs[:, 0, 0] = 1.0  # sender wants both receivers on action 0
    return GameSpec(2, 2, 2, ac, Q.reshape(X, 4, X), np.array([0.5, 0.5]), Rs.reshape(X, 4),
                    Rr.reshape(2, X, 4), horizon=2, name="two_receivers")


def aligned_cpse() -> GameSpec:
    """Aligned rewards with a state-dependent payoff scale; revelation is optimal."""
    R = np.array([[2.0, 0.0], [0.0, 1.0]])
    return GameSpec(2, 2, 1, (2,), _STEER, np.array([0.5, 0.5]), R, R[None],
                    horizon=2, name="aligned_cpse")


def persuasion_dynamic() -> GameSpec:
    """Two-period persuasion: sender always wants action 0, receiver matches the state."""
    Rs = np.array([[1.0, 0.0], [1.0, 0.0]])
    return GameSpec(2, 2, 1, (2,), _PERSIST_FLIP, np.array([0.75, 0.25]), Rs, _MATCH[None],
                    horizon=2, name="persuasion_dynamic")


PBE_CORPUS = {f.__name__: f for f in (conflict, aligned, steering, partial_alignment, two_receivers)}
CPSE_CORPUS = {f.__name__: f for f in (judge, aligned_cpse, persuasion_dynamic)}
ALL = {**PBE_CORPUS, **CPSE_CORPUS}


def get(name: str) -> GameSpec:
    try:
        return ALL[name]()
    except KeyError:
        raise KeyError(f"unknown corpus game {name!r}; known: {', '.join(sorted(ALL))}") from None
