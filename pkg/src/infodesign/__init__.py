"""Markovian equilibria of dynamic information design games.

One sender privately observes a controlled Markov state and sends signals;
one or more receivers act.  The package tabulates perfect Bayesian
equilibria (PBE) and common perfect Stackelberg equilibria (cPSE, sender
commitment) over a belief grid, plays them forward, and checks them with
brute-force oracles.
"""
from .backward import EquilibriumPolicy, StageFailure, UnsolvedBelief, ValueTables, evaluate_value, measure_slack, solve
from .forward import exact_payoff, make_strategy, rollout
from .game import GameSpec, OffSupport, SpecError, load_spec, update_on_action, update_on_signal, validate
from .grid import BeliefGrid, Interp
from .stage import Mode, NoFixedPointFound, SolverConfig
from .verify import OracleConfig, check_cpse, check_pbe, concavify, full_info_dp

__all__ = [
    "BeliefGrid", "EquilibriumPolicy", "GameSpec", "Interp", "Mode", "NoFixedPointFound",
    "OffSupport", "OracleConfig", "SolverConfig", "SpecError", "StageFailure", "UnsolvedBelief",
    "ValueTables", "check_cpse", "check_pbe", "concavify", "evaluate_value", "exact_payoff",
    "full_info_dp", "load_spec", "make_strategy", "measure_slack", "rollout", "solve",
    "update_on_action", "update_on_signal", "validate",
]
