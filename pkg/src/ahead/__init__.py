"""Equilibrium solver and simulator for ad-hoc electronic auctions.

Two market takers trade against a market maker at a fixed price between
participant-triggered auctions; this package computes the equilibrium value
functions, trading intensities and triggering policies of the induced
stochastic game, the expected length of the continuous phase, and benchmark
values for periodic-auction and limit-order-book designs, plus a Monte Carlo
engine that checks the dynamic-programming output path by path.
"""

from .baselines import BaselineReport, ahead_report, clob_values, periodic_auction_values
from .cache import SubgameCache
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .duration import DurationField, average_duration
from .game import (
    GameFields,
    StopGame2x2,
    backward_induction,
    nash_step_intensities,
    step_expectation,
    stopping_probabilities,
)
from .params import (
    GridSpec,
    ModelParams,
    OuterState,
    bang_bang_intensity,
    terminal_auction_payoff,
)
from .simulate import (
    DeviationRow,
    MCStats,
    PathSample,
    PolicyDeviation,
    deviation_test,
    simulate,
    simulate_auction,
    write_path_log,
)
from .subgame import (
    SubgameKey,
    SubgameTable,
    epsilon_bounds,
    g_wrapper,
    solve_subgame,
    solve_subgame_batch,
)

__all__ = [
    "BaselineReport",
    "ConfigError",
    "DeviationRow",
    "DurationField",
    "ExperimentConfig",
    "GameFields",
    "GridSpec",
    "MCStats",
    "ModelParams",
    "OuterState",
    "PathSample",
    "PolicyDeviation",
    "StopGame2x2",
    "SubgameCache",
    "SubgameKey",
    "SubgameTable",
    "ahead_report",
    "average_duration",
    "backward_induction",
    "bang_bang_intensity",
    "clob_values",
    "deviation_test",
    "epsilon_bounds",
    "g_wrapper",
    "load_config",
    "nash_step_intensities",
    "parse_config",
    "periodic_auction_values",
    "simulate",
    "simulate_auction",
    "solve_subgame",
    "solve_subgame_batch",
    "step_expectation",
    "stopping_probabilities",
    "terminal_auction_payoff",
    "write_path_log",
]

__version__ = "0.1.0"
