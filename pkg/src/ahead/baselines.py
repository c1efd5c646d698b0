"""Reference market designs: continuous limit order book and periodic auction.

The CLOB benchmark is fully analytic: each player trades at his target rate
and pays one over the supply slope per trade, so values and inter-trade times
need no solver.  The periodic-auction benchmark reuses the full backward
induction with market-maker acceptance turned off; with no accepted orders
the count coordinates never move, so the state collapses to (s, l_a, l_b)
and the solve is cheap even at fine time steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

from .duration import average_duration
from .game import backward_induction
from .params import GridSpec, ModelParams


@dataclass(frozen=True)
class BaselineReport:
    """One comparison row: a design tag, both players' values per unit time,
    and the expected continuous-phase duration in seconds."""

    design: str
    V_a: float
    V_b: float
    duration: float
    params: ModelParams

    def scaled(self, factor: float = 1e6) -> dict:
        """Values multiplied up for table display; duration left in seconds."""
        return {"design": self.design, "V_a": self.V_a * factor,
                "V_b": self.V_b * factor, "duration": self.duration}


def clob_values(params: ModelParams) -> BaselineReport:
    """Closed-form benchmark: trade at the target rate, pay 1/K per trade.

    Player a's cost per unit time is v_a/K; player b's value on his gain
    convention is -v_b/K.  The duration column is the mean time between two
    of player a's trades.
    """
    if params.K <= 0.0 or params.v_a <= 0.0 or params.v_b <= 0.0:
        raise ValueError("clob benchmark needs K > 0 and positive trade rates")
    return BaselineReport(
        design="clob",
        V_a=params.v_a / params.K,
        V_b=-params.v_b / params.K,
        duration=1.0 / params.v_a,
        params=params,
    )


def periodic_auction_values(params: ModelParams, grid: GridSpec, cache,
                            node_budget: float | None = None) -> BaselineReport:
    """Trigger game with continuous trading disabled.

    Counts stay at their initial value without acceptance, so the count axes
    are collapsed to a single node; this is exact, not a truncation.  The
    n_max warning from grid validation is meaningless here and suppressed.
    """
    small = replace_grid_counts(grid)
    from .cache import SubgameCache
    sub = cache if cache is not None else SubgameCache(params, small)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        fields = backward_induction(
            params, small, sub, mode="mixed", trading=False,
            with_duration=True, store_policies=False,
            node_budget=node_budget,
        )
    v_a, v_b = fields.initial_values(0.0)
    return BaselineReport(
        design=f"periodic(n_hat={params.n_hat})",
        V_a=float(v_a),
        V_b=float(v_b),
        duration=fields.duration.initial(0.0),
        params=params,
    )


def replace_grid_counts(grid: GridSpec) -> GridSpec:
    """Collapse the count axes to the single reachable node."""
    return replace(grid, n_max_a=0, n_max_b=0)


def ahead_report(params: ModelParams, grid: GridSpec, cache,
                 node_budget: float | None = None) -> BaselineReport:
    """The mechanism itself, packaged the same way as the benchmarks."""
    fields = backward_induction(
        params, grid, cache, mode="mixed", with_duration=True,
        store_policies=False, node_budget=node_budget,
    )
    v_a, v_b = fields.initial_values(0.0)
    return BaselineReport(
        design="ahead",
        V_a=float(v_a),
        V_b=float(v_b),
        duration=fields.duration.initial(0.0),
        params=params,
    )
