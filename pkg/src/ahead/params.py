"""Model parameters, grid specifications, and closed-form building blocks.

Everything downstream (sub-game solver, outer backward induction, duration
recursion, Monte Carlo) consumes the two frozen dataclasses defined here.
Conventions used throughout the package:

* the state coordinate is the gap ``s = P - P*`` between the fixed trading
  price and the efficient price; it follows a driftless Brownian motion with
  volatility ``sigma``,
* player a buys (orders accepted only while ``s > 0``, strict) and pays ``+s``
  per accepted order; player b sells (accepted while ``s < 0``, strict) and
  pays ``-s``,
* player a minimises a cost per unit of time, player b maximises a gain per
  unit of time.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

# Calibration defaults for quantities no reference value exists for.  They are
# recorded in every output sidecar; the repro profile refuses to fill them in
# silently.
LAMBDA_MINUS_DEFAULT = 0.001
LAMBDA_PLUS_DEFAULT = 1.0
SIGMA_DEFAULT = 0.03

TRIGGER_MODES = ("fixed", "randomized_half")
ROUNDING_MODES = ("continuous", "nearest_integer")

_INT_TOL = 1e-9


def _is_integer(x: float) -> bool:
    return abs(x - round(x)) <= _INT_TOL * max(1.0, abs(x))


@dataclass(frozen=True)
class ModelParams:
    """Market and game constants.

    Units: prices in price-units, volumes in lots, time in seconds.  ``q`` is
    the target-deviation penalty weight (cost per squared lot per second),
    ``K`` the market-maker supply slope in the auction (lots per price-unit),
    ``h`` the auction duration, ``T`` the triggering horizon and ``delta``
    the outer time step with ``T/delta`` integer.  ``n_hat`` is the volume a
    lone triggerer commits, ``n_hat_ab`` the per-player commitment when both
    trigger simultaneously under ``sim_trigger_mode="fixed"``.
    """

    sigma: float = SIGMA_DEFAULT
    K: float = 10.0
    q: float = 0.01
    v_a: float = 0.1
    v_b: float = 0.1
    lambda_minus: float = LAMBDA_MINUS_DEFAULT
    lambda_plus: float = LAMBDA_PLUS_DEFAULT
    h: float = 20.0
    T: float = 100.0
    delta: float = 0.05
    n_hat: int = 3
    n_hat_ab: int = 3
    sim_trigger_mode: str = "randomized_half"
    p_minus_pstar0: float = 0.0
    target_rounding: str = "continuous"

    def __post_init__(self):
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not self.K > 0.0:
            raise ValueError(f"K must be > 0, got {self.K}")
        if self.q < 0.0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        if not (self.v_a > 0.0 and self.v_b > 0.0):
            raise ValueError(f"trading targets must be > 0, got v_a={self.v_a}, v_b={self.v_b}")
        # 0 <= lambda_minus <= lambda_plus.  Equality (and zero) is allowed so
        # that the no-control case stays representable for oracle checks.
        if not (0.0 <= self.lambda_minus <= self.lambda_plus):
            raise ValueError(
                f"need 0 <= lambda_minus <= lambda_plus, got "
                f"[{self.lambda_minus}, {self.lambda_plus}]"
            )
        if not self.h > 0.0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if not (0.0 < self.delta <= self.T):
            raise ValueError(f"need 0 < delta <= T, got delta={self.delta}, T={self.T}")
        if not _is_integer(self.T / self.delta):
            raise ValueError(f"T/delta must be an integer, got {self.T / self.delta}")
        if self.n_hat < 0 or self.n_hat_ab < 0:
            raise ValueError("committed volumes must be >= 0")
        if self.sim_trigger_mode not in TRIGGER_MODES:
            raise ValueError(f"sim_trigger_mode must be one of {TRIGGER_MODES}")
        if self.target_rounding not in ROUNDING_MODES:
            raise ValueError(f"target_rounding must be one of {ROUNDING_MODES}")
        if self.target_rounding == "nearest_integer":
            # Hypothesis of the discrete-vs-continuous stopping comparison:
            # half a lot of target growth must take an integer number of steps.
            for name, v in (("v_a", self.v_a), ("v_b", self.v_b)):
                if not _is_integer(1.0 / (2.0 * v * self.delta)):
                    raise ValueError(
                        f"nearest_integer rounding needs 1/(2*{name}*delta) integer, "
                        f"got {1.0 / (2.0 * v * self.delta)}"
                    )

    # ------------------------------------------------------------------
    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.delta))

    def v(self, player: str) -> float:
        if player == "a":
            return self.v_a
        if player == "b":
            return self.v_b
        raise ValueError(f"player must be 'a' or 'b', got {player!r}")

    def target_offset(self, player: str, t):
        """Target position v*t, rounded to the nearest lot when configured.

        Accepts scalars or arrays.  The nearest-integer convention is
        ceil(v*t - 1/2), which maps exact half-lots down.
        """
        vt = self.v(player) * np.asarray(t, dtype=float)
        if self.target_rounding == "nearest_integer":
            vt = np.ceil(vt - 0.5)
        if np.ndim(t) == 0:
            return float(vt)
        return vt

    def fingerprint(self) -> str:
        """Content hash over every field; recorded in outputs and cache files."""
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class GridSpec:
    """Discretisation of the outer state (s, n_a, n_b, l_a, l_b) plus the
    auction count lattice.

    The s-grid is symmetric about 0 (``s_nodes`` odd so 0 is a node) and
    optionally sinh-concentrated toward 0: the acceptance rule flips there,
    so the value function has a jump at s = 0 that a uniform grid smears
    over a whole cell.  ``s_stretch`` = 0 keeps the classic uniform grid.
    Cash grids run over [0, l_max_i]; accumulated costs are nonnegative for
    both players by construction.  ``m_max`` truncates the within-auction
    jump counts with an absorbing boundary and ``delta_auction`` is the
    target step of the auction ODE integration (the solver rounds it down
    so it divides h exactly).
    """

    s_max: float = 0.45
    s_nodes: int = 21
    n_max_a: int = 15
    n_max_b: int = 15
    l_max_a: float = 4.0
    l_max_b: float = 4.0
    l_nodes_a: int = 11
    l_nodes_b: int = 11
    m_max: int = 43
    delta_auction: float = 0.05
    s_stretch: float = 0.0

    def __post_init__(self):
        if not self.s_max > 0.0:
            raise ValueError("s_max must be > 0")
        if self.s_nodes < 3 or self.s_nodes % 2 == 0:
            raise ValueError("s_nodes must be odd and >= 3 so that s=0 is a node")
        if min(self.n_max_a, self.n_max_b) < 0:
            raise ValueError("count truncations must be >= 0")
        if not (self.l_max_a > 0.0 and self.l_max_b > 0.0):
            raise ValueError("cash bounds must be > 0")
        if min(self.l_nodes_a, self.l_nodes_b) < 2:
            raise ValueError("cash grids need at least 2 nodes")
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if not self.delta_auction > 0.0:
            raise ValueError("delta_auction must be > 0")
        if self.s_stretch < 0.0:
            raise ValueError("s_stretch must be >= 0")

    # ------------------------------------------------------------------
    def s_axis(self) -> np.ndarray:
        # Built from integer multiples of the base fractions so that s = 0 is
        # exact (the acceptance rule uses strict inequalities at s = 0) and
        # the grid is bitwise symmetric.
        half = self.s_nodes // 2
        u = np.arange(-half, half + 1) / half
        if self.s_stretch == 0.0:
            return self.s_max * u
        c = self.s_stretch
        pos = self.s_max * np.sinh(c * u[half:]) / math.sinh(c)
        return np.concatenate([-pos[:0:-1], pos])

    def l_axis(self, player: str) -> np.ndarray:
        if player == "a":
            return np.linspace(0.0, self.l_max_a, self.l_nodes_a)
        if player == "b":
            return np.linspace(0.0, self.l_max_b, self.l_nodes_b)
        raise ValueError(f"player must be 'a' or 'b', got {player!r}")

    def n_max(self, player: str) -> int:
        return self.n_max_a if player == "a" else self.n_max_b

    def auction_steps(self, params: ModelParams) -> int:
        return max(1, int(math.ceil(params.h / self.delta_auction - _INT_TOL)))

    def auction_dt(self, params: ModelParams) -> float:
        return params.h / self.auction_steps(params)

    def validate(self, params: ModelParams) -> None:
        """Cross-checks against the model constants.

        CFL violations are hard errors.  The count-truncation bound
        n_max >= ceil((lambda_plus + v) * T) is only a warning: the desk
        profile deliberately truncates tighter and relies on the near-zero
        visiting probability of high-count nodes under equilibrium play.
        """
        dt = self.auction_dt(params)
        if dt * 2.0 * params.lambda_plus >= 1.0:
            raise ValueError(
                f"auction CFL violated: delta_auction*2*lambda_plus = "
                f"{dt * 2.0 * params.lambda_plus:.3f} >= 1"
            )
        if params.delta * 2.0 * params.lambda_plus >= 1.0:
            raise ValueError(
                f"outer CFL violated: delta*2*lambda_plus = "
                f"{params.delta * 2.0 * params.lambda_plus:.3f} >= 1"
            )
        m_bound = math.ceil(params.lambda_plus * params.h) + 5.0 * math.sqrt(
            params.lambda_plus * params.h
        )
        if self.m_max < m_bound:
            raise ValueError(
                f"m_max={self.m_max} too small for lambda_plus*h={params.lambda_plus * params.h}"
                f" (need >= {m_bound:.1f})"
            )
        for player in ("a", "b"):
            bound = math.ceil((params.lambda_plus + params.v(player)) * params.T)
            if self.n_max(player) < bound:
                warnings.warn(
                    f"n_max_{player}={self.n_max(player)} below the conservative bound "
                    f"{bound}; high-count truncation error is assumed negligible",
                    stacklevel=2,
                )

    # ------------------------------------------------------------------
    @staticmethod
    def _auto_m(params: ModelParams) -> int:
        lam_h = params.lambda_plus * params.h
        return int(math.ceil(math.ceil(lam_h) + 5.0 * math.sqrt(lam_h))) if lam_h > 0 else 1

    @staticmethod
    def _auto_dt(params: ModelParams) -> float:
        # The window integrator's O(dt) bias has to sit below Monte Carlo
        # resolution at acceptance-scale path counts, and the forward
        # simulator realises the window in exact event time; 0.0025*h keeps
        # the two views of the auction aligned.
        if params.lambda_plus <= 0.0:
            return 0.0025 * params.h
        return min(0.0025 * params.h, 0.5 / (2.0 * params.lambda_plus))

    @classmethod
    def desk(cls, params: ModelParams, **overrides) -> "GridSpec":
        """Coarse interactive grid (node counts fixed by design)."""
        sig_range = 3.0 * params.sigma * math.sqrt(params.T)
        fields = dict(
            s_max=max(round(sig_range, 2), 0.05),
            s_nodes=21,
            n_max_a=15,
            n_max_b=15,
            l_max_a=4.0,
            l_max_b=4.0,
            l_nodes_a=11,
            l_nodes_b=11,
            m_max=cls._auto_m(params),
            delta_auction=cls._auto_dt(params),
            s_stretch=3.25,
        )
        fields.update(overrides)
        return cls(**fields)

    @classmethod
    def repro(cls, params: ModelParams, **overrides) -> "GridSpec":
        """Full-scale grid; count truncation honours the conservative bound."""
        sig_range = 3.0 * params.sigma * math.sqrt(params.T)
        fields = dict(
            s_max=max(round(sig_range, 2), 0.05),
            s_nodes=21,
            n_max_a=int(math.ceil((params.lambda_plus + params.v_a) * params.T)) + 2,
            n_max_b=int(math.ceil((params.lambda_plus + params.v_b) * params.T)) + 2,
            l_max_a=6.0,
            l_max_b=6.0,
            l_nodes_a=11,
            l_nodes_b=11,
            m_max=cls._auto_m(params),
            delta_auction=cls._auto_dt(params),
            s_stretch=3.25,
        )
        fields.update(overrides)
        return cls(**fields)

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class OuterState:
    """One node of the outer game: time index k (t = k*delta), gap s, accepted
    order counts and accumulated costs of both players."""

    k: int
    s: float
    n_a: int
    n_b: int
    l_a: float
    l_b: float

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 0:
            raise ValueError("order counts must be >= 0")
        if not (math.isfinite(self.l_a) and math.isfinite(self.l_b)):
            raise ValueError("accumulated costs must be finite")


# ----------------------------------------------------------------------
# Closed-form building blocks
# ----------------------------------------------------------------------

def bang_bang_intensity(jump_increment: float, side: str, params: ModelParams) -> float:
    """Optimal order intensity given the value change one extra order causes.

    A minimiser avoids positive increments (sends at lambda_minus) and exploits
    negative ones (lambda_plus); a maximiser does the opposite.  At exact
    indifference both sides fall back to lambda_minus, which keeps the solver
    deterministic and minimises spurious activity.
    """
    if side == "minimizer":
        if jump_increment < 0.0:
            return params.lambda_plus
        return params.lambda_minus
    if side == "maximizer":
        if jump_increment > 0.0:
            return params.lambda_plus
        return params.lambda_minus
    raise ValueError(f"side must be 'minimizer' or 'maximizer', got {side!r}")


def terminal_auction_payoff(x_a, x_b, m_a, m_b, np_a, np_b, params: ModelParams):
    """Auction settlement payoffs given within-auction jump counts.

    ``x_i`` is the pre-auction target deviation N_i - v_i*tau (already rounded
    upstream when nearest_integer is active), ``m_i`` the orders sent during
    the auction window and ``np_i`` the committed volume.  The clearing price
    sits at distance (total_a - total_b)/K from the efficient price, so each
    player pays his own total times that distance; on top of that both pay the
    quadratic target penalty over the auction window.  Returns
    (payoff_a, payoff_b) with payoff_a a cost and payoff_b a gain.

    Broadcasts over array inputs.
    """
    tot_a = m_a + np_a
    tot_b = m_b + np_b
    imbalance = (tot_a - tot_b) / params.K
    qh = params.q * params.h
    payoff_a = qh * (params.v_a * params.h - x_a - tot_a) ** 2 + tot_a * imbalance
    payoff_b = -qh * (params.v_b * params.h - x_b - tot_b) ** 2 + tot_b * imbalance
    return payoff_a, payoff_b
