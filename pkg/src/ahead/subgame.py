"""Auction sub-game: coupled backward ODE system on the jump-count lattice.

Once an auction is triggered, both players control their order intensities in
[lambda_minus, lambda_plus] over the window [0, h]; every order is recorded.
The state is the pair of within-auction order counts (m_a, m_b) and the
equilibrium is bang-bang: each player compares the value of his own next
order (a first difference of his value surface) against zero.  Both players'
value surfaces evolve under the resulting pair of intensities, which couples
the two backward equations.

The solver integrates the system with an explicit backward Euler scheme on a
time grid of step ``delta_auction`` (adjusted to divide h exactly), with a
Jacobi-style simultaneous policy update read from the t+dt slice and an
absorbing count boundary at m_max.  Scalar outputs ``g_a = W_a(0,0,0)`` and
``g_b = W_b(0,0,0)`` are the expected auction payoffs used by the outer game;
per-key results are memoised because the key enters the terminal condition
only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import GridSpec, ModelParams, terminal_auction_payoff

# Binary quantum for key deduplication; distinct reachable x values on any
# sane outer grid differ by far more than this.
_QUANTUM = 2.0 ** -30


def quantize(x: float) -> int:
    return int(round(x / _QUANTUM))


def dequantize(q: int) -> float:
    return q * _QUANTUM


@dataclass(frozen=True)
class SubgameKey:
    """Pre-auction target deviations and committed volumes."""

    x_a: float
    x_b: float
    np_a: int
    np_b: int

    def __post_init__(self):
        if self.np_a < 0 or self.np_b < 0:
            raise ValueError("committed volumes must be >= 0")

    def quantized(self) -> tuple:
        return (quantize(self.x_a), quantize(self.x_b), self.np_a, self.np_b)


@dataclass
class SubgameTable:
    """Full solve of one sub-game: value surfaces per time slice, bang-bang
    policies per interval, and the scalar game values at the empty lattice
    corner.

    ``up_a[i]`` / ``up_b[i]`` flag the nodes where the player sends at
    lambda_plus on [t_i, t_i + dt); everywhere else the intensity is
    lambda_minus.
    """

    key: SubgameKey
    t_axis: np.ndarray          # (steps + 1,), 0 .. h
    W_a: np.ndarray             # (steps + 1, M, M), time-major
    W_b: np.ndarray
    up_a: np.ndarray            # (steps, M, M) bool
    up_b: np.ndarray
    lambda_minus: float
    lambda_plus: float
    g_a: float = 0.0
    g_b: float = 0.0

    def __post_init__(self):
        self.g_a = float(self.W_a[0, 0, 0])
        self.g_b = float(self.W_b[0, 0, 0])

    def lam_a(self, i: int) -> np.ndarray:
        """Intensity surface of player a on [t_i, t_i+dt), in rate units."""
        return np.where(self.up_a[i], self.lambda_plus, self.lambda_minus)

    def lam_b(self, i: int) -> np.ndarray:
        return np.where(self.up_b[i], self.lambda_plus, self.lambda_minus)

    def total_rate(self) -> np.ndarray:
        """lambda_a + lambda_b per (interval, m_a, m_b); used by the simulator."""
        lm, lp = self.lambda_minus, self.lambda_plus
        return (
            np.where(self.up_a, lp, lm).astype(float)
            + np.where(self.up_b, lp, lm)
        )


def _terminal_surfaces(x_a, x_b, np_a, np_b, params: ModelParams, m_max: int):
    """Terminal payoff arrays over the (m_a, m_b) lattice, batched over keys."""
    m = np.arange(m_max + 1, dtype=float)
    ma = m[None, :, None]
    mb = m[None, None, :]
    xa = np.asarray(x_a, dtype=float)[:, None, None]
    xb = np.asarray(x_b, dtype=float)[:, None, None]
    na = np.asarray(np_a, dtype=float)[:, None, None]
    nb = np.asarray(np_b, dtype=float)[:, None, None]
    return terminal_auction_payoff(xa, xb, ma, mb, na, nb, params)


def _check_cfl(params: ModelParams, grid: GridSpec) -> float:
    dt = grid.auction_dt(params)
    if dt * (2.0 * params.lambda_plus) >= 1.0:
        raise ValueError(
            f"auction CFL violated: dt*(lambda_a+lambda_b) = "
            f"{dt * 2.0 * params.lambda_plus:.4f} >= 1; refine delta_auction"
        )
    return dt


def solve_subgame_batch(x_a, x_b, np_a, np_b, params: ModelParams, grid: GridSpec):
    """Solve a batch of sub-games that differ only in their keys.

    Returns (g_a, g_b) arrays aligned with the inputs.  The per-step policy
    surfaces are not retained; use solve_subgame for a single key when the
    full table is needed.
    """
    dt = _check_cfl(params, grid)
    steps = grid.auction_steps(params)
    lm, lp = params.lambda_minus, params.lambda_plus

    W_a, W_b = _terminal_surfaces(x_a, x_b, np_a, np_b, params, grid.m_max)
    da_a = np.zeros_like(W_a)
    da_b = np.zeros_like(W_a)
    db_a = np.zeros_like(W_a)
    db_b = np.zeros_like(W_a)

    for _ in range(steps):
        # First differences in own count, absorbing at the boundary.
        np.subtract(W_a[:, 1:, :], W_a[:, :-1, :], out=da_a[:, :-1, :])
        np.subtract(W_b[:, 1:, :], W_b[:, :-1, :], out=da_b[:, :-1, :])
        np.subtract(W_a[:, :, 1:], W_a[:, :, :-1], out=db_a[:, :, :-1])
        np.subtract(W_b[:, :, 1:], W_b[:, :, :-1], out=db_b[:, :, :-1])
        # a minimises: send fast only when the next order lowers W_a.
        # b maximises: send fast only when the next order raises W_b.
        # Ties fall to lambda_minus.
        lam_a = np.where(da_a < 0.0, lp, lm)
        lam_b = np.where(db_b > 0.0, lp, lm)
        W_a += dt * (lam_a * da_a + lam_b * db_a)
        W_b += dt * (lam_a * da_b + lam_b * db_b)

    g_a = W_a[:, 0, 0].copy()
    g_b = W_b[:, 0, 0].copy()
    if not (np.all(np.isfinite(g_a)) and np.all(np.isfinite(g_b))):
        bad = np.argwhere(~(np.isfinite(g_a) & np.isfinite(g_b))).ravel()
        raise FloatingPointError(f"non-finite sub-game value for batch entries {bad[:5]}")
    return g_a, g_b


def solve_subgame(key: SubgameKey, params: ModelParams, grid: GridSpec) -> SubgameTable:
    """Full single-key solve retaining value surfaces and policies."""
    dt = _check_cfl(params, grid)
    steps = grid.auction_steps(params)
    M = grid.m_max + 1
    lm, lp = params.lambda_minus, params.lambda_plus

    W_a = np.empty((steps + 1, M, M))
    W_b = np.empty((steps + 1, M, M))
    up_a = np.empty((steps, M, M), dtype=bool)
    up_b = np.empty((steps, M, M), dtype=bool)

    wa, wb = _terminal_surfaces([key.x_a], [key.x_b], [key.np_a], [key.np_b], params, grid.m_max)
    wa, wb = wa[0], wb[0]
    W_a[steps] = wa
    W_b[steps] = wb

    da_a = np.zeros((M, M))
    da_b = np.zeros((M, M))
    db_a = np.zeros((M, M))
    db_b = np.zeros((M, M))
    for j in range(steps):
        i = steps - 1 - j  # policy applies on [t_i, t_i + dt)
        np.subtract(wa[1:, :], wa[:-1, :], out=da_a[:-1, :])
        np.subtract(wb[1:, :], wb[:-1, :], out=da_b[:-1, :])
        np.subtract(wa[:, 1:], wa[:, :-1], out=db_a[:, :-1])
        np.subtract(wb[:, 1:], wb[:, :-1], out=db_b[:, :-1])
        plus_a = da_a < 0.0
        plus_b = db_b > 0.0
        lam_a = np.where(plus_a, lp, lm)
        lam_b = np.where(plus_b, lp, lm)
        wa = wa + dt * (lam_a * da_a + lam_b * db_a)
        wb = wb + dt * (lam_a * da_b + lam_b * db_b)
        W_a[i] = wa
        W_b[i] = wb
        up_a[i] = plus_a
        up_b[i] = plus_b

    if not (np.all(np.isfinite(wa)) and np.all(np.isfinite(wb))):
        bad = np.argwhere(~(np.isfinite(wa) & np.isfinite(wb)))
        raise FloatingPointError(f"non-finite sub-game value at lattice nodes {bad[:5].tolist()}")

    t_axis = dt * np.arange(steps + 1)
    return SubgameTable(
        key=key, t_axis=t_axis, W_a=W_a, W_b=W_b, up_a=up_a, up_b=up_b,
        lambda_minus=lm, lambda_plus=lp,
    )


# ----------------------------------------------------------------------
# Wrappers around g: who triggered, and with what commitment
# ----------------------------------------------------------------------

ROLES = ("first", "second", "sim", "at_T")


def wrapper_commitments(role: str, player: str, params: ModelParams):
    """Committed volumes (np_a, np_b) encoding who triggered the auction.

    ``first`` means the named player triggered alone, ``second`` that his
    opponent did, ``sim`` a simultaneous trigger under fixed mode and ``at_T``
    the forced horizon auction (nobody commits anything).
    """
    if role == "at_T":
        return 0, 0
    if role == "first":
        return (params.n_hat, 0) if player == "a" else (0, params.n_hat)
    if role == "second":
        return (0, params.n_hat) if player == "a" else (params.n_hat, 0)
    if role == "sim":
        return params.n_hat_ab, params.n_hat_ab
    raise ValueError(f"role must be one of {ROLES}, got {role!r}")


def g_wrapper(role: str, player: str, t: float, n_a: int, n_b: int,
              params: ModelParams, cache) -> float:
    """Sub-game value seen by ``player`` when the auction starts at time t
    with accepted counts (n_a, n_b) and the triggering pattern ``role``.

    In randomized_half mode a simultaneous trigger is attributed to either
    player with probability one half and commitment n_hat, so ``sim`` is the
    average of ``first`` and ``second``.  Values are fetched through the
    sub-game cache.
    """
    if player not in ("a", "b"):
        raise ValueError(f"player must be 'a' or 'b', got {player!r}")
    if not 0.0 <= t <= params.T + 1e-9:
        raise ValueError(f"t={t} outside [0, T]")
    if role == "sim" and params.sim_trigger_mode == "randomized_half":
        first = g_wrapper("first", player, t, n_a, n_b, params, cache)
        second = g_wrapper("second", player, t, n_a, n_b, params, cache)
        return 0.5 * (first + second)
    np_a, np_b = wrapper_commitments(role, player, params)
    x_a = n_a - params.target_offset("a", t)
    x_b = n_b - params.target_offset("b", t)
    g_a, g_b = cache.values(
        np.array([x_a]), np.array([x_b]),
        np.array([np_a]), np.array([np_b]),
    )
    return float(g_a[0] if player == "a" else g_b[0])


class StopValueTables:
    """Per-time-slice arrays of the stop payoffs g over the outer count grid.

    slice(k) returns a dict with keys first_a, first_b, second_a, second_b,
    sim_a, sim_b (and T_a, T_b at the terminal index), each an array over
    (n_a, n_b).  Built lazily per k through the cache so repro-scale runs
    never hold all slices at once.
    """

    def __init__(self, params: ModelParams, grid: GridSpec, cache):
        self.params = params
        self.grid = grid
        self.cache = cache
        self._slices: dict[int, dict] = {}

    def _deviations(self, k: int):
        p = self.params
        t = k * p.delta
        xa = np.arange(self.grid.n_max_a + 1, dtype=float) - p.target_offset("a", t)
        xb = np.arange(self.grid.n_max_b + 1, dtype=float) - p.target_offset("b", t)
        return xa, xb

    def slice(self, k: int) -> dict:
        if k in self._slices:
            return self._slices[k]
        p = self.params
        xa, xb = self._deviations(k)
        XA, XB = np.meshgrid(xa, xb, indexing="ij")
        xa_flat, xb_flat = XA.ravel(), XB.ravel()
        shape = XA.shape
        ones = np.ones(xa_flat.size, dtype=int)

        def solve(np_a, np_b):
            ga, gb = self.cache.values(xa_flat, xb_flat, np_a * ones, np_b * ones)
            return ga.reshape(shape), gb.reshape(shape)

        # One solve serves both players: the (n_hat, 0) game is "a triggered",
        # which is first for a and second for b.
        ga_a_first, gb_a_first = solve(p.n_hat, 0)
        ga_b_first, gb_b_first = solve(0, p.n_hat)
        out = {
            "first_a": ga_a_first,
            "second_b": gb_a_first,
            "second_a": ga_b_first,
            "first_b": gb_b_first,
        }
        if p.sim_trigger_mode == "randomized_half":
            out["sim_a"] = 0.5 * (out["first_a"] + out["second_a"])
            out["sim_b"] = 0.5 * (out["first_b"] + out["second_b"])
        else:
            ga_sim, gb_sim = solve(p.n_hat_ab, p.n_hat_ab)
            out["sim_a"] = ga_sim
            out["sim_b"] = gb_sim
        if k == p.n_steps:
            ga_T, gb_T = solve(0, 0)
            out["T_a"] = ga_T
            out["T_b"] = gb_T
        self._slices[k] = out
        return out

    def drop(self, k: int) -> None:
        self._slices.pop(k, None)


# ----------------------------------------------------------------------
# Epsilon-Nash diagnostic bounds
# ----------------------------------------------------------------------

def epsilon_bounds(params: ModelParams, grid: GridSpec, cache) -> tuple:
    """Deterministic upper bounds on the gain from pre-empting the opponent.

    eps_a bounds how much player a could save by triggering one instant
    before b does (positive part of max(g_sim_a, g_second_a) - g_first_a,
    maximised over every reachable (t, n_a, n_b) node and divided by h);
    eps_b is the mirror image on the gain side.  Requires nearest_integer
    target rounding, under which the reachable deviations are integers and
    the key set is small.
    """
    if params.target_rounding != "nearest_integer":
        raise ValueError("epsilon bounds are defined under nearest_integer rounding")
    p = params
    ks = np.arange(p.n_steps + 1)
    off_a = np.unique(p.target_offset("a", ks * p.delta))
    off_b = np.unique(p.target_offset("b", ks * p.delta))
    xa = np.unique(np.subtract.outer(np.arange(grid.n_max_a + 1, dtype=float), off_a))
    xb = np.unique(np.subtract.outer(np.arange(grid.n_max_b + 1, dtype=float), off_b))
    XA, XB = np.meshgrid(xa, xb, indexing="ij")
    xa_flat, xb_flat = XA.ravel(), XB.ravel()
    ones = np.ones(xa_flat.size, dtype=int)

    ga_af, gb_af = cache.values(xa_flat, xb_flat, p.n_hat * ones, 0 * ones)
    ga_bf, gb_bf = cache.values(xa_flat, xb_flat, 0 * ones, p.n_hat * ones)
    first_a, second_a = ga_af, ga_bf
    first_b, second_b = gb_bf, gb_af
    if p.sim_trigger_mode == "randomized_half":
        sim_a = 0.5 * (first_a + second_a)
        sim_b = 0.5 * (first_b + second_b)
    else:
        sim_a, sim_b = cache.values(xa_flat, xb_flat, p.n_hat_ab * ones, p.n_hat_ab * ones)

    eps_a = float(np.maximum(np.maximum(sim_a, second_a) - first_a, 0.0).max()) / p.h
    eps_b = float(np.maximum(first_b - np.minimum(sim_b, second_b), 0.0).max()) / p.h
    return eps_a, eps_b
