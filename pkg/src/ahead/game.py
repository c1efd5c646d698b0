"""Outer continuous-phase game solved by backward induction.

State per time slice k: the price gap s, each player's accepted order count
n_i and accumulated cost l_i.  One induction step does three things:

1. continuation: expectation over the Gaussian gap move (Gauss-Hermite
   quadrature with linear interpolation in s), the deterministic cash drift
   from the quadratic tracking penalty, and the accepted-order jumps, whose
   intensities are the per-step bang-bang Nash controls (the acceptance
   regions s > 0 / s < 0 are disjoint, so the controls decouple);
2. stop game: a 2x2 trigger-or-wait game per node built from the auction
   sub-game values, solved for pure equilibria with a fixed priority order
   and by the explicit mixed formula when no pure profile survives;
3. assembly: values are the bilinear mix of the four outcomes under the
   trigger probabilities, which covers the pure cases as 0/1 specials.

Value fields are per unit of auction-inclusive time: player a minimises
(costs + auction settlement)/(t + h), player b maximises the mirrored
quantity.  The convention for stop payoffs is G^a = (l_a + g)/(k*delta + h)
and G^b = (-l_b + g)/(k*delta + h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import GridSpec, ModelParams, OuterState
from .subgame import StopValueTables

# Refusal threshold for node_count * time_slices; roughly a minute of work.
# Long profiles must opt in explicitly (node_budget=None).
DEFAULT_NODE_BUDGET = 1.0e9


# ----------------------------------------------------------------------
# Quadrature and interpolation building blocks
# ----------------------------------------------------------------------

def gauss_hermite_weights(points: int):
    """Nodes and weights for E[f(Z)], Z standard normal."""
    x, w = np.polynomial.hermite_e.hermegauss(points)
    return x, w / w.sum()


def quadrature_matrix(params: ModelParams, grid: GridSpec, points: int = 3):
    """Row-stochastic matrix realising one Gaussian gap move on the s-grid.

    Row i holds the interpolation weights of E[next(s_i + sigma*sqrt(delta)*Z)].
    Points leaving the grid take the boundary value; the number of clamped
    (row, quadrature-node) pairs is returned for diagnostics.
    """
    s = grid.s_axis()
    S = s.size
    x, w = gauss_hermite_weights(points)
    Q = np.zeros((S, S))
    clamped = 0
    scale = params.sigma * math.sqrt(params.delta)
    rows = np.arange(S)
    for node, weight in zip(x, w):
        target = s + scale * node
        clamped += int(np.count_nonzero((target < s[0]) | (target > s[-1])))
        i0, w1, _ = _frac_index(s, target)
        np.add.at(Q, (rows, i0), weight * (1.0 - w1))
        np.add.at(Q, (rows, i0 + 1), weight * w1)
    assert np.allclose(Q.sum(axis=1), 1.0)
    return Q, clamped


def _frac_index(axis: np.ndarray, values: np.ndarray):
    """Fractional positions on an increasing axis: (cell, weight, overshoot).

    Handles non-uniform spacing (the gap axis may be sinh-concentrated).
    Values beyond either end take the boundary value (weight collapses onto
    the edge node).  Only upper overshoot is reported; the cash axes start at
    0 and every displacement in this model is nonnegative.
    """
    n = axis.size
    v = np.asarray(values, dtype=float)
    over = v > axis[-1]
    i0 = np.clip(np.searchsorted(axis, v, side="right") - 1, 0, n - 2)
    w = np.clip((v - axis[i0]) / (axis[i0 + 1] - axis[i0]), 0.0, 1.0)
    return i0, w, over


def _shift_count_axis(U: np.ndarray, axis: int) -> np.ndarray:
    """Value at count+1 along the given axis, clamped at the top node."""
    n = U.shape[axis]
    idx = np.minimum(np.arange(1, n + 1), n - 1)
    return np.take(U, idx, axis=axis)


# ----------------------------------------------------------------------
# Scalar reference operations
# ----------------------------------------------------------------------

def _trilinear(values: np.ndarray, grid: GridSpec, s: float, n_a: int,
               n_b: int, l_a: float, l_b: float) -> float:
    """Point lookup on one slice with linear interp in (s, l_a, l_b) and
    clamping everywhere; counts are exact indices (clamped at the top)."""
    na = min(n_a, grid.n_max_a)
    nb = min(n_b, grid.n_max_b)
    si, sw, _ = _frac_index(grid.s_axis(), np.array(s))
    ai, aw, _ = _frac_index(grid.l_axis("a"), np.array(l_a))
    bi, bw, _ = _frac_index(grid.l_axis("b"), np.array(l_b))
    si, ai, bi = int(si), int(ai), int(bi)
    sw, aw, bw = float(sw), float(aw), float(bw)
    out = 0.0
    for ds, ws in ((0, 1.0 - sw), (1, sw)):
        for da, wa in ((0, 1.0 - aw), (1, aw)):
            for db, wb in ((0, 1.0 - bw), (1, bw)):
                out += ws * wa * wb * values[si + ds, na, nb, ai + da, bi + db]
    return out


def _scalar_branch(values: np.ndarray, node: OuterState, branch: str,
                   params: ModelParams, grid: GridSpec, quad_points: int) -> float:
    """Quadrature-smoothed lookup of one jump branch at a single node."""
    p = params
    t = node.k * p.delta
    la = node.l_a + p.q * (p.v_a * t - node.n_a) ** 2 * p.delta
    lb = node.l_b + p.q * (p.v_b * t - node.n_b) ** 2 * p.delta
    na, nb = node.n_a, node.n_b
    if branch == "a":
        na, la = na + 1, la + node.s
    elif branch == "b":
        nb, lb = nb + 1, lb - node.s
    elif branch != "none":
        raise ValueError(f"unknown branch {branch!r}")
    x, w = gauss_hermite_weights(quad_points)
    scale = p.sigma * math.sqrt(p.delta)
    return sum(
        wz * _trilinear(values, grid, node.s + scale * z, na, nb, la, lb)
        for z, wz in zip(x, w)
    )


def step_expectation(next_values: np.ndarray, node: OuterState, lambda_a: float,
                     lambda_b: float, params: ModelParams, grid: GridSpec,
                     quad_points: int = 3) -> float:
    """One-step conditional expectation of a value slice at a single node.

    Combines the Gaussian gap move, the cash drift evaluated at the left
    endpoint, and the accepted-order jumps with probabilities
    lambda_i*delta on the side the market maker accepts (s > 0 for a's buys,
    s < 0 for b's sells, both strict).  Reference implementation; the
    induction uses a vectorised twin checked against this one.
    """
    if params.delta * (lambda_a + lambda_b) >= 1.0:
        raise ValueError("delta*(lambda_a + lambda_b) must be < 1")
    v0 = _scalar_branch(next_values, node, "none", params, grid, quad_points)
    pj_a = lambda_a * params.delta if node.s > 0.0 else 0.0
    pj_b = lambda_b * params.delta if node.s < 0.0 else 0.0
    out = v0
    if pj_a > 0.0:
        out += pj_a * (_scalar_branch(next_values, node, "a", params, grid, quad_points) - v0)
    if pj_b > 0.0:
        out += pj_b * (_scalar_branch(next_values, node, "b", params, grid, quad_points) - v0)
    if not np.isfinite(out):
        raise FloatingPointError(f"non-finite expectation at node {node}")
    return out


def nash_step_intensities(next_a: np.ndarray, next_b: np.ndarray, node: OuterState,
                          params: ModelParams, grid: GridSpec,
                          quad_points: int = 3) -> tuple:
    """Equilibrium intensities for one step.

    Only the player whose orders can be accepted has a live control, so the
    per-step game decouples: that player runs bang-bang on the smoothed value
    change one extra accepted order causes, the other is parked at
    lambda_minus.
    """
    lm = params.lambda_minus
    if node.s > 0.0:
        d = (_scalar_branch(next_a, node, "a", params, grid, quad_points)
             - _scalar_branch(next_a, node, "none", params, grid, quad_points))
        return (params.lambda_plus if d < 0.0 else lm), lm
    if node.s < 0.0:
        d = (_scalar_branch(next_b, node, "b", params, grid, quad_points)
             - _scalar_branch(next_b, node, "none", params, grid, quad_points))
        return lm, (params.lambda_plus if d > 0.0 else lm)
    return lm, lm


# ----------------------------------------------------------------------
# 2x2 stop game
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StopGame2x2:
    """Per-node trigger game; a minimises, b maximises.

    Entries per player: value when he triggers alone (first), when only the
    opponent triggers (second), when both trigger (sim), and the continuation
    expectation (cont).
    """

    first_a: float
    second_a: float
    sim_a: float
    cont_a: float
    first_b: float
    second_b: float
    sim_b: float
    cont_b: float

    def __post_init__(self):
        vals = [self.first_a, self.second_a, self.sim_a, self.cont_a,
                self.first_b, self.second_b, self.sim_b, self.cont_b]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("stop game entries must be finite")


def _mixed_probability(first, second, sim, cont):
    den = -sim + first + second - cont
    if den == 0.0:
        return None
    return (first - cont) / den


def stopping_probabilities(game: StopGame2x2) -> tuple:
    """Trigger probabilities (p_a, p_b) plus diagnostics.

    Pure equilibria are searched first under the priority
    continue/continue > a stops alone > b stops alone > stop/stop (ties kept
    deterministic and trigger-averse).  With no pure profile the mixed
    solution is the explicit closed form p_i = (G_first - C)/(G_first +
    G_second - G_sim - C) per player from his own entries; the standard
    indifference construction (which derives each probability from the
    opponent's entries, i.e. the same two numbers swapped) is reported in
    diagnostics rather than silently substituted.
    """
    g = game
    diagnostics = {"profile": None, "indifference_p_a": None, "indifference_p_b": None}
    if g.cont_a <= g.first_a and g.cont_b >= g.first_b:
        diagnostics["profile"] = "continue_continue"
        return 0.0, 0.0, diagnostics
    if g.first_a <= g.cont_a and g.second_b >= g.sim_b:
        diagnostics["profile"] = "a_stops"
        return 1.0, 0.0, diagnostics
    if g.second_a <= g.sim_a and g.first_b >= g.cont_b:
        diagnostics["profile"] = "b_stops"
        return 0.0, 1.0, diagnostics
    if g.sim_a <= g.second_a and g.sim_b >= g.second_b:
        diagnostics["profile"] = "stop_stop"
        return 1.0, 1.0, diagnostics
    p_a = _mixed_probability(g.first_a, g.second_a, g.sim_a, g.cont_a)
    p_b = _mixed_probability(g.first_b, g.second_b, g.sim_b, g.cont_b)
    if p_a is None or p_b is None:
        raise FloatingPointError(
            "mixed trigger formula hit a zero denominator with no pure "
            f"equilibrium: {game}"
        )
    diagnostics["profile"] = "mixed"
    # Indifference method: a's probability is the one making b indifferent,
    # so the two constructions swap the pair.
    diagnostics["indifference_p_a"] = p_b
    diagnostics["indifference_p_b"] = p_a
    return p_a, p_b, diagnostics


def mix_values(p_a, p_b, sim, first_or_second, second_or_first, cont):
    """Bilinear value mix; pass (first, second) for a and (second, first) for b."""
    return (p_a * p_b * sim
            + p_a * (1.0 - p_b) * first_or_second
            + (1.0 - p_a) * p_b * second_or_first
            + (1.0 - p_a) * (1.0 - p_b) * cont)


# ----------------------------------------------------------------------
# Vectorised induction machinery
# ----------------------------------------------------------------------

class _SliceStepper:
    """Precomputed tables for stepping full (s, n_a, n_b, l_a, l_b) slices."""

    def __init__(self, params: ModelParams, grid: GridSpec, quad_points: int = 3):
        self.params = params
        self.grid = grid
        self.s = grid.s_axis()
        self.la = grid.l_axis("a")
        self.lb = grid.l_axis("b")
        self.Q, self.s_clamped_pairs = quadrature_matrix(params, grid, quad_points)
        self.pos5 = (self.s > 0.0)[:, None, None, None, None]
        self.neg5 = (self.s < 0.0)[:, None, None, None, None]
        self.na = np.arange(grid.n_max_a + 1, dtype=float)
        self.nb = np.arange(grid.n_max_b + 1, dtype=float)
        self._tables_k = None
        self._tables = None

    # -- per-k displacement tables -----------------------------------

    def tables(self, k: int):
        if self._tables_k == k:
            return self._tables
        p = self.params
        t = k * p.delta
        drift_a = p.q * (p.v_a * t - self.na) ** 2 * p.delta
        drift_b = p.q * (p.v_b * t - self.nb) ** 2 * p.delta
        la0 = self.la[None, :] + drift_a[:, None]                    # (NA, LA)
        lb0 = self.lb[None, :] + drift_b[:, None]                    # (NB, LB)
        laj = la0[None, :, :] + self.s[:, None, None]                # (S, NA, LA)
        lbj = lb0[None, :, :] - self.s[:, None, None]                # (S, NB, LB)

        ia0, wa0, oa0 = _frac_index(self.la, la0)
        ib0, wb0, ob0 = _frac_index(self.lb, lb0)
        iaj, waj, oaj = _frac_index(self.la, laj)
        ibj, wbj, obj = _frac_index(self.lb, lbj)

        def eA(x):      # (NA, LA) -> broadcast over (S, NA, NB, LA, LB)
            return x[None, :, None, :, None]

        def eB(x):
            return x[None, None, :, None, :]

        def eSA(x):     # (S, NA, LA)
            return x[:, :, None, :, None]

        def eSB(x):
            return x[:, None, :, None, :]

        self._tables = {
            "a0": (eA(ia0), eA(wa0)),
            "b0": (eB(ib0), eB(wb0)),
            "aj": (eSA(iaj), eSA(waj)),
            "bj": (eSB(ibj), eSB(wbj)),
            # upper-overshoot masks for clamp accounting
            "over_a0": oa0, "over_b0": ob0, "over_aj": oaj, "over_bj": obj,
        }
        self._tables_k = k
        return self._tables

    # -- tensor operations --------------------------------------------

    def smooth(self, U: np.ndarray) -> np.ndarray:
        return np.tensordot(self.Q, U, axes=(1, 0))

    @staticmethod
    def _interp(U, table_a, table_b):
        ia, wa = table_a
        lo = np.take_along_axis(U, ia, axis=3)
        hi = np.take_along_axis(U, ia + 1, axis=3)
        X = lo + wa * (hi - lo)
        ib, wb = table_b
        lo = np.take_along_axis(X, ib, axis=4)
        hi = np.take_along_axis(X, ib + 1, axis=4)
        return lo + wb * (hi - lo)

    def branch_values(self, U: np.ndarray, k: int, branch: str) -> np.ndarray:
        """Interpolated branch lookup of an s-smoothed slice."""
        t = self.tables(k)
        if branch == "none":
            return self._interp(U, t["a0"], t["b0"])
        if branch == "a":
            return self._interp(_shift_count_axis(U, 1), t["aj"], t["b0"])
        if branch == "b":
            return self._interp(_shift_count_axis(U, 2), t["a0"], t["bj"])
        raise ValueError(branch)

    def clamp_counts(self, k: int) -> dict:
        """Lattice lookups clamped at the top of a cash axis this step."""
        t = self.tables(k)
        g = self.grid
        S, NA, NB = self.s.size, g.n_max_a + 1, g.n_max_b + 1
        LA, LB = g.l_nodes_a, g.l_nodes_b
        pos = int(np.count_nonzero(self.s > 0.0))
        neg = int(np.count_nonzero(self.s < 0.0))
        return {
            "l_drift": (int(np.count_nonzero(t["over_a0"])) * S * NB * LB
                        + int(np.count_nonzero(t["over_b0"])) * S * NA * LA),
            "l_jump": (int(np.count_nonzero(t["over_aj"][self.s > 0.0])) * NB * LB
                       + int(np.count_nonzero(t["over_bj"][self.s < 0.0])) * NA * LA),
            "n_top": pos * NB * LA * LB + neg * NA * LA * LB,
        }

    def step(self, U_a_next, U_b_next, k: int, E_next=None, trading: bool = True):
        """Continuation values and bang-bang controls for slice k.

        Optionally advances a duration-style scalar field under the same
        equilibrium intensities (without the trigger-probability factor,
        which the caller applies).  trading=False forces the acceptance
        indicators to zero: no jumps, only the gap move and the cash drift.
        """
        p = self.params
        lm, lp, dlt = p.lambda_minus, p.lambda_plus, p.delta
        Sa = self.smooth(U_a_next)
        Sb = self.smooth(U_b_next)
        v0_a = self.branch_values(Sa, k, "none")
        v0_b = self.branch_values(Sb, k, "none")

        if not trading:
            shape = np.broadcast_shapes(v0_a.shape, self.pos5.shape)
            up = np.zeros(shape, dtype=bool)
            C_e = None
            if E_next is not None:
                C_e = self.branch_values(self.smooth(E_next), k, "none")
            return v0_a, v0_b, up, up.copy(), C_e

        d_a = self.branch_values(Sa, k, "a") - v0_a
        up_a = self.pos5 & (d_a < 0.0)
        pj_a = dlt * np.where(up_a, lp, lm) * self.pos5
        C_a = v0_a + pj_a * d_a
        C_b = v0_b + pj_a * (self.branch_values(Sb, k, "a") - v0_b)
        del d_a

        d_b = self.branch_values(Sb, k, "b") - v0_b
        up_b = self.neg5 & (d_b > 0.0)
        pj_b = dlt * np.where(up_b, lp, lm) * self.neg5
        C_b += pj_b * d_b
        C_a += pj_b * (self.branch_values(Sa, k, "b") - v0_a)
        del d_b, Sa, Sb

        C_e = None
        if E_next is not None:
            Se = self.smooth(E_next)
            v0_e = self.branch_values(Se, k, "none")
            C_e = (v0_e
                   + pj_a * (self.branch_values(Se, k, "a") - v0_e)
                   + pj_b * (self.branch_values(Se, k, "b") - v0_e))
        return C_a, C_b, up_a, up_b, C_e

    def advance_field(self, E_next, k: int, up_a, up_b, trading: bool = True):
        """Expectation of a scalar field under stored intensity policies."""
        p = self.params
        Se = self.smooth(E_next)
        v0 = self.branch_values(Se, k, "none")
        if not trading:
            return v0
        pj_a = p.delta * np.where(up_a, p.lambda_plus, p.lambda_minus) * self.pos5
        pj_b = p.delta * np.where(up_b, p.lambda_plus, p.lambda_minus) * self.neg5
        return (v0
                + pj_a * (self.branch_values(Se, k, "a") - v0)
                + pj_b * (self.branch_values(Se, k, "b") - v0))


# ----------------------------------------------------------------------
# Fields container and the induction itself
# ----------------------------------------------------------------------

@dataclass
class GameFields:
    """Backward-induction output over all time slices.

    Value arrays are float64; trigger probabilities are stored as float32 and
    intensity policies as booleans (True = lambda_plus), which keeps a full
    desk-scale solve in a few hundred MB.  ``U_a``/``U_b`` hold slice 0 always
    and every slice when built with store_values="all".  ``g_slices`` holds
    the per-slice auction-value arrays over (n_a, n_b) used to rebuild stop
    payoffs; entries G^a = (l_a + g)/(k*delta + h), G^b = (-l_b + g)/(..).
    """

    params: ModelParams
    grid: GridSpec
    mode: str
    quad_points: int
    trading: bool = True
    U_a: dict = field(default_factory=dict)
    U_b: dict = field(default_factory=dict)
    p_a: dict = field(default_factory=dict)
    p_b: dict = field(default_factory=dict)
    up_a: dict = field(default_factory=dict)
    up_b: dict = field(default_factory=dict)
    g_slices: dict = field(default_factory=dict)
    duration: "object" = None
    diags: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.params.n_steps

    def policy(self, k: int):
        return self.p_a[k], self.p_b[k], self.up_a[k], self.up_b[k]

    def initial_values(self, s: float = 0.0) -> tuple:
        """U at (s, n=0, l=0, k=0) with linear interpolation in s."""
        i0, w, over = _frac_index(self.grid.s_axis(), np.array(s))
        if bool(over) or s < self.grid.s_axis()[0]:
            raise ValueError(f"s={s} outside the grid")
        ua = self.U_a[0][:, 0, 0, 0, 0]
        ub = self.U_b[0][:, 0, 0, 0, 0]
        i0, w = int(i0), float(w)
        return (ua[i0] + w * (ua[i0 + 1] - ua[i0]),
                ub[i0] + w * (ub[i0 + 1] - ub[i0]))


def _stop_payoff_tensors(g_slice: dict, la: np.ndarray, lb: np.ndarray,
                         k: int, params: ModelParams):
    """Broadcastable stop payoffs from the (n_a, n_b) auction values."""
    denom = k * params.delta + params.h
    la5 = la[None, None, None, :, None]
    lb5 = lb[None, None, None, None, :]

    def ga(name):
        return (la5 + g_slice[name][None, :, :, None, None]) / denom

    def gb(name):
        return (-lb5 + g_slice[name][None, :, :, None, None]) / denom

    return {
        "first_a": ga("first_a"), "second_a": ga("second_a"), "sim_a": ga("sim_a"),
        "first_b": gb("first_b"), "second_b": gb("second_b"), "sim_b": gb("sim_b"),
    }


def _resolve_stop_slice(C_a, C_b, G, mode: str):
    """Vectorised stop-game resolution; returns (U_a, U_b, p_a, p_b, stats).

    Priority for multiple pure equilibria: continue/continue, then a stops
    alone, then b stops alone, then stop/stop.  Mixed nodes use the explicit
    closed form; a zero denominator there is a hard error.
    """
    if mode == "pure":
        # Two-branch rule; meaningful when first == second == sim per player.
        stop_a = C_a > G["first_a"]
        stop_b = C_b < G["first_b"]
        p_a = stop_a.astype(float)
        p_b = stop_b.astype(float)
        mixed_nodes = 0
        swap_dev = 0.0
    else:
        shape = np.broadcast_shapes(C_a.shape, G["first_a"].shape, G["first_b"].shape)

        def full(mask):
            return np.broadcast_to(mask, shape)

        cc = full((C_a <= G["first_a"]) & (C_b >= G["first_b"]))
        sc = full((G["first_a"] <= C_a) & (G["second_b"] >= G["sim_b"])) & ~cc
        cs = full((G["second_a"] <= G["sim_a"]) & (G["first_b"] >= C_b)) & ~(cc | sc)
        ss = (full((G["sim_a"] <= G["second_a"]) & (G["sim_b"] >= G["second_b"]))
              & ~(cc | sc | cs))
        mixed = ~(cc | sc | cs | ss)

        p_a = np.zeros(shape)
        p_b = np.zeros_like(p_a)
        p_a[sc | ss] = 1.0
        p_b[cs | ss] = 1.0

        mixed_nodes = int(np.count_nonzero(mixed))
        swap_dev = 0.0
        if mixed_nodes:
            num_a = G["first_a"] - C_a
            den_a = G["first_a"] + G["second_a"] - G["sim_a"] - C_a
            num_b = G["first_b"] - C_b
            den_b = G["first_b"] + G["second_b"] - G["sim_b"] - C_b
            bad = mixed & ((den_a == 0.0) | (den_b == 0.0))
            if np.any(bad):
                where = np.argwhere(bad)[0]
                raise FloatingPointError(
                    "mixed trigger formula hit a zero denominator with no "
                    f"pure equilibrium at node index {tuple(where)}"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                pa_m = num_a / den_a
                pb_m = num_b / den_b
            p_a = np.where(mixed, np.broadcast_to(pa_m, p_a.shape), p_a)
            p_b = np.where(mixed, np.broadcast_to(pb_m, p_b.shape), p_b)
            # Indifference construction swaps the two numbers; track how far
            # the two readings of Eq-style mixing are apart on mixed nodes.
            swap_dev = float(np.max(np.abs(pa_m - pb_m)[mixed]))

    lo = np.min(p_a.min()), np.min(p_b.min())
    hi = np.max(p_a.max()), np.max(p_b.max())
    if min(lo) < -1e-12 or max(hi) > 1.0 + 1e-12:
        raise FloatingPointError(
            f"trigger probability outside [0,1]: min={min(lo)}, max={max(hi)}"
        )
    p_a = np.clip(p_a, 0.0, 1.0)
    p_b = np.clip(p_b, 0.0, 1.0)

    U_a = mix_values(p_a, p_b, G["sim_a"], G["first_a"], G["second_a"], C_a)
    U_b = mix_values(p_a, p_b, G["sim_b"], G["second_b"], G["first_b"], C_b)

    # Value sandwich: the mix is a convex combination of the four entries.
    lo_a = np.minimum(np.minimum(G["sim_a"], G["first_a"]),
                      np.minimum(G["second_a"], C_a))
    hi_a = np.maximum(np.maximum(G["sim_a"], G["first_a"]),
                      np.maximum(G["second_a"], C_a))
    span = float(np.max(hi_a - lo_a))
    tol = 1e-9 * max(1.0, span)
    if np.any(U_a < lo_a - tol) or np.any(U_a > hi_a + tol):
        raise FloatingPointError("value left the stop-game envelope")

    return U_a, U_b, p_a, p_b, {"mixed_nodes": mixed_nodes, "eq3_swap_dev": swap_dev}


def backward_induction(params: ModelParams, grid: GridSpec, cache,
                       mode: str = "mixed", *, quad_points: int = 3,
                       store_values: str = "k0", store_policies: bool = True,
                       store_g: bool = True, with_duration: bool = False,
                       trading: bool = True,
                       node_budget: float | None = DEFAULT_NODE_BUDGET,
                       progress=None) -> GameFields:
    """Solve the outer game on the full grid.

    mode="pure" implements the two-branch trigger rule and requires zero
    commitments (the stop payoffs then cannot depend on who triggered);
    mode="mixed" is the general bilinear rule.  store_values: "k0" keeps the
    value arrays at the initial slice only, "all" keeps every slice.  With
    with_duration=True the expected remaining continuous-phase duration is
    advanced inside the same sweep (mandatory at scales where policies are
    not stored).  trading=False turns the market-maker acceptance off, which
    is the periodic-auction baseline.  node_budget guards against
    accidentally huge grids; pass None to run regardless.
    """
    if mode not in ("pure", "mixed"):
        raise ValueError(f"mode must be 'pure' or 'mixed', got {mode!r}")
    if mode == "pure":
        if params.n_hat != 0 or (params.sim_trigger_mode == "fixed" and params.n_hat_ab != 0):
            raise ValueError("pure mode requires zero trigger commitments")
    if store_values not in ("k0", "all"):
        raise ValueError("store_values must be 'k0' or 'all'")
    grid.validate(params)

    K = params.n_steps
    S = grid.s_nodes
    NA, NB = grid.n_max_a + 1, grid.n_max_b + 1
    LA, LB = grid.l_nodes_a, grid.l_nodes_b
    work = float(S * NA * NB * LA * LB) * (K + 1)
    if node_budget is not None and work > node_budget:
        raise ValueError(
            f"grid budget exceeded: {work:.2e} node-slices requested, budget "
            f"{node_budget:.2e}; pass node_budget=None to run anyway"
        )

    stepper = _SliceStepper(params, grid, quad_points)
    tables = StopValueTables(params, grid, cache)
    la = grid.l_axis("a")
    lb = grid.l_axis("b")
    fields = GameFields(params=params, grid=grid, mode=mode,
                        quad_points=quad_points, trading=trading)
    diags = {"l_drift_clamped": 0, "l_jump_clamped": 0, "n_top_lookups": 0,
             "mixed_nodes": 0, "eq3_swap_dev": 0.0,
             "s_clamped_pairs": stepper.s_clamped_pairs}

    # Terminal slice: forced auction with no commitments.
    gT = tables.slice(K)
    denom = params.T + params.h
    U_a = (la[None, None, None, :, None]
           + gT["T_a"][None, :, :, None, None]
           + np.zeros((S, 1, 1, 1, LB))) / denom
    U_b = (-lb[None, None, None, None, :]
           + gT["T_b"][None, :, :, None, None]
           + np.zeros((S, 1, 1, LA, 1))) / denom
    U_a = np.ascontiguousarray(np.broadcast_to(U_a, (S, NA, NB, LA, LB)))
    U_b = np.ascontiguousarray(np.broadcast_to(U_b, (S, NA, NB, LA, LB)))
    E = np.zeros((S, NA, NB, LA, LB)) if with_duration else None

    ones32 = np.ones((S, NA, NB, LA, LB), dtype=np.float32)
    if store_policies:
        fields.p_a[K] = ones32
        fields.p_b[K] = ones32.copy()
        false_pol = np.zeros((S, NA, NB, LA, LB), dtype=bool)
        fields.up_a[K] = false_pol
        fields.up_b[K] = false_pol.copy()
    if store_g:
        fields.g_slices[K] = gT
    else:
        tables.drop(K)
    if store_values == "all":
        fields.U_a[K] = U_a.copy()
        fields.U_b[K] = U_b.copy()
        if with_duration:
            fields.diags.setdefault("E_slices", {})[K] = E.copy()

    for k in range(K - 1, -1, -1):
        C_a, C_b, up_a, up_b, C_e = stepper.step(U_a, U_b, k, E, trading=trading)
        if not (np.all(np.isfinite(C_a)) and np.all(np.isfinite(C_b))):
            raise FloatingPointError(f"non-finite continuation at slice {k}")
        g_slice = tables.slice(k)
        G = _stop_payoff_tensors(g_slice, la, lb, k, params)
        U_a, U_b, p_a, p_b, stats = _resolve_stop_slice(C_a, C_b, G, mode)
        if with_duration:
            E = (1.0 - p_a) * (1.0 - p_b) * (C_e + params.delta)
            upper = params.T - k * params.delta
            if E.min() < -1e-9 or E.max() > upper + 1e-6:
                raise FloatingPointError(
                    f"duration invariant violated at slice {k}: "
                    f"range [{E.min():.3e}, {E.max():.3e}], cap {upper}"
                )
            # quadrature rows are stochastic only to rounding, so constant
            # fields drift by ulps; pin the hard bounds of the recursion
            np.clip(E, 0.0, upper, out=E)

        cc = stepper.clamp_counts(k)
        diags["l_drift_clamped"] += cc["l_drift"]
        diags["l_jump_clamped"] += cc["l_jump"]
        diags["n_top_lookups"] += cc["n_top"]
        diags["mixed_nodes"] += stats["mixed_nodes"]
        diags["eq3_swap_dev"] = max(diags["eq3_swap_dev"], stats["eq3_swap_dev"])

        if store_policies:
            fields.p_a[k] = p_a.astype(np.float32)
            fields.p_b[k] = p_b.astype(np.float32)
            fields.up_a[k] = up_a
            fields.up_b[k] = up_b
        if store_g:
            fields.g_slices[k] = g_slice
        else:
            tables.drop(k)
        if store_values == "all" or k == 0:
            fields.U_a[k] = U_a
            fields.U_b[k] = U_b
            if with_duration and store_values == "all":
                fields.diags.setdefault("E_slices", {})[k] = E.copy()
        if progress is not None:
            progress(k)

    fields.diags.update(diags)
    if with_duration:
        from .duration import DurationField
        fields.duration = DurationField(params=params, grid=grid, E={0: E})
    return fields
