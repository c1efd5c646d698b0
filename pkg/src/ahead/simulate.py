"""Forward Monte Carlo under solved (or perturbed) policies.

The simulator replays the game the induction priced: uniforms against the
stored trigger probabilities at every grid time, order arrivals with
probability lambda*delta on the correct side of the gap, penalty accrued by
the left-point rule, and on trigger an exact exponential-clock simulation of
the auction window under the sub-game bang-bang policies.  Matching the
induction's own time discretisation in the continuous phase is deliberate:
the comparison then tests the equilibrium, not scheme differences.

Determinism contract: every path owns the substream derived from
(seed, path index), consumes draws at fixed offsets, and aggregation runs in
path order, so results are bit-identical for any worker count or chunk size.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .params import GridSpec, ModelParams, terminal_auction_payoff
from .subgame import (
    _QUANTUM,
    SubgameKey,
    dequantize,
    solve_subgame,
    wrapper_commitments,
)

TRIGGER_PATTERNS = ("a", "b", "both", "at_T")

# per outer step: stop_a, stop_b, gaussian, arrival_a, arrival_b
_DRAWS_PER_STEP = 5


def _auction_section_size(grid: GridSpec) -> int:
    # one exponential pair per event; events are capped by the censored
    # counts plus one closing round per player
    return 2 * (2 * grid.m_max + 2)


def _draws_per_path(params: ModelParams, grid: GridSpec) -> int:
    return _DRAWS_PER_STEP * params.n_steps + 1 + _auction_section_size(grid)


def _path_draws(seed: int, path_ids: np.ndarray, n_draws: int) -> np.ndarray:
    """(len(ids), n_draws) uniforms; row i depends only on (seed, ids[i])."""
    out = np.empty((len(path_ids), n_draws))
    for row, pid in enumerate(path_ids):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(pid),))
        out[row] = np.random.Generator(np.random.Philox(ss)).random(n_draws)
    return out


# ----------------------------------------------------------------------
# Policy lookups (nearest node, deviations applied lazily)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyDeviation:
    """One unilateral policy edit, applied at lookup time.

    kinds:
      identity            -- no change (control row in reports)
      never_trigger       -- the player's stop probability forced to 0
      always_trigger      -- forced to 1
      shift_trigger_s     -- stop probability read `amount` gap nodes away
      flip_intensity_band -- intensity flag inverted on gap nodes
                             [band_lo, band_hi] (inclusive node indexes)
      hold_intensity_low  -- intensity pinned at lambda_minus everywhere
      hold_intensity_high -- pinned at lambda_plus
    """

    name: str
    player: str
    kind: str
    amount: int = 0
    band_lo: int = 0
    band_hi: int = 0

    def __post_init__(self):
        if self.player not in ("a", "b"):
            raise ValueError(f"player must be 'a' or 'b', got {self.player!r}")
        kinds = ("identity", "never_trigger", "always_trigger",
                 "shift_trigger_s", "flip_intensity_band",
                 "hold_intensity_low", "hold_intensity_high")
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {kinds}, got {self.kind!r}")


def _nearest_index(axis: np.ndarray, values: np.ndarray):
    """Nearest-node indexes plus the count of off-axis states clamped.

    Works on non-uniform axes (the gap axis may be sinh-concentrated), so
    nearest is decided per cell rather than by a global pitch.
    """
    n = len(axis)
    i0 = np.clip(np.searchsorted(axis, values, side="right") - 1, 0, n - 2)
    idx = i0 + (values - axis[i0] > axis[i0 + 1] - values)
    off = int(np.count_nonzero((values < axis[0]) | (values > axis[-1])))
    return idx, off


class _PolicyView:
    """Gathers p/up at path states, with one deviation optionally applied."""

    def __init__(self, fields, deviation: PolicyDeviation | None = None):
        self.fields = fields
        self.dev = deviation
        self.grid = fields.grid

    def _shifted(self, is_, player):
        dev = self.dev
        if dev is not None and dev.player == player and dev.kind == "shift_trigger_s":
            return np.clip(is_ + dev.amount, 0, self.grid.s_nodes - 1)
        return is_

    def stop_probability(self, player, k, is_, ina, inb, ila, ilb):
        table = (self.fields.p_a if player == "a" else self.fields.p_b)[k]
        dev = self.dev
        if dev is not None and dev.player == player:
            if dev.kind == "never_trigger":
                return np.zeros(len(is_))
            if dev.kind == "always_trigger":
                return np.ones(len(is_))
        is_ = self._shifted(is_, player)
        return table[is_, ina, inb, ila, ilb].astype(float)

    def intensity(self, player, k, is_, ina, inb, ila, ilb, params):
        up = (self.fields.up_a if player == "a" else self.fields.up_b)[k]
        flags = up[is_, ina, inb, ila, ilb]
        dev = self.dev
        if dev is not None and dev.player == player:
            if dev.kind == "hold_intensity_low":
                flags = np.zeros_like(flags)
            elif dev.kind == "hold_intensity_high":
                flags = np.ones_like(flags)
            elif dev.kind == "flip_intensity_band":
                band = (is_ >= dev.band_lo) & (is_ <= dev.band_hi)
                flags = flags ^ band
        return np.where(flags, params.lambda_plus, params.lambda_minus)


# ----------------------------------------------------------------------
# Result containers
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PathSample:
    """One simulated trajectory, kept only for explicitly collected paths.

    Counts are the settlement state: they clamp at the grid's count cap, so
    they can fall short of the trade list length on extreme paths (the clamp
    is also tallied in MCStats incidents).
    """

    path_id: int
    seed: int
    gap_path: np.ndarray            # s at grid times 0..tau (inclusive)
    trades: tuple                   # (t, side, s, n_a, n_b, l_a, l_b) accepted
    trigger_time: float
    trigger_pattern: str            # a | b | both | at_T
    tie_break: str                  # "" | a_first | b_first | shared
    n_a: int
    n_b: int
    l_a: float
    l_b: float
    m_a: int
    m_b: int
    payoff_a: float
    payoff_b: float
    duration: float

    def __post_init__(self):
        if self.trigger_time < 0.0 or self.trigger_time != self.duration:
            raise ValueError("trigger time must be >= 0 and equal duration")
        if self.trigger_pattern not in TRIGGER_PATTERNS:
            raise ValueError(f"bad trigger pattern {self.trigger_pattern!r}")
        if not (np.isfinite(self.payoff_a) and np.isfinite(self.payoff_b)):
            raise ValueError("non-finite realized payoff")
        for side, n in (("a", self.n_a), ("b", self.n_b)):
            listed = sum(1 for tr in self.trades if tr[1] == side)
            if n > listed:
                raise ValueError(
                    f"count mismatch for {side}: state {n}, trades {listed}")


@dataclass(frozen=True)
class MCStats:
    """Aggregates over all paths; standard errors are sample std / sqrt(M)."""

    paths: int
    mean_payoff_a: float
    se_payoff_a: float
    mean_payoff_b: float
    se_payoff_b: float
    mean_duration: float
    se_duration: float
    trigger_counts: dict
    incidents: dict
    samples: tuple = ()

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one path")


def _stats_of(values: np.ndarray):
    m = float(np.mean(values))
    if len(values) > 1:
        se = float(np.std(values, ddof=1) / np.sqrt(len(values)))
    else:
        se = 0.0
    return m, se


# ----------------------------------------------------------------------
# Phase 1: outer phase, chunked over paths
# ----------------------------------------------------------------------

def _run_outer_chunk(fields, params, grid, seed, path_ids, view, collect_ids):
    """Steps one chunk of paths to their trigger; returns state at trigger."""
    K = params.n_steps
    n_draws = _draws_per_path(params, grid)
    draws = _path_draws(seed, path_ids, n_draws)
    P = len(path_ids)

    s = np.full(P, params.p_minus_pstar0)
    n_a = np.zeros(P, dtype=np.intp)
    n_b = np.zeros(P, dtype=np.intp)
    l_a = np.zeros(P)
    l_b = np.zeros(P)
    alive = np.ones(P, dtype=bool)

    tau_idx = np.full(P, K, dtype=np.intp)
    pattern = np.full(P, 3, dtype=np.int8)        # 0=a 1=b 2=both 3=at_T
    out_na = np.zeros(P, dtype=np.intp)
    out_nb = np.zeros(P, dtype=np.intp)
    out_la = np.zeros(P)
    out_lb = np.zeros(P)
    incidents = {"policy_offgrid_s": 0, "policy_offgrid_l": 0,
                 "count_top_clamped": 0}

    s_axis = grid.s_axis()
    la_axis = grid.l_axis("a")
    lb_axis = grid.l_axis("b")
    sq_vol = params.sigma * np.sqrt(params.delta)
    collect = {int(pid): {"gap": [], "trades": []}
               for pid in path_ids if int(pid) in collect_ids}

    def record_gap(mask):
        if collect:
            for row, pid in enumerate(path_ids):
                if int(pid) in collect and mask[row]:
                    collect[int(pid)]["gap"].append(float(s[row]))

    trading = getattr(fields, "trading", True)

    for k in range(K):
        if not alive.any():
            break
        record_gap(alive)
        live = np.nonzero(alive)[0]
        base = _DRAWS_PER_STEP * k

        is_, off_s = _nearest_index(s_axis, s[live])
        ila, off_a = _nearest_index(la_axis, l_a[live])
        ilb, off_b = _nearest_index(lb_axis, l_b[live])
        incidents["policy_offgrid_s"] += off_s
        incidents["policy_offgrid_l"] += off_a + off_b
        ina, inb = n_a[live], n_b[live]

        p_a = view.stop_probability("a", k, is_, ina, inb, ila, ilb)
        p_b = view.stop_probability("b", k, is_, ina, inb, ila, ilb)
        stop_a = draws[live, base + 0] < p_a
        stop_b = draws[live, base + 1] < p_b
        stopped = stop_a | stop_b
        if stopped.any():
            rows = live[stopped]
            tau_idx[rows] = k
            pattern[rows] = np.where(stop_a[stopped] & stop_b[stopped], 2,
                                     np.where(stop_a[stopped], 0, 1))
            out_na[rows], out_nb[rows] = n_a[rows], n_b[rows]
            out_la[rows], out_lb[rows] = l_a[rows], l_b[rows]
            alive[rows] = False
            live = live[~stopped]
            if live.size == 0:
                continue
            keep = ~stopped
            is_, ila, ilb = is_[keep], ila[keep], ilb[keep]
            ina, inb = ina[keep], inb[keep]

        # left-point penalty with the counts before this step's arrivals
        t = k * params.delta
        l_a[live] += params.q * (params.v_a * t - n_a[live]) ** 2 * params.delta
        l_b[live] += params.q * (params.v_b * t - n_b[live]) ** 2 * params.delta

        if trading:
            lam_a = view.intensity("a", k, is_, ina, inb, ila, ilb, params)
            lam_b = view.intensity("b", k, is_, ina, inb, ila, ilb, params)
            acc_a = (draws[live, base + 3] < lam_a * params.delta) & (s[live] > 0.0)
            acc_b = (draws[live, base + 4] < lam_b * params.delta) & (s[live] < 0.0)
            for side, acc in (("a", acc_a), ("b", acc_b)):
                if not acc.any():
                    continue
                rows = live[acc]
                if side == "a":
                    l_a[rows] += s[rows]
                    cap = grid.n_max_a
                    clamped = n_a[rows] >= cap
                    n_a[rows] = np.minimum(n_a[rows] + 1, cap)
                else:
                    l_b[rows] -= s[rows]
                    cap = grid.n_max_b
                    clamped = n_b[rows] >= cap
                    n_b[rows] = np.minimum(n_b[rows] + 1, cap)
                incidents["count_top_clamped"] += int(np.count_nonzero(clamped))
                for r in rows:
                    if int(path_ids[r]) in collect:
                        collect[int(path_ids[r])]["trades"].append(
                            (t, side, float(s[r]), int(n_a[r]), int(n_b[r]),
                             float(l_a[r]), float(l_b[r])))

        z = ndtri(np.clip(draws[live, base + 2], 1e-300, None))
        s[live] += sq_vol * z

    # survivors reach the forced horizon auction
    if alive.any():
        record_gap(alive)
        rows = np.nonzero(alive)[0]
        out_na[rows], out_nb[rows] = n_a[rows], n_b[rows]
        out_la[rows], out_lb[rows] = l_a[rows], l_b[rows]

    tie = draws[:, _DRAWS_PER_STEP * K]
    return {
        "path_ids": path_ids, "tau_idx": tau_idx, "pattern": pattern,
        "n_a": out_na, "n_b": out_nb, "l_a": out_la, "l_b": out_lb,
        "tie": tie, "incidents": incidents, "collect": collect,
    }


# ----------------------------------------------------------------------
# Phase 2: auction window, grouped by sub-game key
# ----------------------------------------------------------------------

def _auction_clocks(table, params, grid, draws, cursors):
    """Exact event times for competing inhomogeneous Poisson clocks.

    ``draws`` holds each path's reserved exponential section; ``cursors``
    are advanced in place.  Returns realized (m_a, m_b, censored_events).
    """
    P = draws.shape[0]
    dt = grid.auction_dt(params)
    steps = grid.auction_steps(params)
    rate_a = np.where(table.up_a, table.lambda_plus, table.lambda_minus)
    rate_b = np.where(table.up_b, table.lambda_plus, table.lambda_minus)
    cum_a = np.concatenate([np.zeros((1,) + rate_a.shape[1:]),
                            np.cumsum(rate_a * dt, axis=0)])
    cum_b = np.concatenate([np.zeros((1,) + rate_b.shape[1:]),
                            np.cumsum(rate_b * dt, axis=0)])

    t = np.zeros(P)
    m_a = np.zeros(P, dtype=np.intp)
    m_b = np.zeros(P, dtype=np.intp)
    clock_a = np.ones(P, dtype=bool)
    clock_b = np.ones(P, dtype=bool)
    active = np.ones(P, dtype=bool)
    censored = 0

    def hazard_now(cum, rate, rows):
        j = np.minimum((t[rows] / dt).astype(np.intp), steps - 1)
        base = cum[j, m_a[rows], m_b[rows]]
        part = rate[j, m_a[rows], m_b[rows]] * (t[rows] - j * dt)
        return base + part

    def arrival_time(cum, rate, rows, target):
        # first grid hazard >= target, then invert inside that interval
        H = cum[:, m_a[rows], m_b[rows]]                    # (steps+1, R)
        j = (H < target[None, :]).sum(axis=0)               # in 1..steps+1
        out = np.full(len(rows), np.inf)
        hit = j <= steps
        if hit.any():
            jj = j[hit]
            r = rate[jj - 1, m_a[rows][hit], m_b[rows][hit]]
            prev = cum[jj - 1, m_a[rows][hit], m_b[rows][hit]]
            out[hit] = (jj - 1) * dt + (target[hit] - prev) / r
        return out

    while active.any():
        rows = np.nonzero(active)[0]
        c = cursors[rows]
        if np.any(c + 2 > draws.shape[1]):
            raise RuntimeError("auction draw section exhausted")
        with np.errstate(divide="ignore"):
            e_a = -np.log(draws[rows, c])
            e_b = -np.log(draws[rows, c + 1])
        cursors[rows] += 2

        t_a = np.full(len(rows), np.inf)
        t_b = np.full(len(rows), np.inf)
        on_a = clock_a[rows]
        on_b = clock_b[rows]
        if on_a.any():
            sub = rows[on_a]
            target = hazard_now(cum_a, rate_a, sub) + e_a[on_a]
            t_a[on_a] = arrival_time(cum_a, rate_a, sub, target)
        if on_b.any():
            sub = rows[on_b]
            target = hazard_now(cum_b, rate_b, sub) + e_b[on_b]
            t_b[on_b] = arrival_time(cum_b, rate_b, sub, target)

        t_next = np.minimum(t_a, t_b)
        done = t_next >= params.h
        if done.any():
            active[rows[done]] = False
        fire = ~done
        if fire.any():
            frows = rows[fire]
            a_wins = t_a[fire] <= t_b[fire]
            t[frows] = t_next[fire]
            win_a = frows[a_wins]
            if win_a.size:
                room = m_a[win_a] < grid.m_max
                m_a[win_a[room]] += 1
                censored += int(np.count_nonzero(~room))
                clock_a[win_a[~room]] = False
            win_b = frows[~a_wins]
            if win_b.size:
                room = m_b[win_b] < grid.m_max
                m_b[win_b[room]] += 1
                censored += int(np.count_nonzero(~room))
                clock_b[win_b[~room]] = False
        both_off = ~(clock_a | clock_b)
        if both_off.any():
            active &= ~both_off

    return m_a, m_b, censored


def simulate_auction(table, params: ModelParams, grid: GridSpec,
                     M: int, seed: int):
    """Realized auction payoffs for one solved sub-game, started at (0, 0).

    Returns (payoff_a, payoff_b, m_a, m_b) arrays of length M.  The mean of
    payoff_a estimates the table's own g_a; used as the solver cross-check.
    """
    if M < 1:
        raise ValueError("need M >= 1")
    size = _auction_section_size(grid)
    draws = _path_draws(seed, np.arange(M), size)
    cursors = np.zeros(M, dtype=np.intp)
    m_a, m_b, _ = _auction_clocks(table, params, grid, draws, cursors)
    key = table.key
    pay_a, pay_b = terminal_auction_payoff(
        key.x_a, key.x_b, m_a.astype(float), m_b.astype(float),
        key.np_a, key.np_b, params)
    return pay_a, pay_b, m_a, m_b


def _pattern_commitments(pat: int, tie: float, params: ModelParams):
    """Commitments and tie label for one trigger pattern code."""
    if pat == 0:
        return wrapper_commitments("first", "a", params), ""
    if pat == 1:
        return wrapper_commitments("first", "b", params), ""
    if pat == 3:
        return wrapper_commitments("at_T", "a", params), ""
    if params.sim_trigger_mode == "fixed":
        return wrapper_commitments("sim", "a", params), "shared"
    if tie < 0.5:
        return wrapper_commitments("first", "a", params), "a_first"
    return wrapper_commitments("first", "b", params), "b_first"


def _settle_auctions(chunks, params, grid, seed, table_memo=None,
                     group_chunk=8192):
    """Groups triggered paths by sub-game key and simulates each group.

    ``table_memo`` caches solved tables across calls (deviation runs hit the
    same keys repeatedly).  Groups are processed in bounded sub-chunks so the
    regenerated draw matrices stay small even when one key dominates.
    """
    ids = np.concatenate([c["path_ids"] for c in chunks])
    order = np.argsort(ids)
    ids = ids[order]

    def gather(name):
        return np.concatenate([c[name] for c in chunks])[order]

    tau_idx = gather("tau_idx")
    pattern = gather("pattern")
    n_a, n_b = gather("n_a"), gather("n_b")
    l_a, l_b = gather("l_a"), gather("l_b")
    tie = gather("tie")

    M = len(ids)
    tau = tau_idx * params.delta
    np_a = np.zeros(M, dtype=np.int64)
    np_b = np.zeros(M, dtype=np.int64)
    ties = np.empty(M, dtype=object)
    for i in range(M):
        (ca, cb), label = _pattern_commitments(int(pattern[i]), tie[i], params)
        np_a[i], np_b[i], ties[i] = ca, cb, label

    x_a = n_a - params.target_offset("a", tau)
    x_b = n_b - params.target_offset("b", tau)
    qx_a = np.round(x_a / _QUANTUM).astype(np.int64)
    qx_b = np.round(x_b / _QUANTUM).astype(np.int64)

    qkeys = np.stack([qx_a, qx_b, np_a, np_b], axis=1)
    uniq, inverse = np.unique(qkeys, axis=0, return_inverse=True)

    if table_memo is None:
        table_memo = {}
    n_draws = _draws_per_path(params, grid)
    auction_start = _DRAWS_PER_STEP * params.n_steps + 1
    m_a = np.zeros(M, dtype=np.intp)
    m_b = np.zeros(M, dtype=np.intp)
    censored = 0
    for gid, qkey in enumerate(uniq):
        members = np.nonzero(inverse == gid)[0]
        memo_key = tuple(int(v) for v in qkey)
        table = table_memo.get(memo_key)
        if table is None:
            # canonical value per quantized key, matching the cache layer
            key = SubgameKey(x_a=dequantize(memo_key[0]),
                             x_b=dequantize(memo_key[1]),
                             np_a=memo_key[2], np_b=memo_key[3])
            table = solve_subgame(key, params, grid)
            table_memo[memo_key] = table
        for lo in range(0, len(members), group_chunk):
            part = members[lo:lo + group_chunk]
            draws = _path_draws(seed, ids[part], n_draws)[:, auction_start:]
            cursors = np.zeros(len(part), dtype=np.intp)
            gm_a, gm_b, cens = _auction_clocks(table, params, grid,
                                               draws, cursors)
            m_a[part], m_b[part] = gm_a, gm_b
            censored += cens

    # settlement uses the canonical dequantized deviations, exactly the
    # values the induction priced through the cache
    raw_a, raw_b = terminal_auction_payoff(
        qx_a * _QUANTUM, qx_b * _QUANTUM, m_a.astype(float),
        m_b.astype(float), np_a.astype(float), np_b.astype(float), params)
    denom = tau + params.h
    payoff_a = (l_a + raw_a) / denom
    payoff_b = (-l_b + raw_b) / denom
    return {
        "ids": ids, "tau": tau, "pattern": pattern, "tie_label": ties,
        "n_a": n_a, "n_b": n_b, "l_a": l_a, "l_b": l_b,
        "m_a": m_a, "m_b": m_b,
        "payoff_a": payoff_a, "payoff_b": payoff_b,
        "auction_censored": censored,
    }


# ----------------------------------------------------------------------
# Public entry points
# ----------------------------------------------------------------------

def _check_fields(fields, params: ModelParams):
    if fields.params.fingerprint() != params.fingerprint():
        raise ValueError("fields were solved under different parameters")
    missing = [k for k in range(params.n_steps + 1)
               if k not in fields.p_a or k not in fields.up_a]
    if missing:
        raise ValueError(
            f"fields do not cover the grid: policy slices missing for "
            f"k={missing[:4]}{'...' if len(missing) > 4 else ''}; "
            f"re-solve with store_policies=True")


def _simulate_paths(fields, params, grid, M, seed, *, workers=1,
                    chunk_size=4096, deviation=None, collect=0,
                    table_memo=None):
    """Core engine: per-path payoff arrays plus incident counters."""
    view = _PolicyView(fields, deviation)
    collect_ids = set(range(min(collect, M)))
    chunk_ids = [np.arange(lo, min(lo + chunk_size, M))
                 for lo in range(0, M, chunk_size)]

    def run(ids):
        return _run_outer_chunk(fields, params, grid, seed, ids, view,
                                collect_ids)

    if workers > 1 and len(chunk_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, chunk_ids))
    else:
        chunks = [run(ids) for ids in chunk_ids]

    settled = _settle_auctions(chunks, params, grid, seed,
                               table_memo=table_memo)

    incidents = {"policy_offgrid_s": 0, "policy_offgrid_l": 0,
                 "count_top_clamped": 0}
    for c in chunks:
        for k in incidents:
            incidents[k] += c["incidents"][k]
    incidents["auction_censored"] = settled["auction_censored"]

    samples = []
    if collect_ids:
        logs = {}
        for c in chunks:
            logs.update(c["collect"])
        ids = settled["ids"]
        pat_names = {0: "a", 1: "b", 2: "both", 3: "at_T"}
        for pid in sorted(collect_ids):
            i = int(np.searchsorted(ids, pid))
            log = logs[pid]
            n_sa, n_sb = int(settled["n_a"][i]), int(settled["n_b"][i])
            trades = tuple(log["trades"])
            for side, n, cap in (("a", n_sa, grid.n_max_a),
                                 ("b", n_sb, grid.n_max_b)):
                listed = sum(1 for tr in trades if tr[1] == side)
                assert n == min(listed, cap), \
                    f"path {pid}: {side}-count {n} vs {listed} trades"
            samples.append(PathSample(
                path_id=pid, seed=seed,
                gap_path=np.asarray(log["gap"]),
                trades=trades,
                trigger_time=float(settled["tau"][i]),
                trigger_pattern=pat_names[int(settled["pattern"][i])],
                tie_break=settled["tie_label"][i],
                n_a=n_sa, n_b=n_sb,
                l_a=float(settled["l_a"][i]), l_b=float(settled["l_b"][i]),
                m_a=int(settled["m_a"][i]), m_b=int(settled["m_b"][i]),
                payoff_a=float(settled["payoff_a"][i]),
                payoff_b=float(settled["payoff_b"][i]),
                duration=float(settled["tau"][i]),
            ))

    return settled, incidents, tuple(samples)


def simulate(fields, cache, params: ModelParams, M: int, seed: int, *,
             workers: int = 1, chunk_size: int = 4096,
             deviation: PolicyDeviation | None = None,
             collect: int = 0) -> MCStats:
    """Monte Carlo estimate of the initial values under the stored policies.

    The cache argument keeps the call signature aligned with the solver APIs;
    auction tables are re-solved per triggered key (values alone are not
    enough, the window simulation needs the policies).
    """
    if M < 1:
        raise ValueError("need M >= 1")
    grid = fields.grid
    _check_fields(fields, params)

    settled, incidents, samples = _simulate_paths(
        fields, params, grid, M, seed, workers=workers,
        chunk_size=chunk_size, deviation=deviation, collect=collect)

    off = incidents["policy_offgrid_s"] + incidents["policy_offgrid_l"]
    if off:
        warnings.warn(f"{off} policy lookups clamped to the nearest grid "
                      f"node; widen the grid if this grows", UserWarning)

    mean_a, se_a = _stats_of(settled["payoff_a"])
    mean_b, se_b = _stats_of(settled["payoff_b"])
    mean_d, se_d = _stats_of(settled["tau"])
    pat_names = {0: "a", 1: "b", 2: "both", 3: "at_T"}
    counts = {name: int(np.count_nonzero(settled["pattern"] == code))
              for code, name in pat_names.items()}

    return MCStats(
        paths=M,
        mean_payoff_a=mean_a, se_payoff_a=se_a,
        mean_payoff_b=mean_b, se_payoff_b=se_b,
        mean_duration=mean_d, se_duration=se_d,
        trigger_counts=counts, incidents=incidents, samples=samples,
    )


@dataclass(frozen=True)
class DeviationRow:
    name: str
    player: str
    mean_equilibrium: float
    mean_deviation: float
    improvement: float        # positive = the deviation helps the deviator
    se_delta: float
    epsilon: float
    flagged: bool


def deviation_test(fields, deviations, cache, params: ModelParams,
                   M: int, seed: int, *, eps=None, workers: int = 1,
                   chunk_size: int = 4096) -> tuple:
    """Simulates unilateral deviations with common random numbers.

    Every deviation reuses the equilibrium run's substreams, so the payoff
    delta is estimated path by path and its standard error reflects only the
    genuine policy difference.  Rows flag improvements beyond
    epsilon + 3 standard errors.
    """
    deviations = tuple(deviations)
    if not deviations:
        return ()
    grid = fields.grid
    _check_fields(fields, params)
    if eps is None:
        if params.target_rounding == "nearest_integer":
            from .subgame import epsilon_bounds
            eps = epsilon_bounds(params, grid, cache)
        else:
            eps = (0.0, 0.0)

    table_memo: dict = {}
    base, _, _ = _simulate_paths(fields, params, grid, M, seed,
                                 workers=workers, chunk_size=chunk_size,
                                 table_memo=table_memo)
    rows = []
    for dev in deviations:
        run, _, _ = _simulate_paths(fields, params, grid, M, seed,
                                    workers=workers, chunk_size=chunk_size,
                                    deviation=dev, table_memo=table_memo)
        if dev.player == "a":
            # a minimises cost: improvement = equilibrium minus deviation
            delta = base["payoff_a"] - run["payoff_a"]
            eq_mean = float(np.mean(base["payoff_a"]))
            dev_mean = float(np.mean(run["payoff_a"]))
            eps_i = eps[0]
        else:
            delta = run["payoff_b"] - base["payoff_b"]
            eq_mean = float(np.mean(base["payoff_b"]))
            dev_mean = float(np.mean(run["payoff_b"]))
            eps_i = eps[1]
        imp, se = _stats_of(delta)
        rows.append(DeviationRow(
            name=dev.name, player=dev.player,
            mean_equilibrium=eq_mean, mean_deviation=dev_mean,
            improvement=imp, se_delta=se, epsilon=float(eps_i),
            flagged=bool(imp > eps_i + 3.0 * se),
        ))
    return tuple(rows)


# ----------------------------------------------------------------------
# Path-log export
# ----------------------------------------------------------------------

def write_path_log(samples, fileobj, h: float):
    """One CSV record per event for the collected paths.

    Rows are ordered within a path: accepted trades (state after the trade),
    the trigger at tau with the frozen outer state, and auction_end at
    tau + h.  Forced horizon auctions reuse the trigger_both tag; they are
    recognisable by their timestamp at the horizon.
    """
    fileobj.write("path_id,t,event,s,n_a,n_b,l_a,l_b\n")

    def row(t, event, s, na, nb, la, lb, pid):
        fileobj.write(f"{pid},{t:.10g},{event},{s:.10g},"
                      f"{na},{nb},{la:.10g},{lb:.10g}\n")

    for sm in samples:
        for (t, side, s, na, nb, la, lb) in sm.trades:
            row(t, f"trade_{side}", s, na, nb, la, lb, sm.path_id)
        trig = {"a": "trigger_a", "b": "trigger_b", "both": "trigger_both",
                "at_T": "trigger_both"}[sm.trigger_pattern]
        s_last = float(sm.gap_path[-1]) if len(sm.gap_path) else 0.0
        row(sm.trigger_time, trig, s_last, sm.n_a, sm.n_b,
            sm.l_a, sm.l_b, sm.path_id)
        row(sm.trigger_time + h, "auction_end", s_last, sm.n_a, sm.n_b,
            sm.l_a, sm.l_b, sm.path_id)
