"""Command-line front end: config in, CSV + sidecar JSON + figures out.

Every run writes

* ``<kind>.csv``        the data, first line a ``# ahead ...`` comment that
                        embeds the parameter fingerprint, second line the
                        column names,
* ``<kind>.meta.json``  the fully resolved parameters (including which
                        calibration constants were defaulted), artifact list
                        and a timestamp; the timestamp is confined here so
                        the CSVs stay byte-identical across reruns,
* ``<kind>.png``        a quick-look figure where one makes sense.

Value columns appear twice, raw and scaled by 1e6, to match the convention
of the reference tables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from . import figures
from .baselines import ahead_report, clob_values, periodic_auction_values
from .cache import SubgameCache
from .config import ConfigError, ExperimentConfig, load_config
from .game import backward_induction
from .params import GridSpec
from .simulate import simulate, write_path_log
from .subgame import epsilon_bounds

# the five (v_a, v_b) rows of the benchmark tables
TABLE_PAIRS = ((0.1, 0.1), (0.05, 0.1), (0.1, 0.05), (0.15, 0.1),
               (0.1, 0.15))

_E6 = 1e6


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _fingerprint(cfg: ExperimentConfig) -> str:
    return f"{cfg.params.fingerprint()}-{cfg.grid.fingerprint()}"


def _comment(cfg: ExperimentConfig, name: str) -> str:
    return (f"# ahead {name} v1 fingerprint={_fingerprint(cfg)} "
            f"profile={cfg.profile} seed={cfg.seed}")


def _write_table(cfg: ExperimentConfig, name: str, columns, rows) -> str:
    """Write one delimited artifact in the configured format."""
    if cfg.fmt == "json":
        path = os.path.join(cfg.out_dir, f"{name}.json")
        doc = {
            "comment": _comment(cfg, name)[2:],
            "columns": list(columns),
            "rows": [[(float(v) if isinstance(v, (float, np.floating))
                       else int(v) if isinstance(v, (int, np.integer))
                       else v) for v in row] for row in rows],
        }
        with open(path, "w", newline="") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        return path
    path = os.path.join(cfg.out_dir, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_comment(cfg, name) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _write_sidecar(cfg: ExperimentConfig, name: str, artifacts,
                   extra: dict | None = None) -> str:
    doc = {
        "kind": cfg.kind,
        "profile": cfg.profile,
        "fingerprint": _fingerprint(cfg),
        "model": asdict(cfg.params),
        "grid": asdict(cfg.grid),
        "run": {
            "seed": cfg.seed, "paths": cfg.paths, "threads": cfg.threads,
            "format": cfg.fmt, "emit_policies": cfg.emit_policies,
        },
        "calibration": {
            "sigma": cfg.params.sigma,
            "lambda_minus": cfg.params.lambda_minus,
            "lambda_plus": cfg.params.lambda_plus,
            "defaulted": list(cfg.defaulted_calibration()),
        },
        "artifacts": [os.path.basename(a) for a in artifacts],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        doc.update(extra)
    path = os.path.join(cfg.out_dir, f"{name}.meta.json")
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _cache(cfg: ExperimentConfig, params=None, grid=None) -> SubgameCache:
    return SubgameCache(params or cfg.params, grid or cfg.grid,
                        directory=cfg.cache_dir)


def _dump_policies(cfg: ExperimentConfig, fields, name: str) -> str:
    arrays = {}
    for k in sorted(fields.p_a):
        arrays[f"p_a_{k}"] = fields.p_a[k]
        arrays[f"p_b_{k}"] = fields.p_b[k]
        arrays[f"up_a_{k}"] = fields.up_a[k]
        arrays[f"up_b_{k}"] = fields.up_b[k]
    path = os.path.join(cfg.out_dir, f"{name}_policies.npz")
    np.savez_compressed(path, **arrays)
    return path


def _s_samples(cfg: ExperimentConfig):
    custom = cfg.sweep.get("s_values")
    if custom is not None:
        return np.asarray(custom, dtype=float)
    return cfg.grid.s_axis()


# ----------------------------------------------------------------------
# runners, one per kind
# ----------------------------------------------------------------------

def _run_game(cfg: ExperimentConfig):
    want_duration = cfg.kind == "duration"
    with _cache(cfg) as cache:
        fields = backward_induction(
            cfg.params, cfg.grid, cache, with_duration=want_duration,
            store_policies=cfg.emit_policies)
    s = _s_samples(cfg)
    artifacts = []
    if want_duration:
        e0 = [fields.duration.initial(float(x)) for x in s]
        # durations are seconds, not value functions; no 1e6 column
        rows = [(float(x), e) for x, e in zip(s, e0)]
        artifacts.append(_write_table(cfg, "duration", ("s", "E_0"), rows))
        if cfg.figures:
            artifacts.append(figures.duration_figure(
                os.path.join(cfg.out_dir, "duration.png"), s, e0))
    else:
        vals = [fields.initial_values(float(x)) for x in s]
        rows = [(float(x), ua, ub, ua * _E6, ub * _E6)
                for x, (ua, ub) in zip(s, vals)]
        artifacts.append(_write_table(
            cfg, "game", ("s", "U_a", "U_b", "U_a_e6", "U_b_e6"), rows))
        if cfg.figures:
            artifacts.append(figures.value_figure(
                os.path.join(cfg.out_dir, "game.png"), s,
                [v[0] for v in vals], [v[1] for v in vals]))
    if cfg.emit_policies:
        artifacts.append(_dump_policies(cfg, fields, cfg.kind))
    return artifacts, len(rows)


def _run_subgame_sweep(cfg: ExperimentConfig):
    base = cfg.params
    sw = cfg.sweep
    h_list = sw.get("h_values", (base.h,))
    q_list = sw.get("q_values", (base.q,))
    xa_list = sw.get("x_a_values") or sw["x_values"]
    xb_list = sw.get("x_b_values", (0.0,))
    npa_list = sw.get("n_plus_values", (base.n_hat,))
    npb_list = sw.get("n_plus_b_values", (0,))

    columns = ("h", "q", "np_a", "np_b", "x_b", "x_a",
               "g_a", "g_b", "g_a_e6", "g_b_e6")
    rows = []
    first_curves = None
    for h in h_list:
        for q in q_list:
            p2 = replace(base, h=h, q=q)
            if (h, q) == (base.h, base.q):
                g2 = cfg.grid
            else:
                # h moves the window length, so the auto-sized auction
                # lattice must be re-derived; node counts are kept
                g2 = replace(cfg.grid, m_max=GridSpec._auto_m(p2),
                             delta_auction=GridSpec._auto_dt(p2))
            xa, xb, na, nb = [a.ravel() for a in np.meshgrid(
                np.asarray(xa_list), np.asarray(xb_list),
                np.asarray(npa_list), np.asarray(npb_list), indexing="ij")]
            with _cache(cfg, p2, g2) as cache:
                g_a, g_b = cache.values(xa, xb, na, nb)
            for i in range(len(xa)):
                rows.append((h, q, int(na[i]), int(nb[i]), float(xb[i]),
                             float(xa[i]), g_a[i], g_b[i],
                             g_a[i] * _E6, g_b[i] * _E6))
            if first_curves is None:
                first_curves = {}
                for np_a in npa_list:
                    sel = (na == np_a) & (nb == npb_list[0]) \
                        & (xb == xb_list[0])
                    first_curves[int(np_a)] = g_a[sel]
    rows.sort()
    artifacts = [_write_table(cfg, "subgame_sweep", columns, rows)]
    if cfg.figures and first_curves:
        artifacts.append(figures.sweep_figure(
            os.path.join(cfg.out_dir, "subgame_sweep.png"),
            list(xa_list), first_curves, "pre-auction deviation x_a"))
    return artifacts, len(rows)


def _run_baselines(cfg: ExperimentConfig, name: str):
    base = cfg.params
    pairs = cfg.sweep.get("v_pairs", TABLE_PAIRS) if name == "baselines" \
        else TABLE_PAIRS
    n_hats = tuple(cfg.sweep.get("n_plus_values", (3, 1)))

    columns = ("v_a", "v_b", "design", "n_hat", "V_a", "V_b", "duration",
               "V_a_e6", "V_b_e6")
    rows = []
    fig_rows = []
    for v_a, v_b in pairs:
        p2 = replace(base, v_a=v_a, v_b=v_b)
        reports = []
        with _cache(cfg, p2) as cache:
            reports.append((p2.n_hat, ahead_report(p2, cfg.grid, cache)))
        for nh in n_hats:
            p3 = replace(p2, n_hat=nh, n_hat_ab=nh)
            with _cache(cfg, p3) as cache:
                reports.append((nh, periodic_auction_values(p3, cfg.grid,
                                                            cache)))
        reports.append((0, clob_values(p2)))
        for nh, rep in reports:
            rows.append((v_a, v_b, rep.design, nh, rep.V_a, rep.V_b,
                         rep.duration, rep.V_a * _E6, rep.V_b * _E6))
            fig_rows.append({"v_a": v_a, "v_b": v_b, "design": rep.design,
                             "V_a_e6": rep.V_a * _E6,
                             "duration": rep.duration})
    artifacts = [_write_table(cfg, name, columns, rows)]
    if cfg.figures:
        artifacts.append(figures.baselines_figure(
            os.path.join(cfg.out_dir, f"{name}.png"), fig_rows))
    return artifacts, len(rows)


def _run_simulate(cfg: ExperimentConfig):
    with _cache(cfg) as cache:
        fields = backward_induction(cfg.params, cfg.grid, cache,
                                    with_duration=True, store_policies=True)
        u_a, u_b = fields.initial_values(0.0)
        e0 = fields.duration.initial(0.0)
        st = simulate(fields, cache, cfg.params, cfg.paths, cfg.seed,
                      workers=cfg.threads, collect=cfg.log_paths)

    metrics = [
        ("paths", st.paths),
        ("mean_payoff_a", st.mean_payoff_a),
        ("se_payoff_a", st.se_payoff_a),
        ("mean_payoff_b", st.mean_payoff_b),
        ("se_payoff_b", st.se_payoff_b),
        ("mean_duration", st.mean_duration),
        ("se_duration", st.se_duration),
        ("solver_U_a", u_a),
        ("solver_U_b", u_b),
        ("solver_E_0", e0),
        ("mean_payoff_a_e6", st.mean_payoff_a * _E6),
        ("mean_payoff_b_e6", st.mean_payoff_b * _E6),
        ("solver_U_a_e6", u_a * _E6),
        ("solver_U_b_e6", u_b * _E6),
        ("triggers_a", st.trigger_counts["a"]),
        ("triggers_b", st.trigger_counts["b"]),
        ("triggers_both", st.trigger_counts["both"]),
        ("triggers_at_T", st.trigger_counts["at_T"]),
    ]
    metrics += [(f"incident_{k}", v) for k, v in sorted(st.incidents.items())]
    artifacts = [_write_table(cfg, "simulate", ("metric", "value"), metrics)]

    if cfg.log_paths > 0:
        log_path = os.path.join(cfg.out_dir, "simulate_paths.csv")
        with open(log_path, "w", newline="") as fh:
            fh.write(_comment(cfg, "simulate_paths") + "\n")
            write_path_log(st.samples, fh, cfg.params.h)
        artifacts.append(log_path)
    if cfg.emit_policies:
        artifacts.append(_dump_policies(cfg, fields, "simulate"))
    if cfg.figures:
        artifacts.append(figures.simulate_figure(
            os.path.join(cfg.out_dir, "simulate.png"),
            "payoff of player a", u_a, st.mean_payoff_a, st.se_payoff_a,
            st.samples, cfg.params.delta))
    return artifacts, len(metrics)


def _run_epsilon(cfg: ExperimentConfig):
    with _cache(cfg) as cache:
        eps_a, eps_b = epsilon_bounds(cfg.params, cfg.grid, cache)
    rows = [(cfg.params.n_hat, eps_a, eps_b, eps_a * _E6, eps_b * _E6)]
    artifacts = [_write_table(cfg, "epsilon",
                              ("n_hat", "eps_a", "eps_b", "eps_a_e6",
                               "eps_b_e6"), rows)]
    return artifacts, 1


_RUNNERS = {
    "game": _run_game,
    "duration": _run_game,
    "subgame_sweep": _run_subgame_sweep,
    "baselines": lambda cfg: _run_baselines(cfg, "baselines"),
    "table3": lambda cfg: _run_baselines(cfg, "table3"),
    "table4": lambda cfg: _run_baselines(cfg, "table4"),
    "simulate": _run_simulate,
    "epsilon": _run_epsilon,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one resolved configuration; returns a process exit status."""
    if cfg.profile == "repro" and not cfg.confirm_long:
        print("refusing: the repro profile runs for hours; pass "
              "--confirm-long to proceed", file=sys.stderr)
        return 2
    if cfg.kind == "table4":
        # the small-penalty comparison table is defined at q = 0.005;
        # swapping params here keeps sidecar and fingerprint truthful
        cfg = replace(cfg, params=replace(cfg.params, q=0.005))
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}",
              file=sys.stderr)
        return 1
    if not os.access(cfg.out_dir, os.W_OK):
        print(f"error: output directory {cfg.out_dir!r} is not writable",
              file=sys.stderr)
        return 1

    started = time.perf_counter()
    artifacts, n_rows = _RUNNERS[cfg.kind](cfg)
    artifacts.append(_write_sidecar(cfg, cfg.kind, artifacts))
    elapsed = time.perf_counter() - started
    print(f"{cfg.kind}: {n_rows} rows, {len(artifacts)} artifacts in "
          f"{cfg.out_dir} ({elapsed:.1f}s)")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="ahead",
        description="Solve and simulate the auction-triggering trading game "
                    "described by a config file.")
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--out", help="output directory (default: [run] out)")
    ap.add_argument("--cache", help="sub-game cache directory "
                                    "(default: [run] cache, then "
                                    "AHEAD_CACHE_DIR)")
    ap.add_argument("--profile", choices=("desk", "repro"))
    ap.add_argument("--threads", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--confirm-long", action="store_const", const=True,
                    default=None, dest="confirm_long",
                    help="allow runs beyond the interactive budget")
    ap.add_argument("--emit-policies", action="store_const", const=True,
                    default=None, dest="emit_policies",
                    help="dump the full policy fields alongside the data")
    ap.add_argument("--no-figures", action="store_const", const=False,
                    default=None, dest="figures",
                    help="skip rendering PNG figures")
    ap.add_argument("--format", choices=("csv", "json"))
    args = ap.parse_args(argv)

    overrides = {
        "out": args.out, "cache": args.cache, "profile": args.profile,
        "threads": args.threads, "seed": args.seed,
        "confirm_long": args.confirm_long,
        "emit_policies": args.emit_policies, "figures": args.figures,
        "format": args.format,
    }
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
