"""Quick-look figures rendered next to the delimited outputs.

Every function takes a target path and data already computed by the CLI,
draws one PNG with the Agg backend, and returns the path.  The CSVs remain
the primary artifact; these plots exist so a run can be sanity-checked
without opening a notebook.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend pinned first

_DPI = 120


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def value_figure(path, s, u_a, u_b):
    """Initial value of both players across the starting gap."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(s, u_a, marker="o", ms=3, label="player a (cost)")
    ax.plot(s, u_b, marker="s", ms=3, label="player b (gain)")
    ax.axvline(0.0, color="grey", lw=0.6)
    ax.set_xlabel("initial gap s")
    ax.set_ylabel("value per unit of time")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def duration_figure(path, s, e0):
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(s, e0, marker="o", ms=3, color="tab:green")
    ax.axvline(0.0, color="grey", lw=0.6)
    ax.set_xlabel("initial gap s")
    ax.set_ylabel("expected continuous-phase duration (s)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def sweep_figure(path, x_axis, curves, x_label):
    """Auction values against one swept key component, one curve per
    committed volume."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, g in sorted(curves.items()):
        ax.plot(x_axis, g, marker="o", ms=3, label=f"committed {label}")
    ax.set_xlabel(x_label)
    ax.set_ylabel("auction value g_a")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def baselines_figure(path, rows):
    """Grouped bars of V_a and durations per (v_a, v_b) pair and design."""
    pairs = []
    for r in rows:
        p = (r["v_a"], r["v_b"])
        if p not in pairs:
            pairs.append(p)
    designs = []
    for r in rows:
        if r["design"] not in designs:
            designs.append(r["design"])
    by_key = {(r["v_a"], r["v_b"], r["design"]): r for r in rows}

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11.0, 4.2))
    width = 0.8 / len(designs)
    for j, design in enumerate(designs):
        xs = [i + (j - (len(designs) - 1) / 2.0) * width
              for i in range(len(pairs))]
        ax1.bar(xs, [by_key[p + (design,)]["V_a_e6"] for p in pairs],
                width=width, label=design)
        ax2.bar(xs, [by_key[p + (design,)]["duration"] for p in pairs],
                width=width, label=design)
    ticks = list(range(len(pairs)))
    labels = [f"{va:g}/{vb:g}" for va, vb in pairs]
    for ax, title in ((ax1, "V_a x 1e6"), (ax2, "duration (s)")):
        ax.set_xticks(ticks)
        ax.set_xticklabels(labels)
        ax.set_xlabel("v_a / v_b")
        ax.set_ylabel(title)
        ax.grid(alpha=0.3, axis="y")
    ax1.legend(fontsize=8)
    return _save(fig, path)


def simulate_figure(path, payoff_label, dp_value, mc_mean, mc_se, samples,
                    step):
    """Left: a few simulated gap trajectories; right: the DP value against
    the Monte Carlo confidence band."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11.0, 4.2))
    shown = 0
    for sm in samples:
        if shown >= 25:
            break
        t = [i * step for i in range(len(sm.gap_path))]
        ax1.plot(t, sm.gap_path, lw=0.7, alpha=0.7)
        shown += 1
    ax1.axhline(0.0, color="grey", lw=0.6)
    ax1.set_xlabel("time (s)")
    ax1.set_ylabel("gap s")
    ax1.set_title(f"{shown} sampled paths")

    ax2.errorbar([0.0], [mc_mean], yerr=[3.0 * mc_se], fmt="o",
                 capsize=6, label="MC mean +/- 3 SE")
    ax2.axhline(dp_value, color="tab:red", lw=1.0, label="solver value")
    ax2.set_xticks([])
    ax2.set_ylabel(payoff_label)
    ax2.legend()
    ax2.grid(alpha=0.3, axis="y")
    return _save(fig, path)
