"""Expected duration of the continuous phase.

Backward recursion sharing the value induction's step operator: the terminal
slice is zero, one step adds delta on the continuation branches only, and the
whole inner expectation is scaled by the probability (1-p_a)(1-p_b) that
nobody triggers at the current slice.  Any trigger mass therefore zeroes the
remaining duration at that node, which makes the recursion a proxy: the
simulator's empirical trigger times are the reference definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import GameFields, _frac_index, _SliceStepper
from .params import GridSpec, ModelParams


@dataclass
class DurationField:
    """E_k arrays over the outer grid; slice 0 is always present."""

    params: ModelParams
    grid: GridSpec
    E: dict = field(default_factory=dict)

    def initial(self, s: float = 0.0) -> float:
        """Expected duration from (s, n=0, l=0) at time 0."""
        axis = self.grid.s_axis()
        i0, w, over = _frac_index(axis, np.array(s))
        if bool(over) or s < axis[0]:
            raise ValueError(f"s={s} outside the grid")
        e = self.E[0][:, 0, 0, 0, 0]
        i0, w = int(i0), float(w)
        return float(e[i0] + w * (e[i0 + 1] - e[i0]))


def average_duration(fields: GameFields, params: ModelParams, grid: GridSpec,
                     store_values: str = "k0") -> DurationField:
    """Recompute the duration field from stored equilibrium policies.

    Needs the trigger probabilities and intensity policies at every slice;
    solves built at scales where policies are not stored should use
    backward_induction(with_duration=True) instead, which advances the same
    recursion inside the value sweep.
    """
    K = params.n_steps
    missing = [k for k in range(K) if k not in fields.p_a or k not in fields.up_a]
    if missing:
        raise ValueError(
            f"missing policy slices {missing[:3]}...; rebuild the fields with "
            "store_policies=True or use with_duration=True"
        )
    if store_values not in ("k0", "all"):
        raise ValueError("store_values must be 'k0' or 'all'")

    stepper = _SliceStepper(params, grid, fields.quad_points)
    S = grid.s_nodes
    NA, NB = grid.n_max_a + 1, grid.n_max_b + 1
    E = np.zeros((S, NA, NB, grid.l_nodes_a, grid.l_nodes_b))
    out = DurationField(params=params, grid=grid)
    if store_values == "all":
        out.E[K] = E.copy()

    for k in range(K - 1, -1, -1):
        ce = stepper.advance_field(E, k, fields.up_a[k], fields.up_b[k],
                                   trading=fields.trading)
        p_a = fields.p_a[k].astype(float)
        p_b = fields.p_b[k].astype(float)
        E = (1.0 - p_a) * (1.0 - p_b) * (ce + params.delta)
        upper = params.T - k * params.delta
        if E.min() < -1e-9 or E.max() > upper + 1e-6:
            raise FloatingPointError(
                f"duration invariant violated at slice {k}: range "
                f"[{E.min():.3e}, {E.max():.3e}], cap {upper}"
            )
        # quadrature rows are stochastic only to rounding, so constant
        # fields drift by ulps; pin the hard bounds of the recursion
        np.clip(E, 0.0, upper, out=E)
        if store_values == "all" or k == 0:
            out.E[k] = E
    return out
