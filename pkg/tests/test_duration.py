"""Expected-duration recursion tests."""

import numpy as np
import pytest

from ahead.cache import SubgameCache
from ahead.duration import average_duration
from ahead.game import backward_induction
from ahead.params import GridSpec, ModelParams

from test_game import SMALL_GRID, SMALL_PARAMS, StubCache, small_setup


class TestAverageDuration:
    def test_matches_interleaved_recursion(self):
        params, grid = small_setup(q=0.05)
        cache = SubgameCache(params, grid)
        fields = backward_induction(params, grid, cache, with_duration=True)
        standalone = average_duration(fields, params, grid)
        # stored stopping probabilities are float32, so the replay is not
        # bit-identical to the interleaved pass
        assert np.max(np.abs(standalone.E[0] - fields.duration.E[0])) < 1e-5

    def test_requires_stored_policies(self):
        params, grid = small_setup()
        cache = SubgameCache(params, grid)
        fields = backward_induction(params, grid, cache, store_policies=False)
        with pytest.raises(ValueError, match="polic"):
            average_duration(fields, params, grid)

    def test_never_trigger_runs_full_horizon(self):
        # Stopping is strictly bad for both players at every node, so no
        # auction happens and the expected duration is exactly the horizon.
        params, grid = small_setup()
        stub = StubCache({
            (params.n_hat, 0): (50.0, -50.0),
            (0, params.n_hat): (50.0, -50.0),
            (0, 0): (0.0, 0.0),
        })
        fields = backward_induction(params, grid, stub, with_duration=True)
        # constant fields pick up one ulp per step from the quadrature
        # row normalisation, so this is not bit-exact
        assert np.max(np.abs(fields.duration.E[0] - params.T)) < 1e-12

    def test_forced_trigger_is_instant(self):
        params, grid = small_setup()
        stub = StubCache({
            (params.n_hat, 0): (-50.0, 50.0),
            (0, params.n_hat): (-50.0, 50.0),
            (0, 0): (0.0, 0.0),
        })
        fields = backward_induction(params, grid, stub, with_duration=True)
        assert np.all(fields.duration.E[0] == 0.0)

    def test_bounds_hold_on_every_stored_slice(self):
        params, grid = small_setup(q=0.05)
        cache = SubgameCache(params, grid)
        fields = backward_induction(params, grid, cache)
        dur = average_duration(fields, params, grid, store_values="all")
        for k, E in dur.E.items():
            assert E.min() >= 0.0
            assert E.max() <= params.T - k * params.delta + 1e-12

    def test_gap_symmetry_with_symmetric_players(self):
        params, grid = small_setup(v_a=0.1, v_b=0.1, q=0.05)
        cache = SubgameCache(params, grid)
        fields = backward_induction(params, grid, cache, with_duration=True)
        E0 = fields.duration.E[0][:, 0, 0, 0, 0]
        assert np.max(np.abs(E0 - E0[::-1])) < 1e-6

    def test_initial_accessor_interpolates(self):
        params, grid = small_setup()
        cache = SubgameCache(params, grid)
        fields = backward_induction(params, grid, cache, with_duration=True)
        dur = fields.duration
        mid = grid.s_nodes // 2
        assert dur.initial(0.0) == pytest.approx(
            float(dur.E[0][mid, 0, 0, 0, 0]), abs=1e-12)
        with pytest.raises(ValueError, match="outside"):
            dur.initial(10 * grid.s_max)
