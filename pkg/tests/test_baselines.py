"""Benchmark designs: limit-order-book values and periodic auctions."""

import warnings

import numpy as np
import pytest

from ahead.baselines import (
    BaselineReport,
    ahead_report,
    clob_values,
    periodic_auction_values,
)
from ahead.cache import SubgameCache
from ahead.game import backward_induction
from ahead.params import GridSpec, ModelParams

from test_game import SMALL_GRID, small_setup


class TestClob:
    def test_reference_points(self):
        # V^a = v_a/K, V^b = -v_b/K, duration 1/v_a
        r = clob_values(ModelParams(v_a=0.1, v_b=0.1, K=10.0))
        assert r.V_a == pytest.approx(0.01)
        assert r.V_b == pytest.approx(-0.01)
        assert r.duration == pytest.approx(10.0)

        r = clob_values(ModelParams(v_a=0.05, v_b=0.1, K=10.0))
        assert r.V_a == pytest.approx(0.005)
        assert r.duration == pytest.approx(20.0)

        r = clob_values(ModelParams(v_a=0.15, v_b=0.1, K=10.0))
        assert r.V_a == pytest.approx(0.015)
        assert r.duration == pytest.approx(1.0 / 0.15)

    def test_scaled_report(self):
        r = clob_values(ModelParams(v_a=0.1, K=10.0))
        assert r.scaled(1e6)["V_a"] == pytest.approx(10000.0)
        assert r.design == "clob"

    def test_rejects_zero_rate(self):
        with pytest.raises(ValueError, match="v_a"):
            clob_values(ModelParams(v_a=0.0))


class TestPeriodic:
    def test_volatility_independent(self):
        # with continuous trading switched off, no branch of the recursion
        # reads the gap, so the price volatility cannot enter the value
        # (the order-flow intensities still do, through the auction phase)
        p1, grid = small_setup(sigma=0.03)
        p2, _ = small_setup(sigma=0.012)
        r1 = periodic_auction_values(p1, grid, SubgameCache(p1, grid))
        r2 = periodic_auction_values(p2, grid, SubgameCache(p2, grid))
        assert r1.V_a == pytest.approx(r2.V_a, abs=1e-10)
        assert r1.V_b == pytest.approx(r2.V_b, abs=1e-10)
        assert r1.duration == pytest.approx(r2.duration, abs=1e-10)

    @pytest.mark.filterwarnings("ignore:n_max")
    def test_collapsed_count_axes_are_exact(self):
        # jumps are off, so counts are frozen at zero and dropping the
        # count axes must not move the answer
        params, full_grid = small_setup()
        kw = dict(SMALL_GRID)
        kw.update(n_max_a=0, n_max_b=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tiny_grid = GridSpec(**kw)
        r_full = periodic_auction_values(params, full_grid,
                                         SubgameCache(params, full_grid))
        fields = backward_induction(params, tiny_grid,
                                    SubgameCache(params, tiny_grid),
                                    trading=False, with_duration=True,
                                    store_policies=False)
        va, vb = fields.initial_values(0.0)
        assert r_full.V_a == pytest.approx(va, abs=1e-14)
        assert r_full.V_b == pytest.approx(vb, abs=1e-14)
        assert r_full.duration == pytest.approx(fields.duration.initial(0.0),
                                                abs=1e-14)

    def test_duration_bounds_and_tag(self):
        params, grid = small_setup()
        r = periodic_auction_values(params, grid, SubgameCache(params, grid))
        assert 0.0 <= r.duration <= params.T
        assert r.design == f"periodic(n_hat={params.n_hat})"
        assert np.isfinite(r.V_a) and np.isfinite(r.V_b)

    def test_symmetric_flow_values_mirror(self):
        params, grid = small_setup(v_a=0.1, v_b=0.1)
        r = periodic_auction_values(params, grid, SubgameCache(params, grid))
        assert r.V_a == pytest.approx(-r.V_b, abs=1e-10)


class TestAheadReport:
    def test_packaging(self):
        params, grid = small_setup()
        r = ahead_report(params, grid, SubgameCache(params, grid))
        assert r.design == "ahead"
        assert np.isfinite(r.V_a) and np.isfinite(r.V_b)
        assert 0.0 <= r.duration <= params.T
        d = r.scaled(1e6)
        assert d["V_a"] == pytest.approx(r.V_a * 1e6)
        assert d["duration"] == r.duration

    def test_symmetric_flow_values_mirror(self):
        params, grid = small_setup(v_a=0.1, v_b=0.1)
        r = ahead_report(params, grid, SubgameCache(params, grid))
        assert r.V_a == pytest.approx(-r.V_b, abs=1e-9)
