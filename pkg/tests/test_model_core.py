"""Unit tests for parameters, grids, and the closed-form building blocks."""

import math

import numpy as np
import pytest

from ahead import GridSpec, ModelParams, OuterState, bang_bang_intensity, terminal_auction_payoff


# ======================================================================
# ModelParams validation
# ======================================================================

def test_defaults_are_valid():
    p = ModelParams()
    assert p.n_steps == 2000
    assert p.lambda_minus == 0.001 and p.lambda_plus == 1.0 and p.sigma == 0.03


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(K=0.0),
        dict(q=-1.0),
        dict(v_a=0.0),
        dict(v_b=-0.1),
        dict(lambda_minus=0.5, lambda_plus=0.1),
        dict(lambda_minus=-0.1),
        dict(h=0.0),
        dict(delta=0.0),
        dict(delta=7.0, T=100.0),  # T/delta not integer
        dict(n_hat=-1),
        dict(sim_trigger_mode="coin_flip"),
        dict(target_rounding="floor"),
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_degenerate_intensities_allowed():
    # lambda_minus == lambda_plus (oracle case) and the all-zero edge both
    # have to construct.
    ModelParams(lambda_minus=0.25, lambda_plus=0.25)
    ModelParams(lambda_minus=0.0, lambda_plus=0.0)


def test_nearest_integer_rounding_hypothesis():
    # v = 0.1, delta = 0.25 gives 1/(2 v delta) = 20, an integer.
    p = ModelParams(delta=0.25, T=20.0, target_rounding="nearest_integer")
    assert p.target_offset("a", 0.0) == 0.0
    # v*t = 0.5 at t = 5: ceil(0) = 0, half-lots round down.
    assert p.target_offset("a", 5.0) == 0.0
    assert p.target_offset("a", 5.25) == 1.0
    np.testing.assert_allclose(
        p.target_offset("a", np.array([0.0, 5.0, 10.0, 20.0])), [0.0, 0.0, 1.0, 2.0]
    )
    with pytest.raises(ValueError):
        ModelParams(delta=0.3, T=20.1, v_a=0.1, target_rounding="nearest_integer")


def test_continuous_target_offset():
    p = ModelParams(delta=0.25, T=20.0)
    assert p.target_offset("b", 7.5) == pytest.approx(0.75)


def test_fingerprint_tracks_content():
    a = ModelParams()
    b = ModelParams(q=0.005)
    assert a.fingerprint() == ModelParams().fingerprint()
    assert a.fingerprint() != b.fingerprint()


# ======================================================================
# GridSpec
# ======================================================================

def test_grid_axes():
    g = GridSpec()
    s = g.s_axis()
    assert len(s) == g.s_nodes
    np.testing.assert_allclose(s + s[::-1], 0.0, atol=1e-15)  # symmetric about 0
    assert s[g.s_nodes // 2] == 0.0
    la = g.l_axis("a")
    assert la[0] == 0.0 and la[-1] == g.l_max_a


@pytest.mark.filterwarnings("ignore:n_max")
def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(s_nodes=10)  # even: s=0 would fall between nodes
    p = ModelParams(delta=0.25, T=20.0)
    GridSpec.desk(p).validate(p)
    # CFL: auction step too coarse for the intensity cap
    bad = GridSpec.desk(p, delta_auction=0.6)
    with pytest.raises(ValueError, match="CFL"):
        bad.validate(p)
    with pytest.raises(ValueError, match="m_max"):
        GridSpec.desk(p, m_max=5).validate(p)


def test_desk_grid_warns_on_tight_count_truncation():
    p = ModelParams(delta=0.25, T=20.0)
    with pytest.warns(UserWarning, match="n_max"):
        GridSpec.desk(p).validate(p)


def test_auction_step_divides_h():
    p = ModelParams(h=20.0, delta=0.25, T=20.0)
    g = GridSpec.desk(p)
    steps = g.auction_steps(p)
    assert steps * g.auction_dt(p) == pytest.approx(p.h)
    assert g.auction_dt(p) <= g.delta_auction + 1e-12


def test_outer_state_validation():
    OuterState(k=0, s=0.1, n_a=0, n_b=2, l_a=0.0, l_b=1.5)
    with pytest.raises(ValueError):
        OuterState(k=0, s=0.0, n_a=-1, n_b=0, l_a=0.0, l_b=0.0)
    with pytest.raises(ValueError):
        OuterState(k=0, s=0.0, n_a=0, n_b=0, l_a=float("nan"), l_b=0.0)


# ======================================================================
# bang_bang_intensity
# ======================================================================

def test_bang_bang_trivial_cases():
    p = ModelParams()  # lambda in [0.001, 1.0]
    assert bang_bang_intensity(+0.5, "minimizer", p) == 0.001
    assert bang_bang_intensity(-0.5, "minimizer", p) == 1.0
    assert bang_bang_intensity(0.0, "maximizer", p) == 0.001  # tie-break
    assert bang_bang_intensity(0.0, "minimizer", p) == 0.001
    assert bang_bang_intensity(+0.5, "maximizer", p) == 1.0
    assert bang_bang_intensity(-0.5, "maximizer", p) == 0.001
    with pytest.raises(ValueError):
        bang_bang_intensity(0.0, "neutral", p)


def test_bang_bang_extremises_linear_payoff():
    # The returned intensity must extremise mu * increment over the interval,
    # for a spread of increments including exact zero.
    p = ModelParams(lambda_minus=0.2, lambda_plus=0.9)
    rng = np.random.default_rng(42)
    incs = np.concatenate([rng.normal(size=200), [0.0, -0.0, 1e-300, -1e-300]])
    for inc in incs:
        lo = bang_bang_intensity(inc, "minimizer", p)
        hi = bang_bang_intensity(inc, "maximizer", p)
        assert lo in (p.lambda_minus, p.lambda_plus)
        assert hi in (p.lambda_minus, p.lambda_plus)
        candidates = np.array([p.lambda_minus, p.lambda_plus])
        assert lo * inc == (candidates * inc).min()
        assert hi * inc == (candidates * inc).max()


# ======================================================================
# terminal_auction_payoff
# ======================================================================

def test_terminal_payoff_zero_case():
    # With the penalty off, zero deviations and zero counts settle at zero.
    p = ModelParams(q=0.0)
    assert terminal_auction_payoff(0.0, 0.0, 0, 0, 0, 0, p) == (0.0, 0.0)


def test_terminal_payoff_hand_value():
    # Frozen hand evaluation: qh=0.2 penalty on a 3-lot miss plus a 5-lot
    # total trading into a 3-lot imbalance at slope 10.
    p = ModelParams(h=20.0, q=0.01, K=10.0, v_a=0.1, v_b=0.1)
    pa, pb = terminal_auction_payoff(0.0, 0.0, 2, 2, 3, 0, p)
    assert pa == pytest.approx(0.2 * 9 + 5 * 3 / 10)  # 3.3
    assert pb == pytest.approx(-0.2 * 0 + 2 * 3 / 10)  # 0.6


def test_terminal_payoff_symmetric_inputs():
    p = ModelParams(v_a=0.1, v_b=0.1)
    pa, pb = terminal_auction_payoff(0.5, 0.5, 3, 3, 2, 2, p)
    assert pb == pytest.approx(-pa)


def test_terminal_payoff_large_K_reduces_to_penalties():
    p = ModelParams(h=20.0, q=0.01, K=1e12, v_a=0.1, v_b=0.1)
    pa, pb = terminal_auction_payoff(1.0, -1.0, 4, 0, 0, 2, p)
    assert pa == pytest.approx(p.q * p.h * (p.v_a * p.h - 1.0 - 4) ** 2, rel=1e-9)
    assert pb == pytest.approx(-p.q * p.h * (p.v_b * p.h + 1.0 - 2) ** 2, rel=1e-9)


def test_terminal_payoff_role_swap_antisymmetry():
    # payoff_b(x_a,x_b,m_a,m_b,np_a,np_b) = -payoff_a(x_b,x_a,m_b,m_a,np_b,np_a)
    # whenever v_a = v_b.
    p = ModelParams(v_a=0.12, v_b=0.12, h=15.0, q=0.07, K=4.0, delta=0.05, T=100.0)
    rng = np.random.default_rng(7)
    for _ in range(100):
        x_a, x_b = rng.normal(scale=3.0, size=2)
        m_a, m_b, np_a, np_b = rng.integers(0, 8, size=4)
        _, pb = terminal_auction_payoff(x_a, x_b, m_a, m_b, np_a, np_b, p)
        pa_sw, _ = terminal_auction_payoff(x_b, x_a, m_b, m_a, np_b, np_a, p)
        assert pb == pytest.approx(-pa_sw, rel=1e-12, abs=1e-12)


def test_terminal_payoff_broadcasts():
    p = ModelParams()
    m_a = np.arange(4)[:, None]
    m_b = np.arange(3)[None, :]
    pa, pb = terminal_auction_payoff(0.0, 0.0, m_a, m_b, 1, 0, p)
    assert pa.shape == (4, 3) and pb.shape == (4, 3)
    pa00, pb00 = terminal_auction_payoff(0.0, 0.0, 0, 0, 1, 0, p)
    assert pa[0, 0] == pytest.approx(pa00)
    assert pb[0, 0] == pytest.approx(pb00)
