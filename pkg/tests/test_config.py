"""Config parsing: profiles, defaults, overrides and field diagnostics."""

import pytest

from ahead.config import CACHE_ENV, ConfigError, load_config, parse_config

MINIMAL = """
[run]
kind = epsilon
"""

SWEEPY = """
[run]
kind = subgame_sweep
seed = 7

[sweep]
x_values = -1.0:1.0:5
n_plus_values = 0, 2
v_pairs = 0.1/0.1, 0.05/0.1
"""


class TestProfiles:
    def test_desk_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.profile == "desk"
        assert cfg.params.T == 20.0 and cfg.params.delta == 0.25
        assert cfg.grid.s_nodes == 21
        assert cfg.fmt == "csv" and cfg.figures and not cfg.emit_policies

    def test_model_overrides_win_over_profile(self):
        cfg = parse_config(MINIMAL + "[model]\nT = 2.0\ndelta = 0.5\nq = 0.2\n")
        assert cfg.params.T == 2.0 and cfg.params.q == 0.2
        assert cfg.explicit_model == ("T", "delta", "q")

    def test_repro_requires_explicit_calibration(self):
        with pytest.raises(ConfigError, match="sigma"):
            parse_config("[run]\nkind = epsilon\nprofile = repro\n"
                         "[model]\nlambda_plus = 1.0\n")

    def test_repro_with_calibration_uses_long_horizon(self):
        cfg = parse_config(
            "[run]\nkind = epsilon\nprofile = repro\n"
            "[model]\nsigma = 0.03\nlambda_minus = 0.001\nlambda_plus = 1.0\n")
        assert cfg.params.T == 100.0 and cfg.params.delta == 0.05
        assert cfg.grid.n_max_a >= 100  # conservative count bound
        assert cfg.defaulted_calibration() == ()

    def test_desk_reports_defaulted_calibration(self):
        cfg = parse_config(MINIMAL + "[model]\nsigma = 0.05\n")
        assert cfg.defaulted_calibration() == ("lambda_minus", "lambda_plus")


class TestDiagnostics:
    @pytest.mark.parametrize("text,needle", [
        ("[run]\nkind = dance\n", "kind"),
        ("[run]\nkind = game\nprofile = prod\n", "profile"),
        ("[run]\nkind = game\nformat = xml\n", "format"),
        ("[run]\nkind = game\nseed = -1\n", "seed"),
        ("[run]\nkind = game\npaths = 0\n", "paths"),
        ("[run]\nkind = game\nthreads = 0\n", "threads"),
        ("[run]\nkind = game\nfigures = maybe\n", "figures"),
        ("[run]\nkind = game\nseed = four\n", "seed"),
        ("[run]\nkind = game\n[model]\nq = brr\n", r"\[model\] q"),
        ("[run]\nkind = game\n[model]\nquality = 1\n", "unknown key"),
        ("[run]\nkind = game\n[grid]\ns_nodes = 4\n", "s_nodes"),
        ("[run]\nkind = game\n[extras]\nx = 1\n", "unknown section"),
        ("[run]\nkind = game\n[model]\ndelta = 30.0\n", r"\[model\]"),
        ("[run]\nkind = subgame_sweep\n", "x_values"),
        ("[run]\nkind = subgame_sweep\n[sweep]\nx_values = a:b:c\n",
         "x_values"),
        ("[run]\nkind = subgame_sweep\n[sweep]\nx_values = 1:0:5\n",
         "hi > lo"),
        ("[run]\nkind = baselines\n[sweep]\nv_pairs = 0.1-0.1\n", "v_a/v_b"),
        ("[run]\nkind = baselines\n[sweep]\nv_pairs = ,\n", "empty"),
        ("kind = game\n", "header"),
    ])
    def test_bad_configs_name_the_field(self, text, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "nope.ini"))


class TestSweeps:
    def test_axis_and_lists(self):
        cfg = parse_config(SWEEPY)
        assert cfg.sweep["x_values"] == (-1.0, -0.5, 0.0, 0.5, 1.0)
        assert cfg.sweep["n_plus_values"] == (0, 2)
        assert cfg.sweep["v_pairs"] == ((0.1, 0.1), (0.05, 0.1))
        assert cfg.seed == 7

    def test_comma_float_list(self):
        cfg = parse_config(
            "[run]\nkind = game\n[sweep]\ns_values = 0.0, 0.01, -0.02\n")
        assert cfg.sweep["s_values"] == (0.0, 0.01, -0.02)

    def test_inline_comments_and_case(self):
        cfg = parse_config(
            "[run]\nkind = game  # quick look\n[model]\nT = 2.0 ; horizon\n"
            "delta = 0.25\nK = 5.0\n")
        assert cfg.kind == "game"
        assert cfg.params.T == 2.0 and cfg.params.K == 5.0


class TestOverrides:
    def test_cli_overrides_beat_file(self):
        cfg = parse_config(
            "[run]\nkind = epsilon\nseed = 1\nthreads = 2\nout = filedir\n"
            "format = csv\nfigures = true\n",
            overrides={"seed": 9, "threads": 4, "out": "flagdir",
                       "format": "json", "figures": False,
                       "confirm_long": True})
        assert cfg.seed == 9 and cfg.threads == 4
        assert cfg.out_dir == "flagdir" and cfg.fmt == "json"
        assert cfg.figures is False and cfg.confirm_long is True

    def test_none_overrides_are_ignored(self):
        cfg = parse_config("[run]\nkind = epsilon\nseed = 3\n",
                           overrides={"seed": None, "out": None})
        assert cfg.seed == 3 and cfg.out_dir == "out"

    def test_cache_precedence(self, monkeypatch):
        monkeypatch.setenv(CACHE_ENV, "envdir")
        text = "[run]\nkind = epsilon\ncache = filedir\n"
        assert parse_config(text).cache_dir == "filedir"
        assert parse_config(text, overrides={"cache": "flagdir"}).cache_dir \
            == "flagdir"
        assert parse_config("[run]\nkind = epsilon\n").cache_dir == "envdir"
        monkeypatch.delenv(CACHE_ENV)
        assert parse_config("[run]\nkind = epsilon\n").cache_dir is None
