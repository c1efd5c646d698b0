"""End-to-end CLI runs on miniature configurations.

Each test drives ``main`` in process with a config written to tmp_path and
checks the artifacts on disk: fingerprint comment, columns, sidecar fields,
figure files, cache population, determinism.
"""

import json
import os

import numpy as np
import pytest

from ahead.cli import main

MODEL_SMALL = """
[model]
T = 2.0
delta = 0.25
h = 4.0
q = 0.5
v_a = 0.2
v_b = 0.2
lambda_plus = 0.1
n_hat = 2
n_hat_ab = 2
"""

GRID_SMALL = """
[grid]
m_max = 13
delta_auction = 0.05
s_nodes = 9
n_max_a = 3
n_max_b = 3
l_nodes_a = 3
l_nodes_b = 3
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(tmp_path, body, *flags, name="run.ini"):
    cfg = write_config(tmp_path, body, name=name)
    return main(["--config", cfg, *flags])


def read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


class TestEpsilonKind:
    def test_zero_commitment_gives_zero_bounds(self, tmp_path):
        out = tmp_path / "out"
        zero_commit = MODEL_SMALL.replace("n_hat = 2", "n_hat = 0") \
                                 .replace("n_hat_ab = 2", "n_hat_ab = 0")
        body = (f"[run]\nkind = epsilon\nout = {out}\nseed = 5\n"
                + zero_commit + "target_rounding = nearest_integer\n"
                + GRID_SMALL)
        assert run_cli(tmp_path, body) == 0
        lines = read_lines(out / "epsilon.csv")
        assert lines[0].startswith("# ahead epsilon v1 fingerprint=")
        assert "seed=5" in lines[0]
        assert lines[1] == "n_hat,eps_a,eps_b,eps_a_e6,eps_b_e6"
        assert lines[2] == "0,0.0,0.0,0.0,0.0"

    def test_continuous_rounding_is_a_runtime_error(self, tmp_path, capsys):
        body = (f"[run]\nkind = epsilon\nout = {tmp_path / 'out'}\n"
                + MODEL_SMALL + GRID_SMALL)
        assert run_cli(tmp_path, body) == 1
        assert "nearest_integer" in capsys.readouterr().err

    def test_sidecar_records_calibration(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = epsilon\nout = {out}\n" + MODEL_SMALL
                + "target_rounding = nearest_integer\nsigma = 0.05\n"
                + GRID_SMALL)
        assert run_cli(tmp_path, body) == 0
        meta = json.loads((out / "epsilon.meta.json").read_text())
        assert meta["calibration"]["sigma"] == 0.05
        assert meta["calibration"]["defaulted"] == ["lambda_minus"]
        assert meta["model"]["q"] == 0.5
        assert "timestamp" in meta
        assert meta["artifacts"] == ["epsilon.csv"]


class TestErrorPaths:
    def test_config_error_exits_2(self, tmp_path, capsys):
        assert run_cli(tmp_path, "[run]\nkind = dance\n") == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_flag_is_usage_error(self):
        with pytest.raises(SystemExit):
            main([])

    def test_repro_refused_without_confirm(self, tmp_path, capsys):
        body = ("[run]\nkind = epsilon\nprofile = repro\n"
                "[model]\nsigma = 0.03\nlambda_minus = 0.001\n"
                "lambda_plus = 1.0\n")
        assert run_cli(tmp_path, body) == 2
        assert "--confirm-long" in capsys.readouterr().err

    def test_repro_runs_with_confirm(self, tmp_path):
        # small explicit horizon keeps the "long" profile instant
        out = tmp_path / "out"
        body = (f"[run]\nkind = epsilon\nprofile = repro\nout = {out}\n"
                + MODEL_SMALL + "sigma = 0.03\nlambda_minus = 0.0\n"
                + "target_rounding = nearest_integer\n" + GRID_SMALL)
        assert run_cli(tmp_path, body, "--confirm-long") == 0
        assert (out / "epsilon.csv").exists()


class TestSimulateKind:
    BODY = ("[run]\nkind = simulate\nseed = 3\npaths = 400\nlog_paths = 6\n"
            + MODEL_SMALL + GRID_SMALL)

    def test_artifacts_and_dp_mc_rows(self, tmp_path):
        out = tmp_path / "out"
        body = f"[run]\nout = {out}\n" + self.BODY[len("[run]\n"):]
        assert run_cli(tmp_path, body) == 0
        lines = read_lines(out / "simulate.csv")
        metrics = dict(ln.split(",") for ln in lines[2:])
        assert metrics["paths"] == "400"
        assert float(metrics["se_payoff_a"]) > 0.0
        assert abs(float(metrics["mean_payoff_a"])
                   - float(metrics["solver_U_a"])) \
            <= 5.0 * float(metrics["se_payoff_a"])
        triggers = sum(int(metrics[f"triggers_{k}"])
                       for k in ("a", "b", "both", "at_T"))
        assert triggers == 400
        log = read_lines(out / "simulate_paths.csv")
        assert log[0].startswith("# ahead simulate_paths v1 fingerprint=")
        assert log[1] == "path_id,t,event,s,n_a,n_b,l_a,l_b"
        assert (out / "simulate.png").exists()
        assert (out / "simulate.meta.json").exists()

    def test_threads_do_not_change_bytes(self, tmp_path):
        outs = []
        for i, threads in enumerate((1, 3)):
            out = tmp_path / f"out{i}"
            body = f"[run]\nout = {out}\n" + self.BODY[len("[run]\n"):]
            assert run_cli(tmp_path, body, "--threads", str(threads),
                           "--no-figures", name=f"run{i}.ini") == 0
            outs.append(out)
        for name in ("simulate.csv", "simulate_paths.csv"):
            a = (outs[0] / name).read_bytes()
            b = (outs[1] / name).read_bytes()
            assert a == b

    def test_rerun_with_warm_cache_is_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        cache = tmp_path / "cache"
        body = (f"[run]\nout = {out}\ncache = {cache}\n"
                + self.BODY[len("[run]\n"):])
        assert run_cli(tmp_path, body, "--no-figures") == 0
        first = (out / "simulate.csv").read_bytes()
        assert any(f.startswith("subgame-") for f in os.listdir(cache))
        assert run_cli(tmp_path, body, "--no-figures") == 0
        assert (out / "simulate.csv").read_bytes() == first


class TestGameKinds:
    def test_game_csv_and_policy_dump(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = game\nout = {out}\n" + MODEL_SMALL
                + GRID_SMALL + "[sweep]\ns_values = -0.01, 0.0, 0.02\n")
        assert run_cli(tmp_path, body, "--emit-policies") == 0
        lines = read_lines(out / "game.csv")
        assert lines[1] == "s,U_a,U_b,U_a_e6,U_b_e6"
        s_col = [float(ln.split(",")[0]) for ln in lines[2:]]
        assert s_col == [-0.01, 0.0, 0.02]
        ua = [float(ln.split(",")[1]) for ln in lines[2:]]
        assert all(np.isfinite(ua))
        with np.load(out / "game_policies.npz") as dump:
            assert "p_a_0" in dump and "up_b_8" in dump
            assert dump["p_a_0"].dtype == np.float32

    def test_duration_kind(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = duration\nout = {out}\n" + MODEL_SMALL
                + GRID_SMALL)
        assert run_cli(tmp_path, body, "--no-figures") == 0
        lines = read_lines(out / "duration.csv")
        assert lines[1] == "s,E_0"
        e0 = [float(ln.split(",")[1]) for ln in lines[2:]]
        assert all(0.0 <= e <= 2.0 for e in e0)
        assert not (out / "duration.png").exists()


class TestSweepKind:
    def test_rows_cover_the_product(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = subgame_sweep\nout = {out}\n" + MODEL_SMALL
                + GRID_SMALL
                + "[sweep]\nx_values = -1.0:1.0:5\nn_plus_values = 0, 2\n")
        assert run_cli(tmp_path, body) == 0
        lines = read_lines(out / "subgame_sweep.csv")
        assert lines[1].startswith("h,q,np_a,np_b,x_b,x_a,g_a,g_b")
        assert len(lines) == 2 + 5 * 2
        first = lines[2].split(",")
        assert float(first[0]) == 4.0 and float(first[1]) == 0.5
        assert (out / "subgame_sweep.png").exists()


class TestBaselineKinds:
    def test_baselines_with_custom_pair(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = baselines\nout = {out}\n" + MODEL_SMALL
                + GRID_SMALL
                + "[sweep]\nv_pairs = 0.2/0.2\nn_plus_values = 1\n")
        assert run_cli(tmp_path, body, "--no-figures") == 0
        lines = read_lines(out / "baselines.csv")
        assert lines[1] == ("v_a,v_b,design,n_hat,V_a,V_b,duration,"
                            "V_a_e6,V_b_e6")
        rows = [ln.split(",") for ln in lines[2:]]
        designs = [r[2] for r in rows]
        assert designs == ["ahead", "periodic(n_hat=1)", "clob"]
        clob = rows[-1]
        assert float(clob[4]) == 0.02 and float(clob[7]) == 20000.0
        assert float(clob[6]) == 5.0

    def test_table4_overrides_q(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = table4\nout = {out}\n" + MODEL_SMALL
                + GRID_SMALL + "[sweep]\nn_plus_values = 1\n")
        assert run_cli(tmp_path, body, "--no-figures") == 0
        meta = json.loads((out / "table4.meta.json").read_text())
        assert meta["model"]["q"] == 0.005
        lines = read_lines(out / "table4.csv")
        pairs = {(ln.split(",")[0], ln.split(",")[1]) for ln in lines[2:]}
        assert len(pairs) == 5 and len(lines) == 2 + 5 * 3


class TestFormats:
    def test_json_format(self, tmp_path):
        out = tmp_path / "out"
        body = (f"[run]\nkind = epsilon\nout = {out}\nformat = json\n"
                + MODEL_SMALL + "target_rounding = nearest_integer\n"
                + GRID_SMALL)
        assert run_cli(tmp_path, body) == 0
        doc = json.loads((out / "epsilon.json").read_text())
        assert doc["columns"] == ["n_hat", "eps_a", "eps_b", "eps_a_e6",
                                  "eps_b_e6"]
        assert doc["rows"][0][0] == 2
        assert doc["comment"].startswith("ahead epsilon v1 fingerprint=")

    def test_cache_env_fallback(self, tmp_path, monkeypatch):
        cache = tmp_path / "envcache"
        monkeypatch.setenv("AHEAD_CACHE_DIR", str(cache))
        out = tmp_path / "out"
        body = (f"[run]\nkind = epsilon\nout = {out}\n" + MODEL_SMALL
                + "target_rounding = nearest_integer\n" + GRID_SMALL)
        assert run_cli(tmp_path, body) == 0
        assert any(f.startswith("subgame-") for f in os.listdir(cache))
