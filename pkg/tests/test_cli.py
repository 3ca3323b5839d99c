import json
import subprocess
import sys

import numpy as np
import pytest

from hfu.cli import main, read_csv, write_csv
from hfu.errors import ConfigError


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("stat", ["u_stat", "gini", "variance", "lp_test", "wilcoxon"])
def test_simulate_then_analyze_round_trip(stat, tmp_path, capsys):
    csv_path = tmp_path / "path.csv"
    code, out, _ = _run(["simulate", "--n", "300", "--seed", "4", "--model", "gbm_vol",
                         "--stat", stat, "--emit-csv", str(csv_path)], capsys)
    assert code == 0
    sim = json.loads(out)
    code, out, _ = _run(["analyze", "--input", str(csv_path), "--n", "300", "--stat", stat],
                        capsys)
    assert code == 0
    ana = json.loads(out)
    a, b = sim["report"]["statistic"], ana["report"]["statistic"]
    assert b == pytest.approx(a, rel=1e-10, abs=1e-12)


def test_simulate_reports_oracle(capsys):
    code, out, _ = _run(["simulate", "--n", "500", "--seed", "1", "--stat", "u_stat",
                         "--kernel", "sum_of_squares"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["report"]["oracle"]["limit_u"] == pytest.approx(2.0, rel=1e-12)
    assert res["observations"] == 501
    assert res["config"]["n"] == 500


def test_u_stat_with_hypothesised_limit(capsys):
    code, out, _ = _run(["simulate", "--n", "400", "--seed", "2", "--stat", "u_stat",
                         "--kernel", "sum_of_squares", "--limit", "2"], capsys)
    rep = json.loads(out)["report"]
    assert code == 0 and rep["decision"] in ("reject", "fail_to_reject")
    assert 0 <= rep["p_value"] <= 1


def test_analyze_wilcoxon_reports_t_hat(tmp_path, capsys):
    n = 390
    rng = np.random.default_rng(0)
    x = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n) / np.sqrt(n))))
    csv_path = tmp_path / "ticks.csv"
    write_csv(str(csv_path), np.arange(n + 1) / n, x)
    code, out, _ = _run(["analyze", "--input", str(csv_path), "--n", str(n),
                         "--stat", "wilcoxon", "--delta", "0.05"], capsys)
    assert code == 0
    rep = json.loads(out)["report"]
    assert rep["test"] == "wilcoxon" and 0.05 <= rep["details"]["t_hat"] <= 0.95


def test_analyze_missing_n(tmp_path, capsys):
    csv_path = tmp_path / "p.csv"
    write_csv(str(csv_path), [0, 0.5, 1], [0, 1, 0])
    code, _, err = _run(["analyze", "--input", str(csv_path), "--stat", "gini"], capsys)
    assert code == 2
    payload = json.loads(err)
    assert "IrregularGrid or missing frequency" in payload["message"]
    assert payload["exit_code"] == 2


def test_headerless_csv(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("0,0\n0.5,1.25\n1,2\n")
    assert read_csv(str(p)) == [(0.0, 0.0), (0.5, 1.25), (1.0, 2.0)]
    p.write_text("time,value\n0,0\nbad,1\n")
    with pytest.raises(ConfigError):
        read_csv(str(p))


def test_mc_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "lln.toml"
    cfg.write_text('model = "constant"\nkernel = "sum_of_squares"\n\n'
                   '[mc]\ntarget = "lln"\nn_values = [100, 200]\nreplications = 5\n')
    raw = tmp_path / "raw.csv"
    code, out, _ = _run(["mc", "--config", str(cfg), "--raw-csv", str(raw)], capsys)
    assert code == 0
    res = json.loads(out)
    assert [r["n"] for r in res["per_n"]] == [100, 200]
    assert raw.read_text().startswith("n,seed")


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('n = 100\nseed = 1\nstatistic = "gini"\n[model]\nname = "constant"\nsigma = 2.0\n')
    code, out, _ = _run(["simulate", "--config", str(cfg), "--n", "120", "--sigma", "3"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["n"] == 120 and res["model_params"]["sigma"] == 3.0
    assert res["report"]["test"] == "gini"


def test_output_file(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, _ = _run(["limits", "--model", "piecewise_constant",
                         "--model-param", "breaks=[0.5]", "--model-param", "sigmas=[1,2]",
                         "-o", str(out_path)], capsys)
    assert code == 0 and out == ""
    res = json.loads(out_path.read_text())
    assert res["limit_u"] == pytest.approx(5.0, rel=1e-12)
    assert res["analytic_variance"]["v"] > 0


def test_limits_constant(capsys):
    code, out, _ = _run(["limits", "--kernel", "sum_of_squares"], capsys)
    res = json.loads(out)
    assert code == 0
    assert res["analytic_variance"]["v"] == pytest.approx(8.0, rel=1e-10)
    assert res["wilcoxon_limit"] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("argv", [
    ["simulate", "--n", "notanumber"],
    ["frobnicate"],
    [],
    ["simulate", "--n", "50", "--model", "heston"],
    ["simulate", "--n", "50", "--kernel", "triangle"],
])
def test_config_errors_exit_2(argv, capsys):
    code, _, err = _run(argv, capsys)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 2


def test_bad_toml_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("n = = 3\n")
    code, _, err = _run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2 and "invalid TOML" in json.loads(err)["message"]


def test_vanishing_volatility_exit_3(capsys):
    code, _, err = _run(["simulate", "--n", "20", "--model", "piecewise_constant",
                         "--model-param", "breaks=[0.5]", "--model-param", "sigmas=[1,0]"],
                        capsys)
    assert code == 3 and json.loads(err)["error"] == "VolVanished"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hfu", "limits"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "limits"
