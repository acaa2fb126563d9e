import json
import subprocess
import sys
from pathlib import Path

import pytest

from adtradeoffs.harness.cli import EXIT_CLAIM, EXIT_DATA, EXIT_OK, EXIT_USAGE, main

DATA = Path(__file__).resolve().parent.parent / "data"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sweep_to_stdout(capsys):
    code, out, _ = run(["sweep", "--scenario", "uniform8x3", "--rule", "standard",
                        "--grid", "r=0:0.5:3", "--samples", "500"], capsys)
    assert code == EXIT_OK
    assert len(out.splitlines()) == 4


def test_sweep_file_identical_across_workers(tmp_path, capsys):
    files = []
    for k in (1, 4, 8):
        f = tmp_path / f"w{k}.csv"
        code, _, _ = run(["sweep", "--scenario", "uniform8x3", "--rule", "twoparam",
                          "--grid", "r=0:0.3:2", "--grid", "rho=0,0.1", "--samples", "4000",
                          "--batch", "500", "--seed", "11", "--workers", str(k), "--out", str(f)],
                         capsys)
        assert code == EXIT_OK
        files.append(f.read_bytes())
    assert files[0] == files[1] == files[2]


def test_frontier(capsys):
    code, out, _ = run(["frontier", "--scenario", "uniform8x3", "--rule", "impression",
                        "--grid", "rho=0:0.8:5", "--samples", "500"], capsys)
    assert code == EXIT_OK
    assert out.startswith("rule,")


def test_frontier_bad_axes(capsys):
    code, _, err = run(["frontier", "--scenario", "uniform8x3", "--rule", "impression",
                        "--axes", "foo,bar", "--samples", "10"], capsys)
    assert code == EXIT_USAGE and "--axes" in err


def test_adcap(capsys):
    code, out, _ = run(["adcap", "--config", str(DATA / "adcap_discrete.json")], capsys)
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["exact"] and abs(rep["impressions"] - 0.6) < 1e-12


def test_adcap_zero_cap_is_data_error(capsys):
    code, _, err = run(["adcap", "--config", str(DATA / "adcap_discrete.json"), "--theta", "0"],
                       capsys)
    assert code == EXIT_DATA and "error" in err


def test_sne_search(tmp_path, capsys):
    sc = tmp_path / "t.json"
    sc.write_text(json.dumps({"classes": [{"class": 0, "value": 3}, {"class": 0, "value": 2}],
                              "templates": [{"0": [1.0, 0.5]}]}))
    code, out, _ = run(["sne-search", "--scenario", str(sc), "--grid", "7"], capsys)
    assert code == EXIT_OK
    assert json.loads(out)["found"] is True


def test_sne_search_needs_templates(capsys):
    code, _, err = run(["sne-search", "--scenario", "uniform8x3"], capsys)
    assert code == EXIT_DATA and "classes" in err


def test_replay(capsys):
    code, out, _ = run(["replay", "--log", str(DATA / "replay_thin.csv"), "--rule", "standard",
                        "--grid", "r=0,0.5", "--slots", "1,0.6,0.36"], capsys)
    assert code == EXIT_OK
    assert len(out.splitlines()) == 3


def test_replay_needs_slots(capsys):
    code, _, _ = run(["replay", "--log", str(DATA / "replay_thin.csv"), "--rule", "standard"],
                     capsys)
    assert code == EXIT_USAGE


def test_counterexample_reproduced(tmp_path, capsys):
    out_file = tmp_path / "ce.json"
    code, out, _ = run(["counterexample", "non-implementation", "--out", str(out_file)], capsys)
    assert code == EXIT_OK
    assert "verdict: reproduced" in out
    assert json.loads(out_file.read_text())["templates"]


def test_counterexample_not_reproduced(capsys):
    code, out, _ = run(["counterexample", "tc-unoptimal", "--param", "m=4", "--param", "eps=1e-5"],
                       capsys)
    assert code == EXIT_CLAIM and "not reproduced" in out


@pytest.mark.parametrize("argv", [[], ["nope"], ["counterexample", "bogus"],
                                  ["sweep", "--scenario", "uniform8x3"],
                                  ["sweep", "--scenario", "uniform8x3", "--rule", "vcg"],
                                  ["sne-search", "--scenario", "x", "--grid", "many"]])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == EXIT_USAGE
    assert "usage:" in err


@pytest.mark.parametrize("argv", [
    ["sweep", "--scenario", "/nonexistent.json", "--rule", "standard"],
    ["sweep", "--scenario", "uniform8x3", "--rule", "standard", "--grid", "rho=1"],
    ["sweep", "--scenario", "uniform8x3", "--rule", "standard", "--samples", "0"],
    ["replay", "--log", "/nonexistent.csv", "--rule", "standard", "--slots", "1"],
    ["counterexample", "tc-unoptimal", "--param", "m=2"],
])
def test_data_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == EXIT_DATA
    assert err.startswith("error:")


def test_console_script_exit_code():
    r = subprocess.run([sys.executable, "-m", "adtradeoffs.harness.cli", "counterexample", "nope"],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
