import io
import json
from pathlib import Path

import numpy as np
import pytest

from adtradeoffs.errors import ConfigError
from adtradeoffs.harness.config import load_scenario, scenario_from_dict
from adtradeoffs.harness.replay import ReplayRow, read_log, replay, replay_point
from adtradeoffs.harness.runners import adcap_from_dict, parse_params, run_adcap, run_counterexample
from adtradeoffs.harness.sweep import (
    SweepRow,
    frontier_rows,
    make_rule,
    parse_grid,
    read_csv,
    run_sweep,
    write_csv,
)
from adtradeoffs.objectives import LOWEST_SNE_GSP, EstimatorConfig, outcome_metrics
from adtradeoffs.position_auction import BidderProfile, Standard, priced_outcome

DATA = Path(__file__).resolve().parent.parent / "data"


class TestConfig:
    def test_uniform_preset(self):
        cfg = load_scenario("uniform8x3")
        sc = cfg.require_market()
        assert sc.n_bidders == 8
        assert sc.slots.effects == (1.0, 0.6, 0.36)

    def test_lahaie_pennock_preset(self):
        sc = load_scenario("lahaie-pennock").require_market()
        m = sc.expanded()[0]
        assert m.value.kind == "lognormal" and m.weight.kind == "lognormal"
        assert m.correlation > 0

    def test_error_names_field(self):
        data = {"slots": [1.0], "bidders": [{"value": {"kind": "uniform", "lo": 0, "hi": "x"}}]}
        with pytest.raises(ConfigError, match=r"bidders\[0\]\.value\.hi"):
            scenario_from_dict(data, "bad.json")

    def test_missing_distribution_parameter(self):
        data = {"slots": [1.0], "bidders": [{"value": {"kind": "beta", "a": 2}}]}
        with pytest.raises(ConfigError, match=r"bidders\[0\]\.value\.b"):
            scenario_from_dict(data)

    def test_invalid_distribution_values(self):
        data = {"slots": [1.0], "bidders": [{"value": {"kind": "uniform", "lo": 1, "hi": 0}}]}
        with pytest.raises(ConfigError, match=r"bidders\[0\]\.value"):
            scenario_from_dict(data)

    def test_needs_bidders_or_classes(self):
        with pytest.raises(ConfigError):
            scenario_from_dict({"name": "empty"})
        with pytest.raises(ConfigError, match="slots"):
            scenario_from_dict({"bidders": [{"value": {"kind": "uniform", "lo": 0, "hi": 1}}]})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{ not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_scenario(p)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="no scenario file"):
            load_scenario("/nonexistent/file.json")

    def test_template_scenario(self):
        cfg = scenario_from_dict({"classes": [{"class": 0, "value": 3}, {"class": 1, "value": 2}],
                                  "templates": [{"0": [1.0], "1": [0.5]}]})
        assert cfg.scenario is None
        assert cfg.require_templates().n == 2
        with pytest.raises(ConfigError):
            cfg.require_market()


class TestGrid:
    def test_range_and_list(self):
        g = parse_grid(["r=0:1:3", "rho=0,0.5"])
        assert len(g) == 6
        assert g[0] == {"r": 0.0, "rho": 0.0}
        assert g[-1] == {"r": 1.0, "rho": 0.5}

    def test_semicolon(self):
        assert len(parse_grid("r=0:1:10;rho=0:1:10")) == 100

    def test_default(self):
        assert parse_grid(None) == [{}]

    @pytest.mark.parametrize("bad", ["r", "r=0:1", "r=0:1:0", "r=a,b", "r=1;r=2"])
    def test_errors(self, bad):
        with pytest.raises(ConfigError):
            parse_grid(bad)

    def test_rule_params(self):
        with pytest.raises(ConfigError):
            make_rule("standard", {"rho": 1.0})
        with pytest.raises(ConfigError):
            make_rule("nope", {})
        assert make_rule("twoparam", {"r": 0.1, "rho": 0.2}).rho == 0.2


SC = load_scenario("uniform8x3").require_market()


class TestSweep:
    def test_single_point(self):
        rows = run_sweep(SC, "standard", parse_grid("r=0.2"), est=EstimatorConfig(1000, 0))
        buf = io.StringIO()
        write_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 2
        assert lines[0] == ",".join(SweepRow.COLUMNS)

    def test_twoparam_grid_size(self):
        rows = run_sweep(SC, "twoparam", parse_grid("r=0:0.5:10;rho=0:0.5:10"),
                         est=EstimatorConfig(200, 0, workers=4))
        assert len(rows) == 100

    def test_impressions_non_increasing_in_r(self):
        rows = run_sweep(SC, "standard", parse_grid("r=0:1:11"), est=EstimatorConfig(5000, 3))
        imp = [r.impressions for r in rows]
        assert np.all(np.diff(imp) <= 0)

    def test_csv_round_trip(self):
        rows = run_sweep(SC, "subtractive", parse_grid("r=0,0.3"), est=EstimatorConfig(500, 1))
        buf = io.StringIO()
        write_csv(rows, buf)
        back = read_csv(io.StringIO(buf.getvalue()))
        assert back == rows

    def test_byte_identical_across_workers(self):
        outs = []
        for k in (1, 4, 8):
            rows = run_sweep(SC, "twoparam", parse_grid("r=0:0.4:3;rho=0,0.2"),
                             LOWEST_SNE_GSP, EstimatorConfig(3000, 7, 512, k))
            buf = io.StringIO()
            write_csv(rows, buf)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1] == outs[2]

    def test_unsupported_pair_marked(self):
        sc = load_scenario("lahaie-pennock").require_market()
        rows = run_sweep(sc, "optimal", [{"alpha": 1.0, "beta": 0.0}], LOWEST_SNE_GSP,
                         EstimatorConfig(100, 0))
        assert rows[0].error and rows[0].impressions == ""

    def test_frontier_rows(self):
        rows = run_sweep(SC, "impression", parse_grid("rho=0:0.8:9"), est=EstimatorConfig(3000, 0))
        front = frontier_rows(rows)
        assert 0 < len(front) <= len(rows)
        xs = [r.impressions for r in front]
        assert xs == sorted(xs)


def write_log(path, lines, header=True):
    text = ("auction_id,bidder_id,bid,weight\n" if header else "") + "\n".join(lines) + "\n"
    path.write_text(text)
    return path


class TestReplay:
    def test_single_auction(self, tmp_path):
        log = read_log(write_log(tmp_path / "l.csv", ["a,x,3,1", "a,y,2,1", "a,z,1,1"]))
        rows = replay(log, "standard", [1.0, 0.5], [{"r": 0.0}])
        out = priced_outcome(Standard(0), [BidderProfile(3), BidderProfile(2), BidderProfile(1)],
                             [1.0, 0.5], "gsp")
        m = outcome_metrics(out)
        assert m.revenue == pytest.approx(2.5)
        assert rows[0].revenue == pytest.approx(m.revenue)
        assert rows[0].clicks == pytest.approx(1.5)
        assert rows[0].impressions == 2

    def test_empty_log(self, tmp_path):
        log = read_log(write_log(tmp_path / "e.csv", [], header=True))
        assert log.n_auctions == 0
        assert replay(log, "standard", [1.0], [{}]) == []

    def test_malformed_lines_counted(self, tmp_path):
        log = read_log(write_log(tmp_path / "m.csv", ["a,x,3,1", "a,y,oops,1", "bad", "b,x,-1,1",
                                                      "b,y,2,1"]))
        assert log.skipped == 3
        assert log.n_auctions == 2

    def test_headerless(self, tmp_path):
        log = read_log(write_log(tmp_path / "h.csv", ["a,x,3,1", "a,y,2,1"], header=False))
        assert log.n_auctions == 1 and log.skipped == 0

    def test_impressions_non_increasing_in_rho(self):
        log = read_log(DATA / "replay_thick.csv")
        rows = replay(log, "impression", [1.0, 0.6, 0.36], parse_grid("rho=0:2:9"), workers=4)
        imp = [r.impressions for r in rows]
        assert np.all(np.diff(imp) <= 0)

    def test_optimal_rejected(self, tmp_path):
        log = read_log(write_log(tmp_path / "l.csv", ["a,x,3,1"]))
        with pytest.raises(ConfigError):
            replay(log, "optimal", [1.0], [{}])

    def test_missing_log(self):
        with pytest.raises(ConfigError):
            read_log("/nonexistent.csv")


class TestRunners:
    def test_adcap_uniform(self):
        p = adcap_from_dict(json.loads((DATA / "adcap_uniform.json").read_text()))
        rep = run_adcap(p, est=EstimatorConfig(200_000, 0))
        assert rep["lambda"] == pytest.approx(0.5, abs=5e-3)

    def test_adcap_slack(self):
        p = adcap_from_dict(json.loads((DATA / "adcap_uniform.json").read_text()))
        assert run_adcap(p, theta=1.0, est=EstimatorConfig(10_000, 0))["lambda"] == 0.0

    def test_adcap_zero_cap(self):
        from adtradeoffs.errors import DegenerateInputError
        p = adcap_from_dict(json.loads((DATA / "adcap_uniform.json").read_text()))
        with pytest.raises(DegenerateInputError):
            run_adcap(p, theta=0.0)

    def test_adcap_schema_path(self):
        with pytest.raises(ConfigError, match=r"terms\[0\]"):
            adcap_from_dict({"theta": 0.5, "terms": [{"q": 1, "s": 1}]})

    def test_params(self):
        assert parse_params(["m=10", "eps=1e-6", "selection=second-highest"]) == {
            "m": 10, "eps": 1e-6, "selection": "second-highest"}
        with pytest.raises(ConfigError):
            parse_params(["m"])

    def test_counterexample(self):
        assert run_counterexample("non-implementation").reproduced
        with pytest.raises(ConfigError):
            run_counterexample("nope")
        with pytest.raises(ConfigError):
            run_counterexample("tc-unoptimal", {"bogus": 1})
