"""Command-line harness: scenarios, sweeps, replay, ad caps and counterexamples."""
from .config import PRESETS, ScenarioConfig, load_scenario, scenario_from_dict
from .replay import ReplayLog, ReplayRecord, ReplayRow, read_log, replay
from .runners import adcap_from_dict, load_adcap, run_adcap, run_counterexample
from .sweep import RULE_PARAMS, SweepRow, frontier_rows, make_rule, parse_grid, read_csv, run_sweep, write_csv
