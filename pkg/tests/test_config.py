from __future__ import annotations

import argparse
import json
from pathlib import Path

import pytest

from nfp_assoc.channel import db_to_linear
from nfp_assoc.config import (
    RunConfig,
    add_config_flags,
    build_config,
    flag_name,
    load_config,
    overrides_from_args,
)
from nfp_assoc.errors import ConfigError
from nfp_assoc.experiments import SweepKind


def parse_flags(argv):
    parser = argparse.ArgumentParser(allow_abbrev=False)
    add_config_flags(parser)
    return overrides_from_args(parser.parse_args(argv))


def test_defaults_describe_the_urban_scenario():
    config = build_config()
    scenario = config.scenario.to_scenario_config()
    assert (scenario.n_sc, scenario.n_d, scenario.area) == (30, 3, 16e6)
    limits = config.limits.to_limits(3)
    assert limits.backhaul_rate == 2.9e9
    assert limits.nfp_bandwidth == (1e9, 1e9, 1e9)
    assert limits.nfp_max_links == (16, 16, 16)
    assert limits.sinr_min == pytest.approx(db_to_linear(-5.0))
    assert config.environment.to_env().eta_nlos == 20.0
    assert config.solver.solver_ids() == ["cmca", "dmca", "exact"]


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="scenario.n_cells"):
        build_config({"scenario": {"n_cells": 30}})
    with pytest.raises(ConfigError):
        build_config({"plot": {}})


def test_invalid_value_names_the_field():
    with pytest.raises(ConfigError, match="scenario.area_side"):
        build_config({"scenario": {"area_side": -4000}})
    with pytest.raises(ConfigError, match="solver.weights"):
        build_config({"solver": {"weights": "1"}})


def test_per_nfp_limit_lists():
    config = build_config({"limits": {"nfp_bandwidth": [1e9, 2e9, 3e9], "nfp_max_links": [4, 8, 16]}})
    limits = config.limits.to_limits(3)
    assert limits.nfp_bandwidth == (1e9, 2e9, 3e9)
    assert limits.nfp_max_links == (4, 8, 16)
    with pytest.raises(ConfigError):
        config.limits.to_limits(2)


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scenario": {"seed": 3, "n_sc": 12}, "solver": {"solver": "dmca"}}))
    overrides = parse_flags(["--seed", "9", "--weights", "2,1", "--rate-choices", "30e6, 60e6"])
    config = load_config(path, overrides)
    assert config.scenario.seed == 9
    assert config.scenario.n_sc == 12
    assert config.scenario.rate_choices == [30e6, 60e6]
    assert config.solver.solver_ids() == ["dmca"]
    assert config.solver.to_solver_options().weights.w_bandwidth == 2.0


def test_exact_bound_flag_reaches_solver_options():
    config = build_config(None, parse_flags(["--exact-bound", "cardinality"]))
    assert config.solver.to_solver_options().exact_bound == "cardinality"
    assert build_config().solver.to_solver_options().exact_bound == "relaxed"
    with pytest.raises(ConfigError, match="solver.exact_bound"):
        build_config({"solver": {"exact_bound": "loose"}})


def test_scalar_or_list_flag():
    assert parse_flags(["--nfp-bandwidth", "2e9"]) == {"limits": {"nfp_bandwidth": "2e9"}}
    assert parse_flags(["--nfp-max-links", "4,8,16"]) == {"limits": {"nfp_max_links": ["4", "8", "16"]}}
    config = build_config(None, parse_flags(["--nfp-max-links", "4,8,16", "--nfp-bandwidth", "2e9"]))
    assert config.limits.to_limits(3).nfp_max_links == (4, 8, 16)
    assert config.limits.to_limits(3).nfp_bandwidth == (2e9, 2e9, 2e9)


def test_unset_flags_leave_no_overrides():
    assert parse_flags([]) == {}


def test_every_field_has_a_flag():
    parser = argparse.ArgumentParser(allow_abbrev=False)
    add_config_flags(parser)
    flags = {opt for action in parser._actions for opt in action.option_strings}
    for section in ("environment", "scenario", "limits", "solver", "sweep", "output"):
        for name in type(getattr(RunConfig(), section)).model_fields:
            assert flag_name(name) in flags


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(listed)


def test_sweep_spec_from_config():
    config = build_config({
        "scenario": {"seed": 1000, "n_sc": 10},
        "limits": {"nfp_bandwidth": 2e9, "nfp_max_links": 30},
        "sweep": {"kind": "rate_ratio", "grid": [0.5, 1.0], "scenarios": 4, "solvers": ["exact"], "workers": 2},
    })
    spec = config.to_sweep_spec()
    assert spec.kind is SweepKind.RATE_RATIO
    assert spec.ratio_grid == (0.5, 1.0)
    assert spec.seeds == [1000, 1001, 1002, 1003]
    assert spec.solvers == ("exact",)
    assert spec.base_limits.nfp_bandwidth == (2e9, 2e9, 2e9)
    assert spec.workers == 2


def test_timing_spec_ignores_grid():
    config = build_config({"sweep": {"kind": "timing", "scenarios": 2}})
    assert config.to_sweep_spec().ratio_grid == ()


def test_bundled_run_configs_validate():
    inputs = Path(__file__).resolve().parent.parent / "input"
    for path in sorted(inputs.glob("*.json")):
        load_config(path)
