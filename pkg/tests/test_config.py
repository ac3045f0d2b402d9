import json
import logging

import numpy as np
import pytest

from jointopt import ConfigError, build_problem, config_from_dict, load_config
from jointopt.config import joint_bound_arrays


def _base_two_part(**overrides):
    raw = {
        "parts": [
            {"nx": 200, "ny": 100, "origin": [0, 0]},
            {"nx": 200, "ny": 100, "origin": [100, 0]},
        ],
        "supports": [{"part": 0, "x": 0.0, "fix": "xy"}],
        "loads": [{"part": 1, "x": 300.0, "y": 50.0, "force": [0, -1]}],
        "joints": {
            "type": "bolt",
            "connected_parts": [0, 1],
            "count": 2,
            "positions": [[150, 25], [150, 75]],
            "k_c": 10.0,
        },
        "constraints": {"volume": {"scope": "per_part", "limit": 0.3}},
        "schedule": {"iterations": 1},
    }
    raw.update(overrides)
    return raw


def test_bolted_cantilever_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_base_two_part()))
    config = load_config(path)
    assert len(config.parts) == 2
    assert config.parts[0].nx == 200 and config.parts[0].ny == 100
    assert config.volume.scope == "per_part"
    assert config.volume.limit == 0.3
    # bolt preset resolved
    assert config.joints.nds_mode == "ring"
    assert config.joints.solid_radius == 10.0
    assert config.joints.hole_radius == 4.0
    assert config.joints.pattern_radii == [6.0, 8.0]

    assembly, rho0, x0 = build_problem(config)
    assert assembly.n_e == 40000
    np.testing.assert_allclose(rho0, 0.3)
    np.testing.assert_allclose(x0, [[150, 25], [150, 75]])
    # default bounds: 100x100 overlap inset by the outer radius 10
    lower, upper = joint_bound_arrays(assembly)
    np.testing.assert_allclose(lower, [[110, 10], [110, 10]])
    np.testing.assert_allclose(upper, [[190, 90], [190, 90]])


def test_missing_joints_is_single_part_run():
    raw = _base_two_part()
    raw["parts"] = [{"nx": 30, "ny": 10, "origin": [0, 0]}]
    raw["loads"] = [{"part": 0, "x": 30.0, "y": 5.0, "force": [0, -1]}]
    raw.pop("joints")
    raw["constraints"] = {"volume": {"scope": "global", "limit": 0.4}}
    config = config_from_dict(raw)
    assert config.n_joints == 0
    assembly, rho0, x0 = build_problem(config)
    assert assembly.n_j == 0
    assert x0.shape == (0, 2)


def test_volume_limit_out_of_range():
    raw = _base_two_part()
    raw["constraints"] = {"volume": {"scope": "global", "limit": 1.4}}
    with pytest.raises(ConfigError, match="volume.limit"):
        config_from_dict(raw)


def test_selector_must_match_nodes():
    raw = _base_two_part()
    raw["supports"] = [{"part": 0, "x": -5.0, "fix": "xy"}]
    config = config_from_dict(raw)
    with pytest.raises(ConfigError, match="supports"):
        build_problem(config)


def test_field_level_messages():
    raw = _base_two_part()
    raw["parts"][0]["nu"] = 0.7
    with pytest.raises(ConfigError, match=r"parts\[0\]"):
        config_from_dict(raw)

    raw = _base_two_part()
    raw["supports"][0]["fix"] = "z"
    with pytest.raises(ConfigError, match=r"supports\[0\].fix"):
        config_from_dict(raw)

    raw = _base_two_part()
    raw["joints"]["positions"] = [[150, 25], [500, 75]]
    with pytest.raises(ConfigError, match=r"positions\[1\]"):
        config_from_dict(raw)


def test_unknown_joint_preset():
    raw = _base_two_part()
    raw["joints"]["type"] = "rivet"
    with pytest.raises(ConfigError, match="type"):
        config_from_dict(raw)


def test_failsafe_requires_joints_and_valid_mode():
    raw = _base_two_part()
    raw["objective"] = {"kind": "failsafe", "failure_mode": 3}
    with pytest.raises(ConfigError, match="failure_mode"):
        config_from_dict(raw)

    raw = _base_two_part()
    raw.pop("joints")
    raw["objective"] = {"kind": "failsafe", "failure_mode": 1}
    with pytest.raises(ConfigError, match="objective"):
        config_from_dict(raw)


def test_overlapping_nds_warns_without_distance_constraint(caplog):
    raw = _base_two_part()
    raw["joints"]["positions"] = [[150, 40], [150, 50]]  # discs overlap
    with caplog.at_level(logging.WARNING):
        config_from_dict(raw)
    assert any("overlap" in rec.message for rec in caplog.records)


def test_beta_schedule_lookup():
    config = config_from_dict(_base_two_part())
    sched = config.schedule
    assert sched.beta_at(0) == 2.0
    assert sched.beta_at(49) == 2.0
    assert sched.beta_at(50) == 4.0
    assert sched.beta_at(199) == 8.0


def test_schedule_validation():
    raw = _base_two_part()
    raw["schedule"] = {"iterations": 1, "beta_steps": [[10, 2.0]]}
    with pytest.raises(ConfigError, match="beta_steps"):
        config_from_dict(raw)
    raw["schedule"] = {"iterations": -1}
    with pytest.raises(ConfigError, match="iterations"):
        config_from_dict(raw)


def test_defaults_are_filled():
    config = config_from_dict(_base_two_part())
    assert config.alpha == 10.0
    assert config.schedule.penalty == 3.0
    assert config.schedule.filter_radius == 4.0
    assert config.emin_ratio == 1e-9
    assert config.objective.degradation == 1e-6
    assert config.objective.kind == "nominal"


def test_distance_constraint_needs_two_joints():
    raw = _base_two_part()
    raw["joints"]["count"] = 1
    raw["joints"]["positions"] = [[150, 25]]
    raw["constraints"]["min_distance"] = {"d0": 20.0}
    with pytest.raises(ConfigError, match="min_distance"):
        config_from_dict(raw)


def test_missing_config_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/path.json")


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(path)


def test_load_split_option():
    raw = _base_two_part()
    raw["loads"] = [
        {"part": 1, "x": 300.0, "y": [40.0, 60.0], "force": [0, -1], "split": True}
    ]
    config = config_from_dict(raw)
    assembly, _, _ = build_problem(config)
    assert assembly.f_m.sum() == pytest.approx(-1.0)
