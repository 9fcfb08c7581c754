"""Config parsing, validation, and the canonical hash."""

import math
from dataclasses import replace

import pytest

from failsafe.config import (
    DatasetConfig,
    PlannerConfig,
    SimConfig,
    config_from_mapping,
    config_sha256,
    default_config,
    load_config,
    parse_failure_entry,
    with_overrides,
)
from failsafe.errors import ConfigError


class TestDefaults:
    def test_motion_caps(self):
        cfg = default_config()
        assert cfg.sim.max_ee_speed == 0.01
        assert cfg.sim.max_ee_angular == 0.1
        assert cfg.sim.max_gripper_rate == 0.2

    def test_grasp_and_contact(self):
        cfg = default_config()
        assert cfg.sim.grasp_threshold == 0.35
        assert cfg.sim.release_threshold == 0.65
        assert cfg.sim.grasp_radius == 0.01
        assert cfg.sim.contact_radius == 0.025
        assert cfg.sim.grasp_align_tol == 0.5

    def test_loop_settings(self):
        cfg = default_config()
        assert cfg.supervisor.cadence == 10
        assert cfg.supervisor.settle_steps == 10
        assert cfg.verifier.budget_slack == 0.25
        assert cfg.dataset.failure_to_gt_ratio == 2.3
        assert cfg.dataset.candidates_per_case == 5

    def test_shipped_failure_tables(self):
        cfg = default_config()
        assert len(cfg.tasks) == 6
        for task_id, entries in cfg.tasks.items():
            assert entries, task_id
        modes = {e.mode for e in cfg.tasks["stack_cube"]}
        assert modes == {"translation", "rotation", "no_ops"}

    def test_shipped_harness_faults(self):
        cfg = default_config()
        assert set(cfg.supervisor.faults) == set(cfg.tasks)

    def test_push_uses_longer_stages(self):
        cfg = default_config()
        assert cfg.planner.stage_steps("push_cube") == 60
        assert cfg.planner.stage_steps("pick_cube") == 40


class TestFailureEntryParsing:
    def base(self, **kw):
        raw = {"mode": "translation", "axis": "x", "range": [0.03, 0.1],
               "stages": ["grasp"]}
        raw.update(kw)
        return raw

    def test_translation_needs_axis(self):
        with pytest.raises(ConfigError, match="axis"):
            parse_failure_entry(self.base(axis=None), "t")

    def test_no_ops_rejects_axis(self):
        raw = {"mode": "no_ops", "axis": "x", "range": [10, 20], "stages": ["lift"]}
        with pytest.raises(ConfigError, match="axis"):
            parse_failure_entry(raw, "t")

    def test_rotation_axis_names(self):
        raw = {"mode": "rotation", "axis": "x", "range": [0.5, 0.7], "stages": ["g"]}
        with pytest.raises(ConfigError, match="axis"):
            parse_failure_entry(raw, "t")
        raw["axis"] = "roll"
        assert parse_failure_entry(raw, "t").axis == "roll"

    def test_degrees_convert_to_radians(self):
        raw = {"mode": "rotation", "axis": "pitch", "range": [30, 45],
               "unit": "deg", "stages": ["grasp"]}
        entry = parse_failure_entry(raw, "t")
        assert entry.lo == pytest.approx(math.radians(30))
        assert entry.hi == pytest.approx(math.radians(45))

    def test_non_positive_magnitude(self):
        with pytest.raises(ConfigError, match="non-positive magnitude"):
            parse_failure_entry(self.base(range=[0.0, 0.1]), "t")

    def test_inverted_range(self):
        with pytest.raises(ConfigError, match="inverted range"):
            parse_failure_entry(self.base(range=[0.2, 0.1]), "t")

    def test_no_ops_duration_must_be_integer(self):
        raw = {"mode": "no_ops", "range": [10.5, 20], "stages": ["lift"]}
        with pytest.raises(ConfigError, match="integer"):
            parse_failure_entry(raw, "t")

    def test_empty_stages(self):
        with pytest.raises(ConfigError, match="stages"):
            parse_failure_entry(self.base(stages=[]), "t")

    def test_unknown_entry_key_is_named(self):
        with pytest.raises(ConfigError, match="wobble"):
            parse_failure_entry(self.base(wobble=3), "t")


class TestMappingValidation:
    def test_unknown_section_key_is_named(self):
        with pytest.raises(ConfigError, match="max_ee_sped"):
            config_from_mapping({"sim": {"max_ee_sped": 0.5}})

    def test_unknown_task_id(self):
        with pytest.raises(ConfigError, match="juggle_cube"):
            config_from_mapping({"tasks": {"juggle_cube": {"failures": []}}})

    def test_bool_is_not_a_number(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"sim": {"max_ee_speed": True}})

    def test_stage_steps_below_minimum(self):
        with pytest.raises(ConfigError, match="min_stage_steps"):
            config_from_mapping({"planner": {"steps_per_stage": 5}})

    def test_grasp_offset_must_sit_inside_radius(self):
        with pytest.raises(ConfigError, match="grasp_approach_offset"):
            config_from_mapping({"planner": {"grasp_approach_offset": 0.02}})

    def test_threshold_ordering(self):
        with pytest.raises(ConfigError, match="release_threshold"):
            config_from_mapping({"sim": {"grasp_threshold": 0.7}})

    def test_empty_mapping_gives_defaults(self):
        cfg = config_from_mapping({})
        assert cfg.sim == SimConfig()
        assert cfg.tasks == {}


class TestHashing:
    def test_hash_is_stable(self):
        assert config_sha256(default_config()) == config_sha256(default_config())

    def test_hash_sees_value_changes(self):
        cfg = default_config()
        bumped = with_overrides(cfg, sim=replace(cfg.sim, max_ee_speed=0.02))
        assert config_sha256(cfg) != config_sha256(bumped)

    def test_hash_sees_failure_table_changes(self):
        cfg = default_config()
        trimmed = with_overrides(cfg, tasks={"pick_cube": cfg.tasks["pick_cube"]})
        assert config_sha256(cfg) != config_sha256(trimmed)

    def test_hash_ignores_mapping_order(self):
        a = config_from_mapping({"sim": {"max_ee_speed": 0.01, "focal_px": 500.0}})
        b = config_from_mapping({"sim": {"focal_px": 500.0, "max_ee_speed": 0.01}})
        assert config_sha256(a) == config_sha256(b)


class TestLoadConfig:
    def test_yaml_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(
            "sim:\n"
            "  max_ee_speed: 0.02\n"
            "tasks:\n"
            "  pick_cube:\n"
            "    failures:\n"
            "      - {mode: rotation, axis: yaw, range: [20, 40], unit: deg,\n"
            "         stages: [grasp]}\n"
        )
        cfg = load_config(path)
        assert cfg.sim.max_ee_speed == 0.02
        entry = cfg.tasks["pick_cube"][0]
        assert entry.mode == "rotation"
        assert entry.lo == pytest.approx(math.radians(20))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cfg.yaml"):
            load_config(tmp_path / "cfg.yaml")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("sim: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_root_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)


class TestSectionConfigs:
    def test_planner_task_steps_fallback(self):
        pl = PlannerConfig()
        assert pl.stage_steps("place_sphere") == pl.steps_per_stage

    def test_dataset_ratio_positive(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"dataset": {"failure_to_gt_ratio": 0}})

    def test_cadence_positive(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"supervisor": {"cadence": 0}})
