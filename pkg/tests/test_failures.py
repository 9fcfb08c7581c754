"""Failure injection: sampling, perturbation mechanics, confirmation."""

import numpy as np
import pytest

from failsafe.config import default_config, parse_failure_entry, with_overrides
from failsafe.errors import ConfigError
from failsafe.failures import (
    generate_failure_case,
    perturb_stage,
    sample_failure_spec,
    validate_failure_config,
    FailureSpec,
)
from failsafe.geometry import quat_about_axis, quat_multiply
from failsafe.seeding import seed_stream
from failsafe.sim import Simulator
from failsafe.tasks import TASKS, plan_task


@pytest.fixture(scope="module")
def cfg():
    return default_config()


@pytest.fixture(scope="module")
def sim(cfg):
    return Simulator(cfg)


def entry(**kw):
    raw = {"mode": "translation", "axis": "x", "range": [0.05, 0.05],
           "stages": ["grasp"]}
    raw.update(kw)
    return parse_failure_entry(raw, "test")


class TestPerturbStage:
    def test_translation_shifts_one_axis(self, cfg):
        plan, _ = plan_task("pick_cube", 0, cfg)
        spec = FailureSpec("translation", "y", -0.07, 1, "grasp")
        out = perturb_stage(plan, spec)
        orig = plan.stages[1].target
        new = out.stages[1].target
        assert new.position[1] == pytest.approx(orig.position[1] - 0.07)
        assert new.position[0] == orig.position[0]
        assert new.position[2] == orig.position[2]
        assert np.array_equal(new.orientation, orig.orientation)

    def test_rotation_premultiplies(self, cfg):
        plan, _ = plan_task("stack_cube", 0, cfg)
        spec = FailureSpec("rotation", "pitch", 0.6, 1, "grasp")
        out = perturb_stage(plan, spec)
        expected = quat_multiply(
            quat_about_axis(1, 0.6), plan.stages[1].target.orientation
        )
        assert out.stages[1].target.orientation == pytest.approx(expected)
        assert np.array_equal(
            out.stages[1].target.position, plan.stages[1].target.position
        )

    def test_no_ops_inserts_holds(self, cfg):
        plan, _ = plan_task("pick_cube", 0, cfg)
        spec = FailureSpec("no_ops", None, 12.0, 2, "lift", insertion_step=7)
        out = perturb_stage(plan, spec)
        stage = out.stages[2]
        assert stage.hold_at == 7 and stage.hold_steps == 12
        assert stage.emitted_steps() == plan.stages[2].steps + 12
        assert np.array_equal(stage.target.position, plan.stages[2].target.position)
        assert out.total_steps() == plan.total_steps() + 12

    def test_only_the_named_stage_changes(self, cfg):
        plan, _ = plan_task("stack_cube", 3, cfg)
        spec = FailureSpec("translation", "x", 0.05, 1, "grasp")
        out = perturb_stage(plan, spec)
        for i, (a, b) in enumerate(zip(plan.stages, out.stages)):
            if i == 1:
                continue
            assert a is b, f"stage {i} was touched"


class TestSampling:
    def test_same_seed_same_spec(self, cfg):
        plan, _ = plan_task("stack_cube", 11, cfg)
        entries = cfg.tasks["stack_cube"]
        a = sample_failure_spec(plan, entries, seed_stream("failure", "stack_cube", 11))
        b = sample_failure_spec(plan, entries, seed_stream("failure", "stack_cube", 11))
        assert a == b

    def test_magnitude_respects_range_and_sign(self, cfg):
        plan, _ = plan_task("pick_cube", 0, cfg)
        entries = [entry(range=[0.03, 0.1])]
        signs = set()
        for seed in range(40):
            spec = sample_failure_spec(
                plan, entries, seed_stream("failure", "pick_cube", seed)
            )
            assert 0.03 <= abs(spec.magnitude) <= 0.1
            signs.add(spec.magnitude > 0)
        assert signs == {True, False}

    def test_no_ops_duration_and_insertion_bounds(self, cfg):
        plan, _ = plan_task("pick_cube", 0, cfg)
        entries = [entry(mode="no_ops", axis=None, range=[10, 20], stages=["lift"])]
        for seed in range(30):
            spec = sample_failure_spec(
                plan, entries, seed_stream("failure", "pick_cube", seed)
            )
            assert 10 <= spec.magnitude <= 20
            assert spec.magnitude == int(spec.magnitude)
            assert 0 <= spec.insertion_step < plan.stages[2].steps

    def test_every_entry_is_eventually_drawn(self, cfg):
        plan, _ = plan_task("stack_cube", 0, cfg)
        entries = cfg.tasks["stack_cube"]
        seen = set()
        for seed in range(80):
            spec = sample_failure_spec(
                plan, entries, seed_stream("failure", "stack_cube", seed)
            )
            seen.add((spec.mode, spec.axis))
        assert seen == {(e.mode, e.axis) for e in entries}


class TestGenerateFailureCase:
    def test_deterministic(self, cfg, sim):
        a = generate_failure_case("pick_cube", 4, cfg, sim)
        b = generate_failure_case("pick_cube", 4, cfg, sim)
        assert a.spec == b.spec
        assert len(a.failed.frames) == len(b.failed.frames)
        assert np.array_equal(
            a.failed.frames[-1].world.ee_pose.position,
            b.failed.frames[-1].world.ee_pose.position,
        )

    def test_confirmed_case_shape(self, cfg, sim):
        case = generate_failure_case("pick_cube", 4, cfg, sim)
        assert case is not None
        assert case.correct.outcome and not case.failed.outcome
        assert case.nominal_steps == 120
        # The unperturbed budget caps the perturbed rollout.
        assert len(case.failed.frames) == case.nominal_steps
        assert case.spec.stage_name in TASKS["pick_cube"].stage_names

    def test_empty_failure_list_is_a_no_op(self, cfg, sim):
        bare = with_overrides(cfg, tasks={})
        assert generate_failure_case("pick_cube", 0, bare, sim) is None

    def test_benign_perturbation_returns_none(self, cfg, sim):
        gentle = with_overrides(
            cfg,
            tasks={"pick_cube": [entry(range=[1e-4, 2e-4])]},
        )
        assert generate_failure_case("pick_cube", 0, gentle, sim) is None

    def test_mild_rotations_below_align_tol_stay_benign(self, cfg, sim):
        gentle = with_overrides(
            cfg,
            tasks={"stack_cube": [entry(mode="rotation", axis="roll",
                                         range=[0.1, 0.2], stages=["grasp"])]},
        )
        for seed in range(5):
            assert generate_failure_case("stack_cube", seed, gentle, sim) is None


class TestStageNameValidation:
    def test_unknown_stage_rejected(self, cfg):
        bad = with_overrides(
            cfg, tasks={"pick_cube": [entry(stages=["somersault"])]}
        )
        with pytest.raises(ConfigError, match="somersault"):
            validate_failure_config(bad)

    def test_shipped_config_passes(self, cfg):
        validate_failure_config(cfg)
