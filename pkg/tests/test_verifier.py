"""Replay-based verification behavior."""

from dataclasses import replace

import numpy as np
import pytest

from failsafe.config import default_config, with_overrides
from failsafe.errors import FailSafeError
from failsafe.failures import generate_failure_case
from failsafe.geometry import DeltaAction
from failsafe.recovery import (
    CandidateRecovery,
    candidate_index_ranges,
    collect_candidates,
)
from failsafe.sim import Simulator
from failsafe.verifier import step_budget, verify_candidate, verify_candidates


@pytest.fixture(scope="module")
def cfg():
    return default_config()


@pytest.fixture(scope="module")
def sim(cfg):
    return Simulator(cfg)


def case_with_mode(task_id, mode, cfg, sim, start_seed=0):
    for seed in range(start_seed, start_seed + 200):
        case = generate_failure_case(task_id, seed, cfg, sim)
        if case is not None and case.spec.mode == mode:
            return case
    raise AssertionError(f"no {mode} case found for {task_id}")


class TestVerifyCandidate:
    def test_budget_formula(self, cfg):
        assert step_budget(120, cfg) == 150
        assert step_budget(240, cfg) == 300

    def test_good_candidates_verify_and_get_marked(self, cfg, sim):
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        cands = collect_candidates(case, case.seed, 5)
        results = verify_candidates(case, cands, cfg, sim)
        assert any(results)
        for cand, ok in zip(cands, results):
            assert cand.verified == ok

    def test_zero_action_fails_at_full_deviation(self, cfg, sim):
        # At the last deviation index the whole shift has accrued, so a
        # do-nothing correction leaves the gripper beside the cube and the
        # resumed tail cannot recover the grasp.
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        d_range, c_range = candidate_index_ranges(case)
        lazy = CandidateRecovery(
            d_index=d_range[-1], c_index=c_range[-1], action=DeltaAction.zero()
        )
        assert verify_candidate(case, lazy, cfg, sim) is False
        assert lazy.verified is False

    def test_reverification_agrees(self, cfg, sim):
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        cands = collect_candidates(case, case.seed, 5)
        first = verify_candidates(case, cands, cfg, sim)
        second = verify_candidates(case, cands, cfg, sim)
        assert first == second

    def test_batch_fraction_sits_strictly_inside_unit_interval(self, cfg, sim):
        results = []
        for task_id in ("pick_cube", "push_cube"):
            for seed in range(12):
                case = generate_failure_case(task_id, seed, cfg, sim)
                if case is None:
                    continue
                cands = collect_candidates(case, seed, 3)
                results.extend(verify_candidates(case, cands, cfg, sim))
        frac = sum(results) / len(results)
        assert 0.0 < frac < 1.0

    def test_unreachable_correction_times_out(self, cfg, sim):
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        # Far outside the workspace: the clamp stops short of the target,
        # so the transit can never land.
        wild = CandidateRecovery(
            d_index=10,
            c_index=10,
            action=DeltaAction(np.array([5.0, 0.0, 0.0]), np.zeros(3), 0.0),
        )
        assert verify_candidate(case, wild, cfg, sim) is False

    def test_tight_budget_rejects_more(self, cfg, sim):
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        cands = collect_candidates(case, case.seed, 5)
        normal = sum(verify_candidates(case, cands, cfg, sim))
        strangled = with_overrides(
            cfg, verifier=replace(cfg.verifier, budget_slack=0.0)
        )
        tight = sum(verify_candidates(case, cands, strangled, sim))
        assert tight <= normal

    def test_sim_error_counts_as_failure(self, cfg, sim):
        case = case_with_mode("pick_cube", "translation", cfg, sim)
        cands = collect_candidates(case, case.seed, 5)

        class Tripwire(Simulator):
            def __init__(self, config, blow_after):
                super().__init__(config)
                self.remaining = blow_after

            def step(self, world, target):
                self.remaining -= 1
                if self.remaining < 0:
                    raise FailSafeError("solver fault")
                return super().step(world, target)

        assert verify_candidate(case, cands[0], cfg, Tripwire(cfg, 30)) is False

    def test_no_ops_cases_verify_via_catch_up(self, cfg, sim):
        case = case_with_mode("pick_cube", "no_ops", cfg, sim)
        cands = collect_candidates(case, case.seed, 5)
        results = verify_candidates(case, cands, cfg, sim)
        assert any(results)
