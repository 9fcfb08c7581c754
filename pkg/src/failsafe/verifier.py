"""Executable verification of recovery candidates.

A candidate is verified by replaying it, not by inspecting it: rebuild the
seed's initial world, re-run the failed trajectory's recorded commands up
to the deviation point, drive the arm through the candidate's delta until
the simulator lands on the corrected pose, then hand control back to the
correct plan's recorded commands from the first post-window waypoint of the
deviated stage onward. The candidate passes only if the task's success
check holds at the end and the whole replay fits the step budget.

Replay is deterministic, so verifying twice always agrees.
"""

import math

import numpy as np

from .config import Config
from .errors import FailSafeError
from .failures import generate_failure_case
from .geometry import Pose, apply_delta
from .recovery import CORRECTION_TAIL, CandidateRecovery
from .sim import Simulator
from .tasks import plan_task


def _landed(ee: Pose, target: Pose, clamped_position: np.ndarray) -> bool:
    """Exact arrival test; the stepper copies targets it can reach."""
    return (
        np.array_equal(ee.position, clamped_position)
        and np.array_equal(ee.orientation, target.orientation)
        and ee.gripper == target.gripper
    )


def step_budget(nominal_steps: int, cfg: Config) -> int:
    return math.ceil(nominal_steps * (1.0 + cfg.verifier.budget_slack))


def verify_candidate(
    case,
    candidate: CandidateRecovery,
    cfg: Config,
    sim: Simulator | None = None,
) -> bool:
    """Replay one candidate on a fresh world. Marks and returns success."""
    sim = sim or Simulator(cfg)
    budget = step_budget(case.nominal_steps, cfg)
    idx = case.spec.stage_index
    failed_start, _ = case.failed.stage_bounds(idx)
    correct_start, _ = case.correct.stage_bounds(idx)
    global_d = failed_start + candidate.d_index
    # First command index past the correction window: segment length - 3.
    resume_local = case.correct.stage_length(idx) - CORRECTION_TAIL + 1

    _, world = plan_task(case.task_id, case.seed, cfg)
    steps = 0
    try:
        # The failure, exactly as recorded, up to the deviation point.
        for frame in case.failed.frames[: global_d + 1]:
            if steps >= budget:
                return False
            world = sim.step(world, frame.command)
            steps += 1

        # The candidate's correction, driven until the arm arrives.
        target = apply_delta(world.ee_pose, candidate.action)
        clamped = sim.clamp_position(target.position)
        transit = 0
        while not _landed(world.ee_pose, target, clamped):
            if steps >= budget or transit >= cfg.verifier.max_transit_steps:
                return False
            world = sim.step(world, target)
            steps += 1
            transit += 1

        # The correct plan takes over at its normal one-step-per-waypoint
        # cadence; a correction the arm cannot track from fails here.
        for frame in case.correct.frames[correct_start + resume_local :]:
            if steps >= budget:
                return False
            world = sim.step(world, frame.command)
            steps += 1

        ok = sim.evaluate_success(world, case.task_id)
    except FailSafeError:
        return False
    if ok:
        candidate.verified = True
    return ok


def verify_candidates(case, candidates, cfg: Config, sim: Simulator | None = None) -> list:
    """Verify a batch; returns the per-candidate outcomes in order."""
    sim = sim or Simulator(cfg)
    return [verify_candidate(case, cand, cfg, sim) for cand in candidates]


def reverify_entries(entries, cfg: Config, sim: Simulator | None = None) -> float:
    """Re-replay every exported failure recovery; returns the passing fraction.

    A failure entry pins its scene seed and window indices in provenance;
    the failure case itself is regenerated from config + seed, which is
    deterministic, so anything exported as verified must verify again. An
    entry whose regenerated case no longer matches its provenance counts
    as failed rather than raising: the point is to distrust the file.
    """
    sim = sim or Simulator(cfg)
    failures = [e for e in entries if e.is_failure]
    if not failures:
        return 1.0
    cases = {}
    passed = 0
    for entry in failures:
        key = (entry.task_id, entry.seed)
        if key not in cases:
            cases[key] = generate_failure_case(entry.task_id, entry.seed, cfg, sim)
        case = cases[key]
        prov = entry.provenance
        if (
            case is None
            or case.spec.stage_index != prov["stage"]
            or float(case.spec.magnitude) != prov["magnitude"]
        ):
            continue
        candidate = CandidateRecovery(
            d_index=prov["d_index"], c_index=prov["c_index"], action=entry.recovery
        )
        if verify_candidate(case, candidate, cfg, sim):
            passed += 1
    return passed / len(failures)
