"""Supervised execution: a fault-prone executor checked at a fixed cadence.

The policy replays a plan's waypoint stream (optionally carrying one sampled
online fault). Every `cadence` steps an assistant sees the last ten
observation frames and may inject a corrective end-effector command; the
harness drives that command to arrival, re-synchronizes the stream cursor,
and hands control back. The same assistant interface is scored offline by
evaluate_assistant against labeled dataset entries.
"""

import math
import sys
from dataclasses import dataclass

import numpy as np

from .config import Config
from .dataset import WINDOW_FRAMES, DatasetEntry
from .errors import ContractViolation, MetricsError
from .failures import FailureSpec, perturb_stage, sample_failure_spec
from .geometry import DeltaAction, Pose, apply_delta, delta_action, pose_distance
from .recovery import CORRECTION_TAIL, DEVIATION_MARGIN
from .seeding import seed_stream
from .sim import Simulator
from .tasks import Trajectory, plan_commands, plan_task, rollout_plan, task_spec

# Spread below which the last-10 end-effector history counts as stalled.
FROZEN_EPS = 1e-9


@dataclass
class AssistantDecision:
    """One consultation's answer. A failure verdict must carry its fix."""

    sub_task: str
    is_failure: bool
    failure_type: tuple | None = None  # (mode, axis)
    recovery: DeltaAction | None = None

    def __post_init__(self):
        if self.is_failure != (self.recovery is not None):
            raise ContractViolation(
                "is_failure and the presence of a recovery action must agree"
            )


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    total_steps: int
    interventions: int
    trace: tuple  # EE pose per step, index 0 = initial pose
    transit_mask: tuple  # per trace row: was this step part of an intervention


@dataclass(frozen=True)
class Metrics:
    """Averages over an evaluation set; cosine covers failure entries only."""

    binary_success: float
    type_accuracy: float
    mean_cosine: float


class PerturbedStreamPolicy:
    """Plan-following executor whose stream may carry one injected fault.

    The stream is fixed at construction: the seed's plan, with the fault's
    stage perturbed when a fault is given. resync() lets the harness move
    the cursor after an intervention landed somewhere else on the table.
    """

    def __init__(self, task_id, seed: int, cfg: Config, fault: FailureSpec | None = None):
        self.task_id = task_id
        self.seed = seed
        self.fault = fault
        plan, world = plan_task(task_id, seed, cfg)
        self.correct_plan = plan
        self.initial_world = world
        stream_plan = plan if fault is None else perturb_stage(plan, fault)
        self.commands = plan_commands(stream_plan, world.ee_pose)
        self.cursor = 0

    def exhausted(self) -> bool:
        return self.cursor >= len(self.commands)

    def next_command(self) -> Pose:
        command = self.commands[self.cursor]
        self.cursor += 1
        return command

    def resync(self, ee: Pose, cfg: Config) -> None:
        """Skip the cursor past the stream run the arm now sits on.

        Scans forward for the first upcoming waypoint whose position and
        grip are within the resume tolerances, walks the consecutive run of
        such matches, and resumes after the closest one. Ties resolve
        forward so a block of identical hold waypoints is consumed whole.
        Orientation is deliberately not part of the match: an orientation
        fault leaves stream positions intact, and the cursor must still
        advance past them once the arm is back on the line. No match leaves
        the cursor alone, so the stream continues where it left off.
        """
        sup = cfg.supervisor

        def gap(j):
            command = self.commands[j]
            translational, _ = pose_distance(ee, command)
            if translational > sup.resume_pos_tol:
                return None
            if abs(ee.gripper - command.gripper) > sup.resume_grip_tol:
                return None
            return translational

        first = None
        for j in range(self.cursor, len(self.commands)):
            if gap(j) is not None:
                first = j
                break
        if first is None:
            return
        best, best_gap = first, gap(first)
        j = first
        while j + 1 < len(self.commands):
            nxt = gap(j + 1)
            if nxt is None:
                break
            j += 1
            if nxt <= best_gap:
                best, best_gap = j, nxt
        self.cursor = best + 1


def _within(pose: Pose, other: Pose, pos_tol, ang_tol, grip_tol=None) -> bool:
    translational, angular = pose_distance(pose, other)
    if translational > pos_tol or angular > ang_tol:
        return False
    return grip_tol is None or abs(pose.gripper - other.gripper) <= grip_tol


def sample_harness_fault(
    task_id, seed: int, cfg: Config, sim: Simulator | None = None, max_attempts: int = 20
) -> FailureSpec | None:
    """The confirmed online fault this (task, seed) episode carries.

    Draws are re-rolled until one actually breaks the unsupervised episode,
    so a "perturbed policy" seed really is a failing seed. Returns None when
    the task has no configured faults or no draw broke anything.
    """
    entries = cfg.supervisor.faults.get(task_id, ())
    if not entries:
        return None
    sim = sim or Simulator(cfg)
    plan, _ = plan_task(task_id, seed, cfg)
    rng = np.random.default_rng(seed_stream("harness", task_id, seed))
    for _ in range(max_attempts):
        spec = sample_failure_spec(plan, entries, rng)
        policy = PerturbedStreamPolicy(task_id, seed, cfg, spec)
        outcome = run_supervised_episode(task_id, seed, policy, null_assistant, cfg, sim)
        if not outcome.success:
            return spec
    return None


@dataclass
class EpisodeContext:
    """What a ground-truth-aware assistant may consult during an episode."""

    task_id: str
    seed: int
    instruction: str
    fault: FailureSpec | None
    correct: Trajectory
    cfg: Config

    def __post_init__(self):
        self.stage_names = task_spec(self.task_id).stage_names
        self._positions = np.stack(
            [f.world.ee_pose.position for f in self.correct.frames]
        )
        self._orientations = np.stack(
            [f.world.ee_pose.orientation for f in self.correct.frames]
        )

    def stage_at(self, step: int) -> tuple:
        """(stage index, steps elapsed inside it) for a global step count,
        judged against the nominal schedule and clamped to the last stage."""
        index = min(step, len(self.correct.frames) - 1)
        for stage, last in enumerate(self.correct.stage_boundaries):
            if index <= last:
                first, _ = self.correct.stage_bounds(stage)
                return stage, step - first
        raise ContractViolation("unreachable: boundaries always cover the plan")

    def onset_step(self) -> int:
        """Global step at which the fault starts shaping execution."""
        if self.fault is None:
            raise ContractViolation("no fault, no onset")
        first, _ = self.correct.stage_bounds(self.fault.stage_index)
        if self.fault.mode == "no_ops":
            return first + self.fault.insertion_step
        return first

    def final_pose(self) -> Pose:
        return self.correct.frames[-1].world.ee_pose

    def off_path(self, ee: Pose) -> bool:
        """True when no nominal frame sits near the pose (gripper ignored)."""
        sup = self.cfg.supervisor
        gaps = np.linalg.norm(self._positions - ee.position, axis=1)
        near = gaps <= sup.detect_pos_tol
        if not near.any():
            return True
        dots = np.abs(self._orientations[near] @ ee.orientation)
        angles = 2.0 * np.arccos(np.clip(dots, -1.0, 1.0))
        return not (angles <= sup.detect_ang_tol).any()


def null_assistant(frames, context) -> AssistantDecision:
    """The floor: always reports smooth sailing."""
    return AssistantDecision(sub_task=_context_stage(frames, context), is_failure=False)


def oracle_assistant_decide(frames, ground_truth) -> AssistantDecision:
    """Ground-truth-backed assistant.

    On a labeled dataset entry it echoes the stored label. During an episode
    it watches the frame window: before the fault can have any effect (or
    with the arm already at the final pose) it stays quiet; a frozen window
    flags a stall; a pose no nominal frame explains flags the injected
    deviation. Detections answer with the true failure type and a corrective
    action pointing a few waypoints ahead on the nominal trajectory.
    """
    if isinstance(ground_truth, DatasetEntry):
        entry = ground_truth
        return AssistantDecision(
            sub_task=entry.sub_task,
            is_failure=entry.is_failure,
            failure_type=entry.failure_type,
            recovery=entry.recovery,
        )
    context = ground_truth
    step = frames[-1].step
    stage, elapsed = context.stage_at(step)
    name = context.stage_names[stage]
    quiet = AssistantDecision(sub_task=name, is_failure=False)
    if context.fault is None or step < context.onset_step():
        return quiet
    ee = frames[-1].ee_pose
    # Effectively-done gate. Kept tighter than any task's success margin
    # (the slimmest is pick's ~5.6 mm of lift headroom) so a stall that
    # parks the arm just shy of done still gets flagged.
    if _within(ee, context.final_pose(), 0.004, 0.05, 0.05):
        return quiet
    if _window_frozen(frames):
        pass  # stalled in place
    elif not context.off_path(ee):
        return quiet
    lead = context.cfg.supervisor.recovery_lead
    first, _ = context.correct.stage_bounds(stage)
    length = context.correct.stage_length(stage)
    c_star = max(DEVIATION_MARGIN, min(elapsed + lead, length - CORRECTION_TAIL))
    target = context.correct.frames[first + c_star].world.ee_pose
    return AssistantDecision(
        sub_task=name,
        is_failure=True,
        failure_type=(context.fault.mode, context.fault.axis),
        recovery=delta_action(ee, target),
    )


def _window_frozen(frames) -> bool:
    if len(frames) < WINDOW_FRAMES:
        return False
    positions = np.stack([f.ee_pose.position for f in frames[-WINDOW_FRAMES:]])
    grippers = [f.ee_pose.gripper for f in frames[-WINDOW_FRAMES:]]
    spread = float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))
    return spread <= FROZEN_EPS and max(grippers) - min(grippers) <= FROZEN_EPS


def _context_stage(frames, context) -> str:
    if isinstance(context, DatasetEntry):
        return context.sub_task
    stage, _ = context.stage_at(frames[-1].step)
    return context.stage_names[stage]


def _arrived(ee: Pose, target: Pose, sim: Simulator) -> bool:
    """Exact arrival, workspace clamp included (the stepper copies targets)."""
    return (
        np.array_equal(ee.position, sim.clamp_position(target.position))
        and np.array_equal(ee.orientation, target.orientation)
        and ee.gripper == target.gripper
    )


def run_supervised_episode(
    task_id,
    seed: int,
    policy: PerturbedStreamPolicy | None,
    assistant,
    cfg: Config,
    sim: Simulator | None = None,
    cadence: int | None = None,
) -> EpisodeResult:
    """Execute one episode under fixed-cadence supervision.

    policy None builds the configured fault-prone executor for the seed.
    The assistant is any callable(frames, context) -> AssistantDecision; an
    exception from it is logged and treated as "no failure" (fail-open).
    During an intervention's transit the stream pauses and no further
    consultations happen until the arm lands and the cursor re-syncs.
    """
    cadence = cfg.supervisor.cadence if cadence is None else cadence
    if cadence < 1:
        raise ContractViolation("cadence must be at least 1")
    sim = sim or Simulator(cfg)
    if policy is None:
        policy = PerturbedStreamPolicy(
            task_id, seed, cfg, sample_harness_fault(task_id, seed, cfg, sim)
        )
    world = policy.initial_world
    correct = rollout_plan(
        policy.correct_plan, world, sim
    )  # nominal reference, also the step budget's base
    context = EpisodeContext(
        task_id=task_id,
        seed=seed,
        instruction=task_spec(task_id).instruction,
        fault=policy.fault,
        correct=correct,
        cfg=cfg,
    )
    nominal = len(correct.frames)
    budget = math.ceil(nominal * (1.0 + cfg.supervisor.budget_slack)) + cfg.supervisor.settle_steps

    frames = [sim.observe(world)]
    trace = [world.ee_pose]
    transit_mask = [False]
    total = 0
    interventions = 0
    transit_target = None

    while total < budget:
        if transit_target is None and policy.exhausted():
            break
        if transit_target is None and total > 0 and total % cadence == 0:
            try:
                decision = assistant(frames[-WINDOW_FRAMES:], context)
            except Exception as exc:  # fail-open: the baseline is the floor
                print(
                    f"assistant error at step {total} ({task_id} seed {seed}): {exc}",
                    file=sys.stderr,
                )
                decision = None
            if decision is not None and decision.is_failure:
                transit_target = apply_delta(world.ee_pose, decision.recovery)
                interventions += 1
        command = transit_target if transit_target is not None else policy.next_command()
        world = sim.step(world, command)
        total += 1
        frames.append(sim.observe(world))
        trace.append(world.ee_pose)
        transit_mask.append(transit_target is not None)
        if transit_target is not None and _arrived(world.ee_pose, transit_target, sim):
            transit_target = None
            policy.resync(world.ee_pose, cfg)

    # Plan exhausted (or budget hit): hold position briefly, then judge.
    settle = Pose(
        world.ee_pose.position.copy(),
        world.ee_pose.orientation.copy(),
        world.ee_pose.gripper,
    )
    for _ in range(cfg.supervisor.settle_steps):
        if total >= budget:
            break
        world = sim.step(world, settle)
        total += 1
        frames.append(sim.observe(world))
        trace.append(world.ee_pose)
        transit_mask.append(False)

    return EpisodeResult(
        success=sim.evaluate_success(world, task_id),
        total_steps=total,
        interventions=interventions,
        trace=tuple(trace),
        transit_mask=tuple(transit_mask),
    )


def episode_record(result: EpisodeResult, policy: PerturbedStreamPolicy) -> dict:
    """Plain-JSON episode summary with the EE trace, for file export."""
    fault = None
    if policy.fault is not None:
        fault = {
            "mode": policy.fault.mode,
            "axis": policy.fault.axis,
            "stage": policy.fault.stage_name,
            "magnitude": policy.fault.magnitude,
            "insertion_step": policy.fault.insertion_step,
        }
    return {
        "task": policy.task_id,
        "seed": policy.seed,
        "success": result.success,
        "total_steps": result.total_steps,
        "interventions": result.interventions,
        "fault": fault,
        "trace": [
            [float(v) for v in pose.position]
            + [float(v) for v in pose.orientation]
            + [float(pose.gripper)]
            for pose in result.trace
        ],
    }


def evaluate_assistant(assistant, entries) -> Metrics:
    """Score an assistant against labeled entries.

    binary_success: failure-vs-success agreement rate. type_accuracy: exact
    (mode, axis) match on failure entries, correct abstention on success
    entries. mean_cosine: cosine between predicted and labeled recovery
    vectors, averaged over failure entries; a missing prediction, or a zero
    prediction against a nonzero label, scores 0.0 there, and a zero
    prediction matching a zero label scores 1.0.
    """
    entries = list(entries)
    if not entries:
        raise MetricsError("cannot evaluate an assistant on an empty entry set")
    binary = 0
    typed = 0
    cosines = []
    for entry in entries:
        decision = assistant(entry.frames, entry)
        if decision.is_failure == entry.is_failure:
            binary += 1
        if entry.is_failure:
            if decision.is_failure and decision.failure_type == entry.failure_type:
                typed += 1
            cosines.append(_recovery_cosine(decision.recovery, entry.recovery))
        else:
            if not decision.is_failure:
                typed += 1
    return Metrics(
        binary_success=binary / len(entries),
        type_accuracy=typed / len(entries),
        mean_cosine=sum(cosines) / len(cosines) if cosines else 0.0,
    )


def _recovery_cosine(predicted: DeltaAction | None, labeled: DeltaAction) -> float:
    if predicted is None:
        return 0.0
    a = predicted.as_vector()
    b = labeled.as_vector()
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        # A zero label arises when the deviated pose already sits on the
        # matched corrective pose (a stall retraces the correct path, only
        # late). Predicting exactly that zero action is a perfect answer,
        # not an abstention.
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)
