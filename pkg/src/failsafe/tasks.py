"""Stage-waypoint task library and rollout: the correct-trajectory generator.

Each task is a fixed stage decomposition whose targets are computed from
seeded random object placements. Rollouts feed interpolated waypoints to the
simulator one step per waypoint and record every frame, so a (task, seed,
config) triple fully determines the resulting trajectory.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .errors import ConfigError, SceneGenerationError
from .geometry import IDENTITY_QUAT, Pose, interpolate_stage
from .seeding import seed_stream
from .sim import ObjectState, Simulator, WorldState

GRIP_OPEN = 1.0
GRIP_HOLD = 0.05
GRIP_PUSH = 0.0


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction: str
    stage_names: tuple
    objects: tuple  # object ids placed by the scene sampler


TASKS = {
    spec.task_id: spec
    for spec in (
        TaskSpec(
            "pick_cube",
            "pick up the red cube",
            ("reach", "grasp", "lift"),
            ("cube",),
        ),
        TaskSpec(
            "push_cube",
            "push the cube to the goal marker",
            ("approach", "push"),
            ("cube",),
        ),
        TaskSpec(
            "stack_cube",
            "stack the red cube on top of the green cube",
            ("reach", "grasp", "lift", "align", "lower", "release"),
            ("cube_a", "cube_b"),
        ),
        TaskSpec(
            "pick_sphere",
            "pick up the ball",
            ("reach", "grasp", "lift"),
            ("sphere",),
        ),
        TaskSpec(
            "place_sphere",
            "place the ball on the pad",
            ("reach", "grasp", "lift", "align", "lower", "release"),
            ("sphere", "pad"),
        ),
        TaskSpec(
            "pick_charger",
            "pick up the charger",
            ("reach", "grasp", "lift"),
            ("charger",),
        ),
    )
}


def task_spec(task) -> TaskSpec:
    task_id = getattr(task, "task_id", task)
    try:
        return TASKS[task_id]
    except KeyError:
        raise ConfigError(f"unknown task '{task_id}'") from None


@dataclass(frozen=True)
class Stage:
    """One plan leg: interpolate to target, optionally pausing mid-leg.

    hold_steps > 0 inserts that many copies of the pose reached just before
    waypoint hold_at, which stretches the stage without moving its target.
    """

    name: str
    target: Pose
    steps: int
    hold_at: int = 0
    hold_steps: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"stage '{self.name}' needs at least 1 step")
        if self.hold_steps < 0 or not 0 <= self.hold_at <= self.steps:
            raise ConfigError(f"stage '{self.name}' hold placement out of range")

    def emitted_steps(self) -> int:
        return self.steps + self.hold_steps


def stage_commands(stage: Stage, start: Pose) -> list:
    """Per-step waypoints for one stage, holds included."""
    leg = interpolate_stage(start, stage.target, stage.steps)
    if stage.hold_steps:
        held = leg[stage.hold_at - 1] if stage.hold_at > 0 else start
        leg[stage.hold_at : stage.hold_at] = [held] * stage.hold_steps
    return leg


@dataclass(frozen=True)
class Plan:
    task_id: str
    stages: tuple
    seed: int

    def __post_init__(self):
        if len(self.stages) < 2:
            raise ConfigError(f"plan for '{self.task_id}' needs at least 2 stages")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate stage names in '{self.task_id}' plan")

    def total_steps(self) -> int:
        return sum(s.emitted_steps() for s in self.stages)

    def stage_index(self, name: str) -> int:
        for i, stage in enumerate(self.stages):
            if stage.name == name:
                return i
        raise ConfigError(f"task '{self.task_id}' has no stage '{name}'")


@dataclass(frozen=True)
class Frame:
    step: int
    command: Pose
    world: WorldState


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    seed: int
    frames: tuple
    stage_boundaries: tuple  # index of each executed stage's last frame
    outcome: bool

    def stage_bounds(self, stage_index: int) -> tuple:
        """(first, last) frame indices of a stage, inclusive."""
        if stage_index < 0 or stage_index >= len(self.stage_boundaries):
            raise IndexError(f"stage {stage_index} not in trajectory")
        first = 0 if stage_index == 0 else self.stage_boundaries[stage_index - 1] + 1
        return first, self.stage_boundaries[stage_index]

    def stage_length(self, stage_index: int) -> int:
        first, last = self.stage_bounds(stage_index)
        return last - first + 1


def home_pose(cfg: Config) -> Pose:
    return Pose(
        np.array([0.0, 0.0, cfg.planner.home_height]), IDENTITY_QUAT, GRIP_OPEN
    )


def _upright(position, gripper) -> Pose:
    return Pose(np.asarray(position, dtype=float), IDENTITY_QUAT, gripper)


def _sample_xy(rng, half_range):
    return rng.uniform(-half_range, half_range, size=2)


def _build_scene(task_id: str, rng, cfg: Config) -> WorldState:
    sim_cfg = cfg.sim
    pl = cfg.planner
    cube_z = sim_cfg.cube_half_extent
    sphere_z = sim_cfg.sphere_radius
    objects = {}
    goal = None

    def box(obj_id, xy, half, z, shape="box", graspable=True, pushable=True):
        objects[obj_id] = ObjectState(
            shape=shape,
            half_extents=half,
            pose=_upright([xy[0], xy[1], z], 0.0),
            graspable=graspable,
            pushable=pushable,
        )

    cube_half = (sim_cfg.cube_half_extent,) * 3
    if task_id in ("pick_cube", "push_cube"):
        xy = _sample_xy(rng, pl.placement_half_range)
        box("cube", xy, cube_half, cube_z)
        if task_id == "push_cube":
            for _ in range(pl.max_placement_attempts):
                angle = rng.uniform(0.0, 2.0 * np.pi)
                dist = rng.uniform(*pl.push_distance_range)
                candidate = xy + dist * np.array([np.cos(angle), np.sin(angle)])
                if np.all(np.abs(candidate) <= pl.push_goal_limit):
                    goal = (float(candidate[0]), float(candidate[1]))
                    break
            else:
                raise SceneGenerationError(
                    f"no in-bounds push goal for seed after {pl.max_placement_attempts} attempts"
                )
    elif task_id == "stack_cube":
        for _ in range(pl.max_placement_attempts):
            a = _sample_xy(rng, pl.placement_half_range)
            b = _sample_xy(rng, pl.placement_half_range)
            if float(np.linalg.norm(a - b)) >= pl.min_object_separation:
                break
        else:
            raise SceneGenerationError(
                f"stack placements never separated after {pl.max_placement_attempts} attempts"
            )
        box("cube_a", a, cube_half, cube_z)
        box("cube_b", b, cube_half, cube_z)
    elif task_id == "pick_sphere":
        xy = _sample_xy(rng, pl.placement_half_range)
        objects["sphere"] = ObjectState(
            shape="sphere",
            half_extents=(sim_cfg.sphere_radius,) * 3,
            pose=_upright([xy[0], xy[1], sphere_z], 0.0),
        )
    elif task_id == "place_sphere":
        for _ in range(pl.max_placement_attempts):
            s = _sample_xy(rng, pl.placement_half_range)
            p = _sample_xy(rng, pl.placement_half_range)
            if float(np.linalg.norm(s - p)) >= pl.min_object_separation:
                break
        else:
            raise SceneGenerationError(
                f"place placements never separated after {pl.max_placement_attempts} attempts"
            )
        objects["sphere"] = ObjectState(
            shape="sphere",
            half_extents=(sim_cfg.sphere_radius,) * 3,
            pose=_upright([s[0], s[1], sphere_z], 0.0),
        )
        box(
            "pad",
            p,
            sim_cfg.pad_half_extents,
            sim_cfg.pad_half_extents[2],
            graspable=False,
            pushable=False,
        )
    elif task_id == "pick_charger":
        xy = _sample_xy(rng, pl.placement_half_range)
        box(
            "charger",
            xy,
            sim_cfg.charger_half_extents,
            sim_cfg.charger_half_extents[2],
            shape="charger-slab",
        )
    else:
        raise ConfigError(f"unknown task '{task_id}'")

    return WorldState(
        ee_pose=home_pose(cfg),
        objects=objects,
        table_z=sim_cfg.table_z,
        goal=goal,
    )


def grasp_attach_height(cfg: Config, steps: int) -> float:
    """EE height above an object's center at the waypoint where a nominal
    grasp descent first satisfies the attachment rule.

    Carry targets add this offset so the held object, not the gripper,
    lands at the intended height. Derived from the same interpolation and
    thresholds the descent actually runs, so it stays exact under
    reconfiguration.
    """
    pl = cfg.planner
    span = pl.approach_height - pl.grasp_approach_offset
    grip_span = GRIP_OPEN - GRIP_HOLD
    for j in range(steps):
        frac = (j + 1) / steps
        height = pl.approach_height - span * frac
        gripper = GRIP_OPEN - grip_span * frac
        if height <= cfg.sim.grasp_radius and gripper <= cfg.sim.grasp_threshold:
            return height
    raise ConfigError(
        "grasp descent never reaches the attachment zone; "
        "check grasp_approach_offset against grasp_radius"
    )


def plan_task(task, seed: int, cfg: Config) -> tuple:
    """Sample a scene and emit the task's canonical stage sequence.

    Returns (Plan, WorldState). Same (task, seed, cfg) gives identical output.
    """
    spec = task_spec(task)
    rng = seed_stream("scene", spec.task_id, seed)
    world = _build_scene(spec.task_id, rng, cfg)
    pl = cfg.planner
    steps = pl.stage_steps(spec.task_id)
    if steps < pl.min_stage_steps:
        raise ConfigError(
            f"stage steps {steps} for '{spec.task_id}' below minimum {pl.min_stage_steps}"
        )

    def obj_pos(obj_id):
        return world.objects[obj_id].pose.position

    def obj_top_offset(obj_id):
        return world.objects[obj_id].half_extents[2]

    stages = []

    def add(name, position, gripper):
        stages.append(Stage(name, _upright(position, gripper), steps))

    if spec.task_id in ("pick_cube", "pick_sphere", "pick_charger"):
        target = spec.objects[0]
        ox, oy, oz = obj_pos(target)
        add("reach", [ox, oy, oz + pl.approach_height], GRIP_OPEN)
        add("grasp", [ox, oy, oz + pl.grasp_approach_offset], GRIP_HOLD)
        add("lift", [ox, oy, pl.lift_height], GRIP_HOLD)
    elif spec.task_id == "push_cube":
        cx, cy, cz = obj_pos("cube")
        gx, gy = world.goal
        direction = np.array([gx - cx, gy - cy])
        direction = direction / np.linalg.norm(direction)
        behind = np.array([cx, cy]) - direction * pl.push_standoff
        through = np.array([gx, gy]) - direction * cfg.sim.contact_radius
        add("approach", [behind[0], behind[1], cz], GRIP_PUSH)
        add("push", [through[0], through[1], cz], GRIP_PUSH)
    elif spec.task_id in ("stack_cube", "place_sphere"):
        top_id, base_id = spec.objects
        tx, ty, tz = obj_pos(top_id)
        bx, by, bz = obj_pos(base_id)
        stack_z = bz + obj_top_offset(base_id) + obj_top_offset(top_id)
        # The held object hangs grasp_attach_height below the EE.
        place_z = stack_z + grasp_attach_height(cfg, steps)
        add("reach", [tx, ty, tz + pl.approach_height], GRIP_OPEN)
        add("grasp", [tx, ty, tz + pl.grasp_approach_offset], GRIP_HOLD)
        add("lift", [tx, ty, pl.carry_height], GRIP_HOLD)
        add("align", [bx, by, pl.carry_height], GRIP_HOLD)
        add("lower", [bx, by, place_z], GRIP_HOLD)
        add("release", [bx, by, place_z], GRIP_OPEN)
    else:
        raise ConfigError(f"unknown task '{spec.task_id}'")

    return Plan(spec.task_id, tuple(stages), seed), world


def plan_commands(plan: Plan, start: Pose) -> list:
    """The full per-step waypoint stream a rollout feeds to the simulator."""
    commands = []
    current = start
    for stage in plan.stages:
        commands.extend(stage_commands(stage, current))
        current = stage.target
    return commands


def rollout_plan(
    plan: Plan,
    world: WorldState,
    sim: Simulator,
    max_steps: int | None = None,
) -> Trajectory:
    """Execute a plan one waypoint per step, recording every frame.

    If max_steps is given the rollout truncates there and the outcome is
    whatever evaluate_success says at the cutoff, which is how stalled plans
    come to count as failures.
    """
    frames = []
    boundaries = []
    current = world.ee_pose
    index = 0
    done = False
    for stage in plan.stages:
        for command in stage_commands(stage, current):
            world = sim.step(world, command)
            frames.append(Frame(step=index, command=command, world=world))
            index += 1
            if max_steps is not None and index >= max_steps:
                done = True
                break
        if frames:
            boundaries.append(index - 1)
        current = stage.target
        if done:
            break
    # A truncated final stage still closes the partition.
    if boundaries and boundaries[-1] != index - 1:
        boundaries.append(index - 1)
    outcome = sim.evaluate_success(world, plan.task_id)
    return Trajectory(
        task_id=plan.task_id,
        seed=plan.seed,
        frames=tuple(frames),
        stage_boundaries=tuple(boundaries),
        outcome=outcome,
    )
