"""Typed run configuration.

All tunable constants live here: simulator physics surrogates, planner
geometry, failure-injection ranges, dataset knobs, and the supervised-loop
settings. Configs load from YAML with strict unknown-key checking (typos
fail loudly, naming the offending key) and hash canonically so a run
manifest can pin the exact configuration it was produced with.

Units in YAML: translation ranges in meters (`unit: m`), rotation ranges in
degrees or radians (`unit: deg|rad`), stall durations in steps
(`unit: steps`). Everything is stored internally in meters/radians/steps.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace

import yaml

from .errors import ConfigError

TASK_IDS = (
    "pick_cube",
    "push_cube",
    "stack_cube",
    "pick_sphere",
    "place_sphere",
    "pick_charger",
)

FAILURE_MODES = ("translation", "rotation", "no_ops")
TRANSLATION_AXES = ("x", "y", "z")
ROTATION_AXES = ("roll", "pitch", "yaw")


def _reject_unknown(raw: dict, allowed, prefix: str):
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key '{prefix}{key}'")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"'{path}' must be finite")
    return v


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{path}' must be an integer, got {value!r}")
    return value


def _vector3(value, path: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"'{path}' must be a list of 3 numbers")
    return tuple(_number(v, path) for v in value)


@dataclass(frozen=True)
class FailureEntry:
    """One configured perturbation: mode, optional axis, magnitude range,
    eligible stage names. Ranges are stored unit-normalized."""

    mode: str
    axis: str | None
    lo: float
    hi: float
    stages: tuple

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "axis": self.axis,
            "lo": self.lo,
            "hi": self.hi,
            "stages": list(self.stages),
        }


def parse_failure_entry(raw, path: str) -> FailureEntry:
    if not isinstance(raw, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    _reject_unknown(raw, ("mode", "axis", "range", "unit", "stages"), path + ".")
    mode = raw.get("mode")
    if mode not in FAILURE_MODES:
        raise ConfigError(f"'{path}.mode' must be one of {FAILURE_MODES}, got {mode!r}")

    axis = raw.get("axis")
    if mode == "no_ops":
        if axis is not None:
            raise ConfigError(f"'{path}.axis' must be absent for no_ops")
    elif mode == "translation":
        if axis not in TRANSLATION_AXES:
            raise ConfigError(f"'{path}.axis' must be one of {TRANSLATION_AXES}")
    else:
        if axis not in ROTATION_AXES:
            raise ConfigError(f"'{path}.axis' must be one of {ROTATION_AXES}")

    default_unit = {"translation": "m", "rotation": "rad", "no_ops": "steps"}[mode]
    unit = raw.get("unit", default_unit)
    allowed_units = {
        "translation": ("m",),
        "rotation": ("rad", "deg"),
        "no_ops": ("steps",),
    }[mode]
    if unit not in allowed_units:
        raise ConfigError(f"'{path}.unit' must be one of {allowed_units} for {mode}")

    rng = raw.get("range")
    if not isinstance(rng, (list, tuple)) or len(rng) != 2:
        raise ConfigError(f"'{path}.range' must be [lo, hi]")
    if mode == "no_ops":
        lo, hi = (_integer(v, f"{path}.range") for v in rng)
    else:
        lo, hi = (_number(v, f"{path}.range") for v in rng)
    if lo <= 0:
        raise ConfigError(f"'{path}.range' has non-positive magnitude {lo}")
    if lo > hi:
        raise ConfigError(f"'{path}.range' inverted range [{lo}, {hi}]")
    if unit == "deg":
        lo, hi = math.radians(lo), math.radians(hi)

    stages = raw.get("stages")
    if not isinstance(stages, (list, tuple)) or not stages:
        raise ConfigError(f"'{path}.stages' must be a non-empty list of stage names")
    for s in stages:
        if not isinstance(s, str):
            raise ConfigError(f"'{path}.stages' entries must be strings")

    return FailureEntry(mode=mode, axis=axis, lo=lo, hi=hi, stages=tuple(stages))


@dataclass(frozen=True)
class SimConfig:
    cube_half_extent: float = 0.02
    sphere_radius: float = 0.02
    charger_half_extents: tuple = (0.03, 0.02, 0.01)
    pad_half_extents: tuple = (0.03, 0.03, 0.01)
    lift_threshold: float = 0.06
    goal_radius: float = 0.03
    stack_xy_tol: float = 0.005
    stack_z_tol: float = 0.005
    grasp_radius: float = 0.01
    contact_radius: float = 0.025
    max_ee_speed: float = 0.01
    max_ee_angular: float = 0.1
    max_gripper_rate: float = 0.2
    grasp_threshold: float = 0.35
    release_threshold: float = 0.65
    grasp_align_tol: float = 0.5
    table_z: float = 0.0
    workspace_min: tuple = (-0.3, -0.3, 0.01)
    workspace_max: tuple = (0.3, 0.3, 0.45)
    image_width: int = 640
    image_height: int = 480
    focal_px: float = 500.0
    front_camera: tuple = (0.5, 0.0, 0.35)
    side_camera: tuple = (0.0, 0.5, 0.35)


@dataclass(frozen=True)
class PlannerConfig:
    steps_per_stage: int = 40
    task_steps: dict = field(default_factory=lambda: {"push_cube": 60})
    min_stage_steps: int = 14
    home_height: float = 0.20
    approach_height: float = 0.10
    grasp_approach_offset: float = 0.002
    lift_height: float = 0.075
    carry_height: float = 0.12
    push_standoff: float = 0.045
    placement_half_range: float = 0.10
    min_object_separation: float = 0.07
    push_distance_range: tuple = (0.09, 0.18)
    push_goal_limit: float = 0.12
    max_placement_attempts: int = 100

    def stage_steps(self, task_id: str) -> int:
        return int(self.task_steps.get(task_id, self.steps_per_stage))


@dataclass(frozen=True)
class VerifierConfig:
    budget_slack: float = 0.25
    max_transit_steps: int = 600


@dataclass(frozen=True)
class DatasetConfig:
    failure_to_gt_ratio: float = 2.3
    gt_entries_per_seed: int = 2
    candidates_per_case: int = 5


@dataclass(frozen=True)
class SupervisorConfig:
    cadence: int = 10
    budget_slack: float = 0.25
    settle_steps: int = 10
    resume_pos_tol: float = 0.02
    resume_grip_tol: float = 0.15
    detect_pos_tol: float = 0.005
    detect_ang_tol: float = 0.05
    recovery_lead: int = 6
    faults: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    tasks: dict = field(default_factory=dict)  # task_id -> list[FailureEntry]


_VECTOR_FIELDS = {
    "charger_half_extents",
    "pad_half_extents",
    "workspace_min",
    "workspace_max",
    "front_camera",
    "side_camera",
}
_PAIR_FIELDS = {"push_distance_range"}


def _parse_section(cls, raw, prefix: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{prefix.rstrip('.')}' must be a mapping")
    spec = {f.name: f for f in fields(cls)}
    _reject_unknown(raw, spec, prefix)
    values = {}
    for name, value in raw.items():
        path = prefix + name
        if name in ("faults",):
            values[name] = _parse_fault_map(value, path)
        elif name == "task_steps":
            values[name] = _parse_task_steps(value, path)
        elif name in _VECTOR_FIELDS:
            values[name] = _vector3(value, path)
        elif name in _PAIR_FIELDS:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"'{path}' must be [lo, hi]")
            lo, hi = (_number(v, path) for v in value)
            if lo > hi:
                raise ConfigError(f"'{path}' inverted range [{lo}, {hi}]")
            values[name] = (lo, hi)
        elif isinstance(getattr(cls, name), bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{path}' must be a boolean")
            values[name] = value
        elif isinstance(getattr(cls, name), int):
            values[name] = _integer(value, path)
        elif isinstance(getattr(cls, name), float):
            values[name] = _number(value, path)
        else:
            raise ConfigError(f"'{path}' is not settable from config")
    return cls(**values)


def _parse_task_steps(raw, path: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{path}' must map task ids to step counts")
    out = {}
    for task_id, steps in raw.items():
        if task_id not in TASK_IDS:
            raise ConfigError(f"unknown task '{path}.{task_id}'")
        out[task_id] = _integer(steps, f"{path}.{task_id}")
    return out


def _parse_fault_map(raw, path: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{path}' must map task ids to fault lists")
    out = {}
    for task_id, entries in raw.items():
        if task_id not in TASK_IDS:
            raise ConfigError(f"unknown task '{path}.{task_id}'")
        if not isinstance(entries, (list, tuple)):
            raise ConfigError(f"'{path}.{task_id}' must be a list")
        out[task_id] = [
            parse_failure_entry(e, f"{path}.{task_id}[{i}]")
            for i, e in enumerate(entries)
        ]
    return out


def _parse_tasks(raw, prefix: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{prefix}' must be a mapping of task ids")
    out = {}
    for task_id, body in raw.items():
        if task_id not in TASK_IDS:
            raise ConfigError(f"unknown task '{prefix}.{task_id}'")
        if body is None:
            out[task_id] = []
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"'{prefix}.{task_id}' must be a mapping")
        _reject_unknown(body, ("failures",), f"{prefix}.{task_id}.")
        entries = body.get("failures") or []
        if not isinstance(entries, (list, tuple)):
            raise ConfigError(f"'{prefix}.{task_id}.failures' must be a list")
        out[task_id] = [
            parse_failure_entry(e, f"{prefix}.{task_id}.failures[{i}]")
            for i, e in enumerate(entries)
        ]
    return out


def config_from_mapping(data) -> Config:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(
        data, ("sim", "planner", "verifier", "dataset", "supervisor", "tasks"), ""
    )
    cfg = Config(
        sim=_parse_section(SimConfig, data.get("sim"), "sim."),
        planner=_parse_section(PlannerConfig, data.get("planner"), "planner."),
        verifier=_parse_section(VerifierConfig, data.get("verifier"), "verifier."),
        dataset=_parse_section(DatasetConfig, data.get("dataset"), "dataset."),
        supervisor=_parse_section(
            SupervisorConfig, data.get("supervisor"), "supervisor."
        ),
        tasks=_parse_tasks(data.get("tasks"), "tasks"),
    )
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: Config):
    sim = cfg.sim
    if sim.max_ee_speed <= 0 or sim.max_ee_angular <= 0 or sim.max_gripper_rate <= 0:
        raise ConfigError("'sim' rate caps must be positive")
    if not (0.0 <= sim.grasp_threshold < sim.release_threshold <= 1.0):
        raise ConfigError(
            "'sim.grasp_threshold' must be below 'sim.release_threshold' within [0, 1]"
        )
    for lo, hi, name in zip(sim.workspace_min, sim.workspace_max, "xyz"):
        if lo >= hi:
            raise ConfigError(f"'sim.workspace_min' {name} not below workspace_max")
    planner = cfg.planner
    if planner.steps_per_stage < planner.min_stage_steps:
        raise ConfigError(
            "'planner.steps_per_stage' below 'planner.min_stage_steps'"
        )
    if not (0.0 < planner.grasp_approach_offset < sim.grasp_radius):
        raise ConfigError(
            "'planner.grasp_approach_offset' must sit inside the grasp radius"
        )
    for task_id, steps in planner.task_steps.items():
        if steps < planner.min_stage_steps:
            raise ConfigError(
                f"'planner.task_steps.{task_id}' below 'planner.min_stage_steps'"
            )
    if cfg.dataset.failure_to_gt_ratio <= 0:
        raise ConfigError("'dataset.failure_to_gt_ratio' must be positive")
    if cfg.dataset.candidates_per_case < 1:
        raise ConfigError("'dataset.candidates_per_case' must be >= 1")
    if cfg.supervisor.cadence < 1:
        raise ConfigError("'supervisor.cadence' must be >= 1")


def load_config(path) -> Config:
    """Parse and validate a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_mapping(data)


def default_config() -> Config:
    """The packaged default configuration (data/default.yaml)."""
    from importlib.resources import files

    text = files("failsafe").joinpath("data/default.yaml").read_text("utf-8")
    return config_from_mapping(yaml.safe_load(text))


def _plain(value):
    if isinstance(value, FailureEntry):
        return value.as_dict()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def canonical_dict(cfg: Config) -> dict:
    """Fully resolved config as plain data, independent of source formatting."""
    out = {}
    for section in fields(Config):
        value = getattr(cfg, section.name)
        if section.name == "tasks":
            out["tasks"] = _plain(value)
        else:
            out[section.name] = {
                f.name: _plain(getattr(value, f.name)) for f in fields(value)
            }
    return out


def config_sha256(cfg: Config) -> str:
    blob = json.dumps(canonical_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def with_overrides(cfg: Config, **sections) -> Config:
    """Convenience for tests: replace whole sections on a config."""
    return replace(cfg, **sections)
