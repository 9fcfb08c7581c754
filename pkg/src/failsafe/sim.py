"""Deterministic kinematic tabletop simulator.

No dynamics: the end-effector tracks commanded poses under per-step speed
caps with exact landing, objects attach to a closing gripper inside the
grasp radius, and unattached pushable objects translate with the horizontal
component of an EE sweep that passes within the contact radius. Identical
(world, command, config) inputs always produce bit-identical next states,
which is what makes recovery verification exactly replayable.
"""

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SimConfig
from .errors import InvalidCommandError, SceneError
from .geometry import (
    Pose,
    pose_distance,
    quat_conjugate,
    quat_multiply,
    quat_rotate,
    slerp,
)

DOWN = np.array([0.0, 0.0, -1.0])
CAMERA_IDS = ("front", "side", "hand")
# Fixed cameras aim here; roughly the center of the manipulation volume.
LOOK_AT = np.array([0.0, 0.0, 0.05])


@dataclass(frozen=True)
class ObjectState:
    """A rigid object. half_extents is (hx, hy, hz); spheres use (r, r, r)."""

    shape: str  # box | sphere | charger-slab
    half_extents: tuple
    pose: Pose
    graspable: bool = True
    pushable: bool = True


@dataclass(frozen=True)
class GraspOffset:
    """Object pose relative to the EE frame, recorded at attach time."""

    position: np.ndarray  # in the EE frame
    orientation: np.ndarray  # relative quaternion


@dataclass(frozen=True)
class WorldState:
    ee_pose: Pose
    objects: dict  # object-id -> ObjectState
    attached: str | None = None
    grasp_offset: GraspOffset | None = None
    table_z: float = 0.0
    goal: tuple | None = None
    step_count: int = 0


def attached_object_pose(ee_pose: Pose, offset: GraspOffset) -> Pose:
    position = ee_pose.position + quat_rotate(ee_pose.orientation, offset.position)
    orientation = quat_multiply(ee_pose.orientation, offset.orientation)
    return Pose(position, orientation, 0.0)


def _segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    d = b - a
    dd = float(np.dot(d, d))
    if dd == 0.0:
        return float(np.linalg.norm(p - a))
    t = min(1.0, max(0.0, float(np.dot(p - a, d)) / dd))
    return float(np.linalg.norm(p - (a + t * d)))


class Simulator:
    """Pure-function stepper over WorldState values under one SimConfig."""

    def __init__(self, config=None):
        if config is None:
            config = SimConfig()
        # Accept the full bundle or just the sim section.
        self.config = getattr(config, "sim", config)

    # -- stepping ----------------------------------------------------------

    def step(self, world: WorldState, target: Pose) -> WorldState:
        cfg = self.config
        if (
            not np.isfinite(target.position).all()
            or not np.isfinite(target.orientation).all()
            or not math.isfinite(target.gripper)
        ):
            raise InvalidCommandError("non-finite command target")

        goal_pos = self.clamp_position(target.position)

        ee = world.ee_pose
        delta = goal_pos - ee.position
        dist = float(np.linalg.norm(delta))
        if dist <= cfg.max_ee_speed:
            new_pos = goal_pos.copy()
        else:
            new_pos = ee.position + delta * (cfg.max_ee_speed / dist)

        _, ang = pose_distance(ee, target)
        if ang <= cfg.max_ee_angular:
            new_quat = target.orientation.copy()
        else:
            new_quat = slerp(ee.orientation, target.orientation, cfg.max_ee_angular / ang)

        dg = target.gripper - ee.gripper
        if abs(dg) <= cfg.max_gripper_rate:
            new_grip = target.gripper
        else:
            new_grip = ee.gripper + math.copysign(cfg.max_gripper_rate, dg)

        new_ee = Pose(new_pos, new_quat, new_grip)
        objects = dict(world.objects)
        attached = world.attached
        offset = world.grasp_offset

        if attached is not None:
            if new_grip >= cfg.release_threshold:
                # Object is let go where it currently is.
                attached = None
                offset = None
            else:
                obj = objects[attached]
                objects[attached] = replace(
                    obj, pose=attached_object_pose(new_ee, offset)
                )
        else:
            sweep = new_pos - ee.position
            horizontal = np.array([sweep[0], sweep[1], 0.0])
            if horizontal[0] != 0.0 or horizontal[1] != 0.0:
                for obj_id in sorted(objects):
                    obj = objects[obj_id]
                    if not obj.pushable:
                        continue
                    gap = _segment_point_distance(
                        ee.position, new_pos, obj.pose.position
                    )
                    if gap <= cfg.contact_radius:
                        moved = Pose(
                            obj.pose.position + horizontal,
                            obj.pose.orientation,
                            obj.pose.gripper,
                        )
                        objects[obj_id] = replace(obj, pose=moved)
            if new_grip <= cfg.grasp_threshold and self._tool_aligned(new_ee):
                attached, offset = self._try_attach(new_ee, objects)

        return WorldState(
            ee_pose=new_ee,
            objects=objects,
            attached=attached,
            grasp_offset=offset,
            table_z=world.table_z,
            goal=world.goal,
            step_count=world.step_count + 1,
        )

    def clamp_position(self, position) -> np.ndarray:
        """Where a commanded position actually lands: inside the workspace."""
        cfg = self.config
        return np.minimum(
            np.maximum(position, np.asarray(cfg.workspace_min)),
            np.asarray(cfg.workspace_max),
        )

    def _tool_aligned(self, ee: Pose) -> bool:
        axis = quat_rotate(ee.orientation, DOWN)
        cos_angle = min(1.0, max(-1.0, float(np.dot(axis, DOWN))))
        return math.acos(cos_angle) <= self.config.grasp_align_tol

    def _try_attach(self, ee: Pose, objects: dict):
        best_id = None
        best_dist = math.inf
        for obj_id in sorted(objects):
            obj = objects[obj_id]
            if not obj.graspable:
                continue
            d = float(np.linalg.norm(obj.pose.position - ee.position))
            if d > self.config.grasp_radius:
                continue
            if d < best_dist:  # ties keep the first id in sorted order
                best_id = obj_id
                best_dist = d
        if best_id is None:
            return None, None
        obj = objects[best_id]
        inv = quat_conjugate(ee.orientation)
        offset = GraspOffset(
            position=quat_rotate(inv, obj.pose.position - ee.position),
            orientation=quat_multiply(inv, obj.pose.orientation),
        )
        objects[best_id] = replace(obj, pose=attached_object_pose(ee, offset))
        return best_id, offset

    # -- success predicates ------------------------------------------------

    def evaluate_success(self, world: WorldState, task) -> bool:
        task_id = getattr(task, "task_id", task)
        if task_id in ("pick_cube", "pick_sphere", "pick_charger"):
            target = {"pick_cube": "cube", "pick_sphere": "sphere", "pick_charger": "charger"}[task_id]
            obj = self._require(world, target)
            if world.attached != target:
                return False
            return bool(obj.pose.position[2] >= world.table_z + self.config.lift_threshold)
        if task_id == "push_cube":
            obj = self._require(world, "cube")
            if world.goal is None:
                raise SceneError("push_cube world has no goal")
            gap = math.hypot(
                obj.pose.position[0] - world.goal[0],
                obj.pose.position[1] - world.goal[1],
            )
            return gap <= self.config.goal_radius
        if task_id in ("stack_cube", "place_sphere"):
            top_id, base_id = (
                ("cube_a", "cube_b") if task_id == "stack_cube" else ("sphere", "pad")
            )
            top = self._require(world, top_id)
            base = self._require(world, base_id)
            if world.attached == top_id:
                return False
            dx = top.pose.position[0] - base.pose.position[0]
            dy = top.pose.position[1] - base.pose.position[1]
            if math.hypot(dx, dy) > self.config.stack_xy_tol:
                return False
            stack_height = base.half_extents[2] + top.half_extents[2]
            target_z = base.pose.position[2] + stack_height
            return bool(abs(top.pose.position[2] - target_z) <= self.config.stack_z_tol)
        raise SceneError(f"unknown task '{task_id}'")

    @staticmethod
    def _require(world: WorldState, obj_id: str) -> ObjectState:
        try:
            return world.objects[obj_id]
        except KeyError:
            raise SceneError(f"scene is missing object '{obj_id}'") from None

    # -- observation -------------------------------------------------------

    def observe(self, world: WorldState) -> "ObservationFrame":
        keypoints = self._keypoints(world)
        cameras = {
            "front": self._project_all(self._fixed_camera(self.config.front_camera), keypoints),
            "side": self._project_all(self._fixed_camera(self.config.side_camera), keypoints),
            "hand": self._project_all(self._hand_camera(world.ee_pose), keypoints),
        }
        object_poses = {
            obj_id: world.objects[obj_id].pose.copy() for obj_id in sorted(world.objects)
        }
        return ObservationFrame(
            ee_pose=world.ee_pose.copy(),
            object_poses=object_poses,
            cameras=cameras,
            step=world.step_count,
        )

    def _keypoints(self, world: WorldState):
        pts = [("ee:center", world.ee_pose.position)]
        for obj_id in sorted(world.objects):
            obj = world.objects[obj_id]
            pts.append((f"{obj_id}:center", obj.pose.position))
            if obj.shape in ("box", "charger-slab"):
                hx, hy, hz = obj.half_extents
                corners = itertools.product((-1, 1), (-1, 1), (-1, 1))
                for i, (sx, sy, sz) in enumerate(corners):
                    corner = obj.pose.position + quat_rotate(
                        obj.pose.orientation, np.array([sx * hx, sy * hy, sz * hz])
                    )
                    pts.append((f"{obj_id}:corner{i}", corner))
        return pts

    def _fixed_camera(self, position):
        pos = np.asarray(position, dtype=float)
        forward = LOOK_AT - pos
        forward = forward / np.linalg.norm(forward)
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up)
        norm = np.linalg.norm(right)
        if norm < 1e-9:  # looking straight down: pick a fixed right axis
            right = np.array([1.0, 0.0, 0.0])
        else:
            right = right / norm
        down = np.cross(forward, right)
        return pos, right, down, forward

    def _hand_camera(self, ee: Pose):
        forward = quat_rotate(ee.orientation, DOWN)
        right = quat_rotate(ee.orientation, np.array([1.0, 0.0, 0.0]))
        down = np.cross(forward, right)
        return ee.position.copy(), right, down, forward

    def _project_all(self, camera, keypoints):
        pos, right, down, forward = camera
        cfg = self.config
        cx = cfg.image_width / 2.0
        cy = cfg.image_height / 2.0
        out = []
        for kp_id, point in keypoints:
            rel = point - pos
            z = float(np.dot(rel, forward))
            if z <= 1e-9:  # behind the camera: absent, never projected
                continue
            u = cx + cfg.focal_px * float(np.dot(rel, right)) / z
            v = cy + cfg.focal_px * float(np.dot(rel, down)) / z
            out.append((kp_id, u, v))
        return out


@dataclass(frozen=True)
class ObservationFrame:
    """Numeric observation: poses plus per-camera pixel keypoints."""

    ee_pose: Pose
    object_poses: dict
    cameras: dict  # camera-id -> list of (keypoint-id, u, v)
    step: int
