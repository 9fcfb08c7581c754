"""SE(3) pose algebra: composition, slerp interpolation, 7-DoF delta actions.

Conventions used across the package:
  - quaternions are (w, x, y, z), unit norm, Hamilton product
  - RPY means extrinsic world-frame roll-pitch-yaw, R = Rz(yaw) Ry(pitch) Rx(roll)
  - relative rotations are taken in the world frame (left multiplication)
  - units are meters and radians everywhere
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyPlanError, InvalidPoseError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# Axis order shared by rotation-axis names and quat_about_axis indices.
ROTATION_AXES = ("roll", "pitch", "yaw")
TRANSLATION_AXES = ("x", "y", "z")


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(np.dot(q, q)))
    if n == 0.0 or not math.isfinite(n):
        raise InvalidPoseError("quaternion has zero or non-finite norm")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def quat_about_axis(axis: int, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation about world axis 0=x, 1=y, 2=z."""
    half = 0.5 * angle
    q = np.zeros(4)
    q[0] = math.cos(half)
    q[1 + axis] = math.sin(half)
    return q


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    qx = quat_about_axis(0, roll)
    qy = quat_about_axis(1, pitch)
    qz = quat_about_axis(2, yaw)
    return quat_normalize(quat_multiply(qz, quat_multiply(qy, qx)))


def quat_to_rpy(q) -> np.ndarray:
    """Extrinsic world-frame (roll, pitch, yaw) of a unit quaternion.

    At gimbal lock (|pitch| = pi/2) yaw is pinned to 0 and the full residual
    goes to roll. Both branches degrade in a band of width ~1e-7 around the
    lock, which random relative rotations do not reach.
    """
    w, x, y, z = q
    sinp = 2.0 * (w * y - z * x)
    if abs(sinp) >= 1.0 - 1e-12:
        pitch = math.copysign(0.5 * math.pi, sinp)
        roll = wrap_angle(2.0 * math.atan2(x, w))
        return np.array([roll, pitch, 0.0])
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = math.asin(sinp)
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def quat_distance(a, b) -> float:
    """Chordal distance min(|a-b|, |a+b|); 0 for identical rotations."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return min(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))


def slerp(q0, q1, t: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-10:
        # Nearly parallel: lerp is numerically safer than sin division.
        return quat_normalize(q0 + t * (q1 - q0))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    a = math.sin((1.0 - t) * theta) / s
    b = math.sin(t * theta) / s
    return quat_normalize(a * q0 + b * q1)


_GRIPPER_SLACK = 1e-9


@dataclass(eq=False)
class Pose:
    """End-effector configuration: position (m), orientation quaternion, gripper.

    gripper is an aperture in [0, 1]: 0 fully closed, 1 fully open.
    """

    position: np.ndarray
    orientation: np.ndarray
    gripper: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.position.shape != (3,):
            raise InvalidPoseError("position must be a 3-vector")
        if not np.isfinite(self.position).all():
            raise InvalidPoseError("position must be finite")
        orientation = np.asarray(self.orientation, dtype=np.float64)
        if orientation.shape != (4,):
            raise InvalidPoseError("orientation must be a (w,x,y,z) quaternion")
        if not np.isfinite(orientation).all():
            raise InvalidPoseError("orientation must be finite")
        self.orientation = quat_normalize(orientation)
        g = float(self.gripper)
        if not math.isfinite(g):
            raise InvalidPoseError("gripper must be finite")
        if g < -_GRIPPER_SLACK or g > 1.0 + _GRIPPER_SLACK:
            raise InvalidPoseError(f"gripper {g} outside [0, 1]")
        self.gripper = min(1.0, max(0.0, g))

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy(), self.gripper)


@dataclass(eq=False)
class DeltaAction:
    """7-DoF corrective action: translation, extrinsic RPY rotation, gripper delta."""

    d_position: np.ndarray
    d_rotation: np.ndarray
    d_gripper: float = 0.0

    def __post_init__(self):
        self.d_position = np.asarray(self.d_position, dtype=np.float64)
        if self.d_position.shape != (3,) or not np.isfinite(self.d_position).all():
            raise InvalidPoseError("d_position must be a finite 3-vector")
        d_rotation = np.asarray(self.d_rotation, dtype=np.float64)
        if d_rotation.shape != (3,) or not np.isfinite(d_rotation).all():
            raise InvalidPoseError("d_rotation must be a finite 3-vector")
        self.d_rotation = np.array([wrap_angle(float(a)) for a in d_rotation])
        g = float(self.d_gripper)
        if not math.isfinite(g) or abs(g) > 1.0 + _GRIPPER_SLACK:
            raise InvalidPoseError(f"d_gripper {g} outside [-1, 1]")
        self.d_gripper = min(1.0, max(-1.0, g))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_position, self.d_rotation, [self.d_gripper]])

    @classmethod
    def from_vector(cls, v) -> "DeltaAction":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (7,):
            raise InvalidPoseError("action vector must have 7 components")
        return cls(v[0:3], v[3:6], float(v[6]))

    @classmethod
    def zero(cls) -> "DeltaAction":
        return cls(np.zeros(3), np.zeros(3), 0.0)


def delta_action(p_d: Pose, p_c: Pose) -> DeltaAction:
    """The 7-DoF action taking p_d to p_c (world-frame relative rotation)."""
    d_position = p_c.position - p_d.position
    if np.array_equal(p_c.orientation, p_d.orientation) or np.array_equal(
        p_c.orientation, -p_d.orientation
    ):
        d_rotation = np.zeros(3)
    else:
        q_rel = quat_normalize(
            quat_multiply(p_c.orientation, quat_conjugate(p_d.orientation))
        )
        d_rotation = quat_to_rpy(q_rel)
    return DeltaAction(d_position, d_rotation, p_c.gripper - p_d.gripper)


def apply_delta(p: Pose, a: DeltaAction) -> Pose:
    """Execute a delta action on a pose; gripper clamps to [0, 1]."""
    position = p.position + a.d_position
    orientation = quat_multiply(
        quat_from_rpy(a.d_rotation[0], a.d_rotation[1], a.d_rotation[2]),
        p.orientation,
    )
    gripper = min(1.0, max(0.0, p.gripper + a.d_gripper))
    return Pose(position, orientation, gripper)


def interpolate_stage(start: Pose, end: Pose, steps: int) -> list:
    """`steps` poses from start (exclusive) to end (inclusive, exact copy)."""
    if steps < 1:
        raise EmptyPlanError(f"cannot interpolate a stage over {steps} steps")
    poses = []
    for i in range(1, steps):
        t = i / steps
        poses.append(
            Pose(
                (1.0 - t) * start.position + t * end.position,
                slerp(start.orientation, end.orientation, t),
                (1.0 - t) * start.gripper + t * end.gripper,
            )
        )
    poses.append(end.copy())
    return poses


def pose_distance(p: Pose, q: Pose) -> tuple:
    """(translational meters, angular radians) distance between two poses."""
    if np.array_equal(p.position, q.position):
        translational = 0.0
    else:
        translational = float(np.linalg.norm(p.position - q.position))
    if np.array_equal(p.orientation, q.orientation) or np.array_equal(
        p.orientation, -q.orientation
    ):
        angular = 0.0
    else:
        q_rel = quat_multiply(p.orientation, quat_conjugate(q.orientation))
        angular = 2.0 * math.atan2(
            float(np.linalg.norm(q_rel[1:])), abs(float(q_rel[0]))
        )
    return translational, angular
