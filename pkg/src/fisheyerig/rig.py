"""Multi-camera rig geometry: extrinsics, Pluecker rays, vehicle poses.

The rig frame coincides with the vehicle odometry frame: x forward,
y left, z up. Planar motion lives in x-y.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import camera as cam
from .errors import AntipodalRotations, NonPositiveDepth

_ORTHO_TOL = 1e-9


def _check_rotation(r, tol=_ORTHO_TOL):
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.max(np.abs(r @ r.T - np.eye(3))) > tol or abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("matrix is not a proper rotation")
    return r


@dataclass(frozen=True)
class VehiclePose:
    """Pose of the rig frame in the world frame: X_w = R X_rig + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_planar(cls, x, y, yaw):
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.array([x, y, 0.0]))

    def as_planar(self):
        return (float(self.translation[0]), float(self.translation[1]),
                float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0])))

    def transform(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse_transform(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation

    def compose(self, other):
        return VehiclePose(self.rotation @ other.rotation,
                           self.rotation @ other.translation + self.translation)

    def inverse(self):
        return VehiclePose(self.rotation.T, -self.rotation.T @ self.translation)

    def quaternion_wxyz(self):
        q = Rotation.from_matrix(self.rotation).as_quat()  # xyzw
        return np.array([q[3], q[0], q[1], q[2]])


@dataclass(frozen=True)
class CameraPose:
    """Pose of one camera in the rig frame: X_rig = R_C X_cam + t_C."""

    rotation: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass
class RigExtrinsics:
    """Per-camera 6-DoF transforms from camera frame to rig frame."""

    cameras: list = field(default_factory=list)  # list[CameraPose]
    intrinsics: list = field(default_factory=list)  # list[CameraIntrinsics]

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("a rig needs at least one camera")
        if self.intrinsics and len(self.intrinsics) != len(self.cameras):
            raise ValueError("intrinsics count must match camera count")

    def __len__(self):
        return len(self.cameras)

    def camera_pose_in_world(self, camera_index, vehicle_pose):
        c = self.cameras[camera_index]
        return (vehicle_pose.rotation @ c.rotation,
                vehicle_pose.rotation @ c.center + vehicle_pose.translation)


@dataclass(frozen=True)
class PluckerRay:
    """Viewing ray in the rig frame: unit direction q and moment q x ... = t_C x q."""

    q: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        m = np.asarray(self.moment, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if abs(float(np.dot(q, m))) > 1e-9:
            raise ValueError("Pluecker constraint q . moment = 0 violated")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "moment", m)

    def as_vector(self):
        return np.concatenate([self.q, self.moment])

    def closest_point_to_origin(self):
        return np.cross(self.q, self.moment)


def lift_to_plucker(extr, camera_index, intr, pixel):
    """Lift an image pixel to a Pluecker ray in the rig frame."""
    ray_cam = cam.unproject(intr, pixel)
    pose = extr.cameras[camera_index]
    q = pose.rotation @ ray_cam
    return PluckerRay(q, np.cross(pose.center, q))


def plucker_from_direction(direction, point_on_line):
    """Ray through a given point with a given (not necessarily unit) direction."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return PluckerRay(d, np.cross(np.asarray(point_on_line, dtype=float), d))


def point_on_ray(ray, depth):
    """Point q x q' + depth * q; depth measured from the line's closest
    point to the rig origin."""
    if depth <= 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    return np.cross(ray.q, ray.moment) + depth * ray.q


def common_rectification_rotation(rotation_a, rotation_b):
    """Rotation midway along the geodesic between two camera rotations.

    Realized as the unit-quaternion midpoint with sign alignment
    (shorter arc). Raises AntipodalRotations for a 180 deg pair.
    """
    ra = _check_rotation(rotation_a)
    rb = _check_rotation(rotation_b)
    qa = Rotation.from_matrix(ra).as_quat()
    qb = Rotation.from_matrix(rb).as_quat()
    if np.dot(qa, qb) < 0:
        qb = -qb
    mid = qa + qb
    n = np.linalg.norm(mid)
    if n < 1e-9:
        raise AntipodalRotations("rotations differ by 180 deg; midpoint ambiguous")
    return Rotation.from_quat(mid / n).as_matrix()
