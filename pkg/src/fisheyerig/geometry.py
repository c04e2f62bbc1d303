"""Small shared SO(3)/SE(3)/SE(2) helpers."""

import numpy as np
from scipy.spatial.transform import Rotation


def skew(v):
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def unskew(m):
    """Vector of the antisymmetric part of a 3x3 matrix."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rotz(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(rotation):
    return float(np.arctan2(rotation[1, 0], rotation[0, 0]))


def wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def exp_so3(w):
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def log_so3(rotation):
    return Rotation.from_matrix(rotation).as_rotvec()


def project_to_so3(m):
    """Nearest rotation matrix in Frobenius norm."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle(rotation):
    """Geodesic angle of a rotation matrix, radians."""
    c = (np.trace(rotation) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def compose(pose_a, pose_b):
    """(R_a, t_a) o (R_b, t_b): apply b first, then a."""
    ra, ta = pose_a
    rb, tb = pose_b
    return ra @ rb, ra @ tb + ta


def invert(pose):
    r, t = pose
    return r.T, -r.T @ t


def relative(pose_a, pose_b):
    """Pose of b expressed in a's frame."""
    return compose(invert(pose_a), pose_b)


def se2_to_se3(x, y, yaw):
    return rotz(yaw), np.array([x, y, 0.0])


def se3_to_se2(pose):
    r, t = pose
    return float(t[0]), float(t[1]), yaw_of(r)
