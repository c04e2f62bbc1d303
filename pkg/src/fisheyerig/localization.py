"""Map-based absolute pose from 2D-3D matches.

Pixels are lifted to Pluecker rays through the calibrated rig, a
generalized P3P solver runs inside RANSAC, and the winning pose is
polished on all inliers by minimizing angular reprojection. Frames
ending with fewer than min_inliers supporting matches are rejected
rather than reported at low confidence.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rig as rig_mod
from .errors import NotLocalized
from .robust import RansacConfig, make_point_ray_scorer, run_ransac
from .solvers import PointRayCorrespondence, solve_gp3p
from .rig import VehiclePose

DEFAULT_MIN_INLIERS = 20


@dataclass
class LocalizationQuery:
    """Per-frame candidate matches: (camera_id, (u, v), landmark_id)."""

    frame_id: int
    matches: list
    prior_pose: VehiclePose = None


@dataclass
class LocalizationResult:
    pose: VehiclePose
    inlier_mask: np.ndarray
    inlier_count: int
    iterations: int


def point_ray_angle(corr, pose):
    """Angle between an observed ray and the direction to the point.

    pose is (R, t) or VehiclePose mapping rig coordinates to world; the
    vertex is the ray's closest point to the rig origin (within a rig
    radius of the true camera center).
    """
    if isinstance(pose, VehiclePose):
        rot, t = pose.rotation, pose.translation
    else:
        rot, t = pose
    x_rig = rot.T @ (corr.world_point - t)
    d = x_rig - corr.ray.closest_point_to_origin()
    dn = np.linalg.norm(d)
    if dn < 1e-12:
        return np.pi / 2
    q = corr.ray.q
    return float(np.arctan2(np.linalg.norm(np.cross(q, d)), float(q @ d)))


def correspondences_from_matches(smap, extr, matches):
    """Lift (camera_id, uv, landmark_id) matches to point-ray pairs."""
    id_to_index = {int(lid): i for i, lid in enumerate(smap.landmark_ids)}
    corrs = []
    for camera_id, uv, landmark_id in matches:
        if int(landmark_id) not in id_to_index:
            raise KeyError(f"landmark id {landmark_id} not in map")
        intr = extr.intrinsics[camera_id]
        try:
            ray = rig_mod.lift_to_plucker(extr, camera_id, intr, uv)
        except Exception:
            continue
        point = smap.landmarks[id_to_index[int(landmark_id)]]
        corrs.append(PointRayCorrespondence(point, ray))
    return corrs


def localize(smap, query, extr, config=None, min_inliers=DEFAULT_MIN_INLIERS,
             min_candidates=3, refine_iterations=10):
    """Absolute rig pose for one frame, or NotLocalized.

    The inlier threshold applies post-RANSAC: frames whose best
    hypothesis is supported by fewer than min_inliers matches raise
    NotLocalized regardless of the candidate count.
    """
    if config is None:
        config = RansacConfig(sample_size=3, inlier_ratio=0.5,
                              threshold=np.deg2rad(0.5))
    corrs = correspondences_from_matches(smap, extr, query.matches)
    if len(corrs) < max(3, min_candidates):
        raise NotLocalized(
            f"frame {query.frame_id}: only {len(corrs)} usable candidates",
            inlier_count=0, candidate_count=len(corrs))
    scorer = make_point_ray_scorer(corrs)
    result = run_ransac(solve_gp3p, corrs, config, scorer=scorer)
    if result.score < min_inliers:
        raise NotLocalized(
            f"frame {query.frame_id}: {result.score} inliers < {min_inliers}",
            inlier_count=result.score, candidate_count=len(corrs))
    inliers = [c for c, ok in zip(corrs, result.inlier_mask) if ok]
    rot, t = result.model
    rot, t = refine_pose_angular(inliers, rot, t, refine_iterations)
    pose = VehiclePose(rot, t)
    mask = scorer((rot, t)) < config.threshold
    count = int(mask.sum())
    if count < min_inliers:
        raise NotLocalized(
            f"frame {query.frame_id}: {count} inliers after refinement",
            inlier_count=count, candidate_count=len(corrs))
    return LocalizationResult(pose, mask, count, result.iterations)


def refine_pose_angular(corrs, rotation, translation, iterations=10):
    """Gauss-Newton on tangent-plane angular residuals over inliers."""
    from scipy.spatial.transform import Rotation

    rot = np.asarray(rotation, dtype=float)
    t = np.asarray(translation, dtype=float)
    pts = np.array([c.world_point for c in corrs])
    q = np.array([c.ray.q for c in corrs])
    o = np.array([c.ray.closest_point_to_origin() for c in corrs])
    b1 = np.cross(q, np.array([0.0, 0.0, 1.0]))
    weak = np.linalg.norm(b1, axis=1) < 1e-6
    b1[weak] = np.cross(q[weak], np.array([1.0, 0.0, 0.0]))
    b1 /= np.linalg.norm(b1, axis=1, keepdims=True)
    b2 = np.cross(q, b1)

    def residuals(r, tt):
        d = (pts - tt) @ r - o
        dn = np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
        d = d / dn
        return np.stack([np.sum(b1 * d, axis=1),
                         np.sum(b2 * d, axis=1)], axis=1).ravel()

    h = 1e-7
    for _ in range(iterations):
        r0 = residuals(rot, t)
        jac = np.empty((len(r0), 6))
        for k in range(6):
            delta = np.zeros(6)
            delta[k] = h
            rp = rot @ Rotation.from_rotvec(delta[:3]).as_matrix()
            rm = rot @ Rotation.from_rotvec(-delta[:3]).as_matrix()
            jac[:, k] = (residuals(rp, t + delta[3:])
                         - residuals(rm, t - delta[3:])) / (2 * h)
        try:
            step, _, _, _ = np.linalg.lstsq(jac, -r0, rcond=None)
        except np.linalg.LinAlgError:
            break
        rot = rot @ Rotation.from_rotvec(step[:3]).as_matrix()
        t = t + step[3:]
        if np.linalg.norm(step) < 1e-14:
            break
    return rot, t


def bridge_with_odometry(last_pose, odometry_delta):
    """Compose the last known pose with a planar odometry step."""
    dx, dy, dyaw = odometry_delta
    return last_pose.compose(VehiclePose.from_planar(dx, dy, dyaw))


@dataclass
class TrajectoryRecord:
    frame_id: int
    status: str  # "localized" | "bridged" | "lost"
    pose: VehiclePose = None
    inliers: int = 0


def localize_sequence(smap, queries, extr, odometry=None, config=None,
                      min_inliers=DEFAULT_MIN_INLIERS):
    """Localize a frame sequence, bridging gaps with odometry steps.

    odometry[i] is the planar step from frame i to frame i+1; frames
    that fail visual localization reuse the last pose composed with the
    accumulated odometry, with status "bridged" ("lost" if no pose yet).
    """
    records = []
    last_pose = None
    for idx, query in enumerate(queries):
        try:
            res = localize(smap, query, extr, config, min_inliers)
            last_pose = res.pose
            records.append(TrajectoryRecord(query.frame_id, "localized",
                                            res.pose, res.inlier_count))
        except NotLocalized:
            if last_pose is not None and odometry is not None and idx > 0:
                last_pose = bridge_with_odometry(last_pose, odometry[idx - 1])
                records.append(TrajectoryRecord(query.frame_id, "bridged",
                                                last_pose, 0))
            else:
                records.append(TrajectoryRecord(query.frame_id, "lost"))
    return records
