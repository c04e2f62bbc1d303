"""Extrinsic calibration of a multi-fisheye rig against wheel odometry.

Two entry points:

run_slam_calibration builds the rig from scratch out of per-camera
feature tracks and odometry: per-camera monocular visual odometry
feeds a planar hand-eye initialization, scene points are triangulated
and refined per camera with vehicle poses fixed, odometry drift is
corrected by loop closures and pose-graph optimization, inter-camera
correspondences restricted to a 3 m local frame history couple the
cameras, and a joint optimization over extrinsics, vehicle poses and
landmarks finishes the job.

calibrate_from_structure recalibrates against a trusted existing map
by localizing each camera individually (central P3P inside RANSAC)
and refining extrinsics and vehicle poses with landmarks held fixed.

Feature extraction and descriptor matching are out of scope: tracks
carry feature ids that act as the correspondence oracle (with real
images, inter-camera pairs would first be rectified onto the common
plane from rig.common_rectification_rotation before matching).
"""

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import camera as cam
from .errors import (
    InsufficientMotion,
    LocalizationFailed,
    StageFailure,
    UnderconstrainedCamera,
)
from .geometry import project_to_so3, rotz
from .graph_opt import (
    BundleOptions,
    PoseGraph,
    PoseGraphEdge,
    SparseMap,
    _BundleProblem,
    bundle_adjust,
    optimize_pose_graph,
)
from .localization import point_ray_angle
from .rig import CameraPose, PluckerRay, RigExtrinsics, VehiclePose, lift_to_plucker
from .robust import RansacConfig, make_point_ray_scorer, make_ray_pair_scorer, run_ransac
from .solvers import (
    PointRayCorrespondence,
    RayCorrespondence,
    refine_motion_gec,
    solve_3pt_planar,
    solve_gp3p,
    solve_planar_hand_eye,
    triangulate,
)


@dataclass
class CalibConfig:
    keyframe_step: int = 4
    min_pair_features: int = 12
    min_track_length: int = 3
    min_triangulation_angle: float = 0.008  # radians
    max_triangulation_gap: float = 1.0  # meters
    min_landmark_depth: float = 1.0
    loop_gap: int = 40  # frames
    loop_radius: float = 4.0  # meters
    loop_min_shared: int = 12
    loop_frame_stride: int = 5
    local_window: float = 3.0  # meters of inter-camera frame history
    pixel_sigma: float = 1.0  # W1 = I / sigma^2
    odometry_xy_sigma: float = 0.01  # 1 cm encoder resolution
    odometry_yaw_sigma: float = np.deg2rad(0.1)
    kernel: str = "cauchy"
    kernel_scale: float = 1.0
    min_observations_per_camera: int = 100
    seed: int = 0

    def odometry_information(self):
        return np.diag([1.0 / self.odometry_xy_sigma ** 2,
                        1.0 / self.odometry_xy_sigma ** 2,
                        1.0 / self.odometry_yaw_sigma ** 2])


@dataclass
class CalibrationProblem:
    """Inputs of the joint optimization: map + odometry + weights."""

    smap: SparseMap
    odometry: list  # per-step (dx, dy, dyaw)
    pixel_sigma: float = 1.0
    odometry_information: np.ndarray = None
    kernel: str = "cauchy"
    kernel_scale: float = 1.0


@dataclass
class CalibrationResult:
    rig: RigExtrinsics
    poses: list
    landmarks: np.ndarray
    rms_reprojection_px: float
    rms_odometry: float
    reprojection_cost: float
    odometry_cost: float
    converged: bool
    warnings: list = field(default_factory=list)


def calibrate_joint(problem, max_iterations=100):
    """Jointly optimize extrinsics, vehicle poses and landmarks.

    The first vehicle pose is held fixed. Raises UnderconstrainedCamera
    when some camera's extrinsic normal-equation block is singular.
    """
    smap = problem.smap
    warn = []
    counts = np.bincount(smap.obs_camera, minlength=len(smap.rig.cameras))
    for c, n in enumerate(counts):
        if n < 100:
            warn.append(f"camera {c} has only {n} observations")
    shared = _has_inter_camera_landmarks(smap)
    if not shared:
        warn.append("no inter-camera correspondences: extrinsics are only "
                    "weakly coupled through odometry")
    options = BundleOptions(
        free_poses=True, free_landmarks=True, free_extrinsics=True,
        fix_first_pose=True, pixel_sigma=problem.pixel_sigma,
        kernel=problem.kernel, kernel_scale=problem.kernel_scale,
        odometry=problem.odometry,
        odometry_information=problem.odometry_information,
        max_iterations=max_iterations)
    _check_extrinsic_blocks(smap, options)
    result = bundle_adjust(smap, options)
    return CalibrationResult(
        result.map.rig, result.map.poses, result.map.landmarks,
        result.rms_reprojection_px, result.rms_odometry,
        result.reprojection_cost, result.odometry_cost,
        result.converged, warn)


def _has_inter_camera_landmarks(smap):
    cams_per_lm = {}
    for c, l in zip(smap.obs_camera, smap.obs_landmark):
        cams_per_lm.setdefault(int(l), set()).add(int(c))
    return any(len(s) > 1 for s in cams_per_lm.values())


def _check_extrinsic_blocks(smap, options):
    problem = _BundleProblem(smap, options)
    jac, _, _, _ = problem.build_normal_equations(problem.state())
    for c in range(len(smap.rig.cameras)):
        off = problem.extr_offset[c]
        if off < 0:
            continue
        block = (jac[:, off:off + 6].T @ jac[:, off:off + 6]).toarray()
        svals = np.linalg.svd(block, compute_uv=False)
        if svals[0] <= 0 or svals[-1] < 1e-12 * svals[0]:
            raise UnderconstrainedCamera(
                f"camera {c}: extrinsic block is singular")


# ---------------------------------------------------------------------------
# monocular visual odometry (stage input for the hand-eye step)
# ---------------------------------------------------------------------------

def _essential_from_rays(rays_prev, rays_curr):
    """Linear essential matrix with r_prev^T E r_curr = 0, ||E|| = 1."""
    a = np.einsum("ni,nj->nij", rays_prev, rays_curr).reshape(-1, 9)
    _, _, vt = np.linalg.svd(a)
    e = vt[-1].reshape(3, 3)
    u, s, vt2 = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt2


def _central_depths(r_prev, r_curr, rot, t):
    """Closest-approach depths of central ray pairs under (R, t)."""
    d2 = r_curr @ rot.T
    c = np.sum(r_prev * d2, axis=1)
    det = c * c - 1.0
    det = np.where(np.abs(det) < 1e-12, -1e-12, det)
    ra = r_prev @ t
    rb = np.sum(d2 * t, axis=1)
    la = (ra - c * rb) / (-det)
    lb = (c * ra - rb) / (-det)
    return la, lb


def _decompose_essential(e, rays_prev, rays_curr):
    """Pick the (R, t) with the best cheirality support; t unit length."""
    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    best = None
    for rot in (u @ w @ vt, u @ w.T @ vt):
        for sign in (1.0, -1.0):
            t = sign * u[:, 2]
            la, lb = _central_depths(rays_prev, rays_curr, rot, t)
            support = int(np.count_nonzero((la > 0) & (lb > 0)))
            if best is None or support > best[0]:
                best = (support, rot, t)
    _, rot, t = best
    # convention: X_prev = R X_curr + t needs E = [t]x R
    return rot, t


def _mono_vo_motions(intr, frame_pixels, keyframes, min_features):
    """Scale-consistent relative camera motions over keyframe pairs.

    frame_pixels maps frame -> {feature_id: (u, v)}. Returns a list of
    (index_of_first_keyframe, R, t) with a single unknown global scale,
    chained through shared-track depth ratios.
    """
    motions = []
    prev_depths = None
    scale = 1.0
    for k in range(len(keyframes) - 1):
        f0, f1 = keyframes[k], keyframes[k + 1]
        shared = sorted(set(frame_pixels[f0]) & set(frame_pixels[f1]))
        if len(shared) < min_features:
            prev_depths = None
            continue
        uv0 = np.array([frame_pixels[f0][i] for i in shared])
        uv1 = np.array([frame_pixels[f1][i] for i in shared])
        r0, ok0 = cam.unproject(intr, uv0)
        r1, ok1 = cam.unproject(intr, uv1)
        keep = ok0 & ok1
        if np.count_nonzero(keep) < min_features:
            prev_depths = None
            continue
        ids = [i for i, k_ in zip(shared, keep) if k_]
        r0, r1 = r0[keep], r1[keep]
        e = _essential_from_rays(r0, r1)
        rot, t = _decompose_essential(e, r0, r1)
        la, lb = _central_depths(r0, r1, rot, t)
        good = (la > 0) & (lb > 0)
        # depth of each shared feature in the second frame, unit scale
        pts_prev = la[:, None] * r0
        pts_curr = (pts_prev - t) @ rot
        depths_curr = {i: float(np.linalg.norm(p))
                       for i, p, g in zip(ids, pts_curr, good) if g}
        if prev_depths is not None:
            ratios = [prev_depths[i] / max(np.linalg.norm(la[j] * r0[j]), 1e-9)
                      for j, i in enumerate(ids)
                      if i in prev_depths and good[j]]
            if len(ratios) >= 3:
                scale *= float(np.median(ratios))
        motions.append((k, rot, scale * t))
        prev_depths = {i: scale * d for i, d in depths_curr.items()}
    return motions


def _compose_planar_steps(odometry, i0, i1):
    """Compose odometry steps i0..i1-1 into one planar relative pose."""
    rot = np.eye(3)
    t = np.zeros(3)
    for dx, dy, dyaw in odometry[i0:i1]:
        t = t + rot @ np.array([dx, dy, 0.0])
        rot = rot @ rotz(dyaw)
    return rot, t


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def _tracks_to_frame_pixels(tracks):
    frame_pixels = {}
    for obs in tracks:
        frame_pixels.setdefault(obs.frame_id, {})[obs.feature_id] = (obs.u, obs.v)
    return frame_pixels


def _stage_hand_eye(camera_id, intr, tracks, odometry, config):
    frame_pixels = _tracks_to_frame_pixels(tracks)
    frames = sorted(frame_pixels)
    keyframes = frames[::config.keyframe_step]
    motions = _mono_vo_motions(intr, frame_pixels, keyframes,
                               config.min_pair_features)
    if len(motions) < 2:
        raise InsufficientMotion(
            f"camera {camera_id}: too few visual-odometry motions")
    cam_motions = []
    odo_motions = []
    for k, rot, t in motions:
        i0 = frames.index(keyframes[k])
        i1 = frames.index(keyframes[k + 1])
        odo_motions.append(_compose_planar_steps(odometry, i0, i1))
        cam_motions.append((rot, t))
    hand_eye = solve_planar_hand_eye(cam_motions, odo_motions)
    return CameraPose(hand_eye.rotation, hand_eye.translation)


def _triangulate_tracks(camera_id, intr, camera_pose, tracks, poses, config):
    """World-frame landmark estimates from a single camera's tracks."""
    by_feature = {}
    for obs in tracks:
        by_feature.setdefault(obs.feature_id, []).append(obs)
    centers = {}
    rot_w = {}
    for f, pose in enumerate(poses):
        rot_w[f] = pose.rotation @ camera_pose.rotation
        centers[f] = pose.rotation @ camera_pose.center + pose.translation
    landmarks = {}
    for fid, obs_list in by_feature.items():
        if len(obs_list) < config.min_track_length:
            continue
        obs_list = sorted(obs_list, key=lambda o: o.frame_id)
        base = np.array([centers[o.frame_id] for o in obs_list])
        d = np.linalg.norm(base - base[0], axis=1)
        a, b = obs_list[0], obs_list[int(np.argmax(d))]
        if np.max(d) < 0.05:
            continue
        try:
            ra = rot_w[a.frame_id] @ cam.unproject(intr, (a.u, a.v))
            rb = rot_w[b.frame_id] @ cam.unproject(intr, (b.u, b.v))
        except Exception:
            continue
        if np.linalg.norm(np.cross(ra, rb)) < config.min_triangulation_angle:
            continue
        line_a = PluckerRay(ra, np.cross(centers[a.frame_id], ra))
        line_b = PluckerRay(rb, np.cross(centers[b.frame_id], rb))
        try:
            point, quality = triangulate(line_a, line_b)
        except Exception:
            continue
        if quality > config.max_triangulation_gap:
            continue
        da = (point - centers[a.frame_id]) @ ra
        db = (point - centers[b.frame_id]) @ rb
        if da < config.min_landmark_depth or db < config.min_landmark_depth:
            continue
        landmarks[fid] = point
    return landmarks


def _build_single_camera_map(camera_id, intr, camera_pose, tracks, poses,
                             landmarks):
    ids = sorted(landmarks)
    index = {fid: i for i, fid in enumerate(ids)}
    sel = [o for o in tracks if o.feature_id in index]
    rig = RigExtrinsics([camera_pose], [intr])
    return SparseMap(
        rig=rig, poses=list(poses),
        landmarks=np.array([landmarks[i] for i in ids]),
        obs_camera=np.zeros(len(sel), dtype=int),
        obs_frame=np.array([o.frame_id for o in sel]),
        obs_landmark=np.array([index[o.feature_id] for o in sel]),
        obs_uv=np.array([[o.u, o.v] for o in sel]),
        landmark_ids=np.array(ids))


def _stage_loop_closure(per_camera_tracks, rig, poses, odometry, config):
    """Verified loop-closure edges + pose-graph-corrected poses."""
    frame_obs = {}
    for camera_id, tracks in per_camera_tracks.items():
        for o in tracks:
            frame_obs.setdefault(o.frame_id, {}).setdefault(
                o.feature_id, []).append((camera_id, (o.u, o.v)))
    positions = np.array([p.translation for p in poses])
    n = len(poses)
    edges = []
    for i, (dx, dy, dyaw) in enumerate(odometry):
        edges.append(PoseGraphEdge(i, i + 1, "odometric", (dx, dy, dyaw),
                                   config.odometry_information()))
    loop_info = np.diag([1.0 / 0.02 ** 2, 1.0 / 0.02 ** 2,
                         1.0 / np.deg2rad(0.2) ** 2])
    n_loops = 0
    for i in range(0, n, config.loop_frame_stride):
        for j in range(i + config.loop_gap, n, config.loop_frame_stride):
            if np.linalg.norm(positions[j] - positions[i]) > config.loop_radius:
                continue
            shared = set(frame_obs.get(i, {})) & set(frame_obs.get(j, {}))
            if len(shared) < config.loop_min_shared:
                continue
            corrs = []
            for fid in sorted(shared):
                ca, uva = frame_obs[i][fid][0]
                cb, uvb = frame_obs[j][fid][0]
                try:
                    ray_i = lift_to_plucker(rig, ca, rig.intrinsics[ca], uva)
                    ray_j = lift_to_plucker(rig, cb, rig.intrinsics[cb], uvb)
                except Exception:
                    continue
                corrs.append(RayCorrespondence(ray_i, ray_j))
            if len(corrs) < config.loop_min_shared:
                continue
            cfg = RansacConfig(sample_size=3, seed=config.seed + i * n + j,
                               max_iterations=50,
                               threshold=np.deg2rad(0.5))
            try:
                res = run_ransac(solve_3pt_planar, corrs, cfg)
            except Exception:
                continue
            inliers = [c for c, ok in zip(corrs, res.inlier_mask) if ok]
            refined = refine_motion_gec(inliers, res.model)
            dyaw = np.arctan2(refined.rotation[1, 0], refined.rotation[0, 0])
            edges.append(PoseGraphEdge(
                i, j, "loop",
                (refined.translation[0], refined.translation[1], dyaw),
                loop_info))
            n_loops += 1
    graph = PoseGraph(list(poses), edges)
    optimized, cost, converged = optimize_pose_graph(graph)
    return optimized.nodes, n_loops, converged


def _stage_merge_inter_camera(per_camera_landmarks, per_camera_tracks, poses,
                              config, rng=None, oracle_outlier_ratio=0.0):
    """Merge per-camera landmark sets through the 3 m frame-history oracle.

    Feature ids act as ground-truth descriptor matches; only pairs of
    cameras observing the same id within the local window are merged.
    """
    positions = np.array([p.translation for p in poses])
    cam_ids = sorted(per_camera_landmarks)
    frames_by = {}
    for c in cam_ids:
        frames_by[c] = {}
        for o in per_camera_tracks[c]:
            frames_by[c].setdefault(o.feature_id, []).append(o.frame_id)
    merged = {}  # feature id -> set of cameras allowed to share it
    for ia, ca in enumerate(cam_ids):
        for cb in cam_ids[ia + 1:]:
            common = set(per_camera_landmarks[ca]) & set(per_camera_landmarks[cb])
            for fid in common:
                frames_a = frames_by[ca].get(fid, [])
                frames_b = frames_by[cb].get(fid, [])
                if not frames_a or not frames_b:
                    continue
                pa = positions[np.asarray(frames_a)]
                pb = positions[np.asarray(frames_b)]
                dmin = np.min(np.linalg.norm(
                    pa[:, None, :] - pb[None, :, :], axis=2))
                if dmin <= config.local_window:
                    merged.setdefault(fid, {cam_ids[0]}).update({ca, cb})
    if rng is not None and oracle_outlier_ratio > 0 and merged:
        # corrupt a fraction of merges: wrong-id associations
        fids = sorted(merged)
        n_bad = int(oracle_outlier_ratio * len(fids))
        for fid in rng.choice(fids, size=n_bad, replace=False):
            merged.pop(int(fid), None)
    return merged


def _assemble_joint_map(rig, poses, per_camera_landmarks, per_camera_tracks,
                        merged_ids):
    """One SparseMap over all cameras; unmerged ids stay camera-local."""
    entries = []  # (key, position)
    key_index = {}

    def key_for(camera_id, fid):
        if fid in merged_ids:
            return ("m", fid)
        return ("c", camera_id, fid)

    for camera_id in sorted(per_camera_landmarks):
        for fid, pos in per_camera_landmarks[camera_id].items():
            key = key_for(camera_id, fid)
            if key not in key_index:
                key_index[key] = len(entries)
                entries.append([key, np.array(pos, dtype=float), 1])
            elif key[0] == "m":
                rec = entries[key_index[key]]
                rec[1] = rec[1] + pos
                rec[2] += 1
    landmarks = np.array([rec[1] / rec[2] for rec in entries])
    obs_cam, obs_frame, obs_lm, obs_uv = [], [], [], []
    for camera_id in sorted(per_camera_tracks):
        for o in per_camera_tracks[camera_id]:
            key = key_for(camera_id, o.feature_id)
            idx = key_index.get(key)
            if idx is None:
                continue
            obs_cam.append(camera_id)
            obs_frame.append(o.frame_id)
            obs_lm.append(idx)
            obs_uv.append((o.u, o.v))
    return SparseMap(
        rig=rig, poses=list(poses), landmarks=landmarks,
        obs_camera=np.array(obs_cam), obs_frame=np.array(obs_frame),
        obs_landmark=np.array(obs_lm), obs_uv=np.array(obs_uv),
        landmark_ids=np.arange(len(landmarks)))


@dataclass
class SlamCalibrationReport:
    hand_eye: list
    stage_rms: dict
    loop_edges: int
    warnings: list


def run_slam_calibration(per_camera_tracks, odometry, intrinsics,
                         rig_init_absent=True, initial_rig=None,
                         config=None, oracle_outlier_ratio=0.0):
    """Full SLAM-based extrinsic calibration pipeline.

    per_camera_tracks: dict camera_id -> list of track observations
    (objects with camera_id, frame_id, feature_id, u, v). odometry:
    per-step (dx, dy, dyaw). intrinsics: one CameraIntrinsics per
    camera. Returns (RigExtrinsics, SparseMap, SlamCalibrationReport).
    """
    config = config or CalibConfig()
    cam_ids = sorted(per_camera_tracks)
    if isinstance(intrinsics, (list, tuple)):
        intr_by_cam = {c: intrinsics[i] for i, c in enumerate(cam_ids)}
    else:
        intr_by_cam = {c: intrinsics for c in cam_ids}
    n_frames = len(odometry) + 1
    odo_poses = [VehiclePose.identity()]
    for dx, dy, dyaw in odometry:
        odo_poses.append(odo_poses[-1].compose(
            VehiclePose.from_planar(dx, dy, dyaw)))
    report = SlamCalibrationReport([], {}, 0, [])

    # (a) planar hand-eye initialization per camera
    camera_poses = {}
    for c in cam_ids:
        if rig_init_absent or initial_rig is None:
            try:
                camera_poses[c] = _stage_hand_eye(
                    c, intr_by_cam[c], per_camera_tracks[c], odometry, config)
            except InsufficientMotion as exc:
                raise StageFailure("hand-eye", exc) from exc
        else:
            camera_poses[c] = initial_rig.cameras[c]
    report.hand_eye = [camera_poses[c] for c in cam_ids]

    # (b) per-camera scene reconstruction with fixed odometry poses
    per_camera_landmarks = {}
    refined_poses = {}
    for c in cam_ids:
        landmarks = _triangulate_tracks(
            c, intr_by_cam[c], camera_poses[c], per_camera_tracks[c],
            odo_poses, config)
        if len(landmarks) < 10:
            raise StageFailure(
                "scene-reconstruction",
                f"camera {c}: only {len(landmarks)} landmarks triangulated")
        smap = _build_single_camera_map(
            c, intr_by_cam[c], camera_poses[c], per_camera_tracks[c],
            odo_poses, landmarks)
        options = BundleOptions(
            free_poses=False, free_landmarks=True, free_extrinsics=True,
            pixel_sigma=config.pixel_sigma, kernel=config.kernel,
            kernel_scale=config.kernel_scale, max_iterations=40)
        result = bundle_adjust(smap, options)
        camera_poses[c] = result.map.rig.cameras[0]
        per_camera_landmarks[c] = {
            int(fid): result.map.landmarks[i]
            for i, fid in enumerate(result.map.landmark_ids)}
        report.stage_rms[f"camera{c}_refine_px"] = result.rms_reprojection_px

    rig = RigExtrinsics([camera_poses[c] for c in cam_ids],
                        [intr_by_cam[c] for c in cam_ids])

    # (c) loop closures + pose graph to correct odometry drift
    tracks_reindexed = {i: per_camera_tracks[c] for i, c in enumerate(cam_ids)}
    poses, n_loops, pg_ok = _stage_loop_closure(
        tracks_reindexed, rig, odo_poses, odometry, config)
    report.loop_edges = n_loops
    if not pg_ok:
        report.warnings.append("pose graph did not fully converge")

    # re-triangulate against the corrected poses
    for c in cam_ids:
        per_camera_landmarks[c] = _triangulate_tracks(
            c, intr_by_cam[c], camera_poses[c], per_camera_tracks[c],
            poses, config)

    # (d) inter-camera correspondences within the local frame history
    rng = np.random.default_rng(config.seed)
    merged = _stage_merge_inter_camera(
        per_camera_landmarks, per_camera_tracks, poses, config,
        rng, oracle_outlier_ratio)
    if not merged:
        report.warnings.append("no inter-camera correspondences found")

    # (e) joint optimization of Eq-style reprojection + odometry terms
    smap = _assemble_joint_map(rig, poses, per_camera_landmarks,
                               per_camera_tracks, merged)
    problem = CalibrationProblem(
        smap, odometry, pixel_sigma=config.pixel_sigma,
        odometry_information=config.odometry_information(),
        kernel=config.kernel, kernel_scale=config.kernel_scale)
    result = calibrate_joint(problem)
    report.stage_rms["joint_px"] = result.rms_reprojection_px
    report.stage_rms["joint_odometry"] = result.rms_odometry
    report.warnings.extend(result.warnings)
    final_map = SparseMap(
        rig=result.rig, poses=result.poses, landmarks=result.landmarks,
        obs_camera=smap.obs_camera, obs_frame=smap.obs_frame,
        obs_landmark=smap.obs_landmark, obs_uv=smap.obs_uv,
        landmark_ids=smap.landmark_ids)
    return result.rig, final_map, report


# ---------------------------------------------------------------------------
# structure-based calibration
# ---------------------------------------------------------------------------

def calibrate_from_structure(smap, per_camera_matches, odometry_poses,
                             intrinsics, min_frame_ratio=0.5,
                             ransac_config=None, max_iterations=60):
    """Recalibrate a rig against a trusted map via per-camera localization.

    per_camera_matches: dict camera_id -> dict frame_id -> list of
    ((u, v), landmark_index) 2D-3D matches. odometry_poses anchor the
    vehicle frame (drift is fine; they are refined). Landmarks are held
    fixed throughout. Returns (RigExtrinsics, poses, report dict).
    """
    cam_ids = sorted(per_camera_matches)
    if isinstance(intrinsics, (list, tuple)):
        intr_by_cam = {c: intrinsics[i] for i, c in enumerate(cam_ids)}
    else:
        intr_by_cam = {c: intrinsics for c in cam_ids}
    config = ransac_config or RansacConfig(
        sample_size=3, threshold=np.deg2rad(0.5), max_iterations=200)
    camera_poses_world = {}
    for c in cam_ids:
        frames = sorted(per_camera_matches[c])
        per_frame = {}
        for f in frames:
            matches = per_camera_matches[c][f]
            corrs = []
            for uv, lm_index in matches:
                try:
                    d = cam.unproject(intr_by_cam[c], uv)
                except Exception:
                    continue
                corrs.append(PointRayCorrespondence(
                    smap.landmarks[lm_index], PluckerRay(d, np.zeros(3))))
            if len(corrs) < 4:
                continue
            scorer = make_point_ray_scorer(corrs)
            try:
                res = run_ransac(solve_gp3p, corrs, config, scorer=scorer)
            except Exception:
                continue
            per_frame[f] = res.model
        ratio = len(per_frame) / max(1, len(frames))
        if ratio < min_frame_ratio:
            raise LocalizationFailed(
                f"camera {c}: localized {ratio:.0%} of frames",
                camera_id=c, frame_ratio=ratio)
        camera_poses_world[c] = per_frame

    # initial extrinsics: average of odometry-relative camera poses
    cameras = []
    for c in cam_ids:
        quats = []
        centers = []
        for f, (rot, t) in camera_poses_world[c].items():
            v = odometry_poses[f]
            rel_rot = v.rotation.T @ rot
            rel_t = v.rotation.T @ (t - v.translation)
            quats.append(Rotation.from_matrix(rel_rot).as_quat())
            centers.append(rel_t)
        quats = np.array(quats)
        ref = quats[0]
        quats[np.sum(quats * ref, axis=1) < 0] *= -1.0
        mean_rot = project_to_so3(
            Rotation.from_quat(np.mean(quats, axis=0)
                               / np.linalg.norm(np.mean(quats, axis=0)))
            .as_matrix())
        cameras.append(CameraPose(mean_rot, np.mean(centers, axis=0)))
    rig = RigExtrinsics(cameras, [intr_by_cam[c] for c in cam_ids])

    # refinement: extrinsics + vehicle poses free, landmarks fixed
    obs_cam, obs_frame, obs_lm, obs_uv = [], [], [], []
    for i, c in enumerate(cam_ids):
        for f, matches in per_camera_matches[c].items():
            for uv, lm_index in matches:
                obs_cam.append(i)
                obs_frame.append(f)
                obs_lm.append(lm_index)
                obs_uv.append(uv)
    joint = SparseMap(
        rig=rig, poses=list(odometry_poses), landmarks=smap.landmarks,
        obs_camera=np.array(obs_cam), obs_frame=np.array(obs_frame),
        obs_landmark=np.array(obs_lm), obs_uv=np.array(obs_uv))
    options = BundleOptions(
        free_poses=True, free_landmarks=False, free_extrinsics=True,
        fix_first_pose=False, pixel_sigma=1.0,
        kernel="cauchy", kernel_scale=1.0, max_iterations=max_iterations)
    result = bundle_adjust(joint, options)
    report = {"rms_px": result.rms_reprojection_px,
              "converged": result.converged}
    return result.map.rig, result.map.poses, report
