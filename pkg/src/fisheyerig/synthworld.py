"""Ground-truth synthetic world: rigs, trajectories, landmarks, renders.

Everything generated here is exactly consistent with the geometric
model before noise injection, so solver and pipeline tests can use the
generator outputs as oracle values. A fixed seed makes every artifact
bit-reproducible.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam
from .errors import ConfigInvalid
from .geometry import relative, rotz
from .rig import CameraPose, PluckerRay, RigExtrinsics, VehiclePose
from .solvers import (
    PointRayCorrespondence,
    RayCorrespondence,
    RelativeMotionHypothesis,
)


def stage_seed(seed, stage):
    """Derive a per-stage sub-seed by stable hashing of the stage name."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def default_intrinsics(width=640, height=400, xi=1.2, gamma=300.0,
                       k1=0.0, k2=0.0, p1=0.0, p2=0.0):
    return cam.CameraIntrinsics(
        xi=xi, gamma1=gamma, gamma2=gamma, u0=width / 2.0, v0=height / 2.0,
        k1=k1, k2=k2, p1=p1, p2=p2, width=width, height=height)


def camera_rotation(yaw, tilt_down=0.0):
    """Camera axes in the rig frame for a camera yawed from the forward
    direction and tilted down: optical axis z forward, x right, y down."""
    base = np.array([
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ])
    tilt = np.array([
        [np.cos(tilt_down), 0.0, np.sin(tilt_down)],
        [0.0, 1.0, 0.0],
        [-np.sin(tilt_down), 0.0, np.cos(tilt_down)],
    ])
    return rotz(yaw) @ base @ tilt


def surround_rig(intrinsics=None, radius=1.0, height=0.8, tilt_down=0.35):
    """Four-camera surround rig: front, left, back, right."""
    if intrinsics is None:
        intrinsics = default_intrinsics()
    cameras = []
    for yaw in (0.0, np.pi / 2, np.pi, -np.pi / 2):
        center = np.array([radius * np.cos(yaw), radius * np.sin(yaw), height])
        cameras.append(CameraPose(camera_rotation(yaw, tilt_down), center))
    return RigExtrinsics(cameras, [intrinsics] * 4)


def random_rig(rng, camera_count=4, radius=1.0, intrinsics=None):
    """Randomized non-central rig for solver stress tests."""
    cameras = []
    for _ in range(camera_count):
        yaw = rng.uniform(-np.pi, np.pi)
        tilt = rng.uniform(-0.4, 0.4)
        center = rng.uniform(-radius, radius, size=3) + np.array([0, 0, 1.0])
        cameras.append(CameraPose(camera_rotation(yaw, tilt), center))
    intr = [intrinsics or default_intrinsics()] * camera_count
    return RigExtrinsics(cameras, intr)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def poses_from_ackermann_steps(steps, start=None):
    """Chain (theta, rho) arc steps into absolute vehicle poses."""
    pose = start or VehiclePose.identity()
    poses = [pose]
    for theta, rho in steps:
        half = 0.5 * theta
        delta = VehiclePose(
            rotz(theta), rho * np.array([np.cos(half), np.sin(half), 0.0]))
        pose = pose.compose(delta)
        poses.append(pose)
    return poses


def figure_eight_steps(n_steps, yaw_rate=None, step_len=0.25):
    """Two opposite-curvature loops; closes both circles over n_steps."""
    if yaw_rate is None:
        yaw_rate = 4.0 * np.pi / n_steps
    half = n_steps // 2
    steps = [(yaw_rate, step_len)] * half
    steps += [(-yaw_rate, step_len)] * (n_steps - half)
    return steps


def square_loop_steps(side_steps, step_len=0.25):
    """Square loop driven as straight sides plus 90-degree corner arcs."""
    steps = []
    for _ in range(4):
        steps += [(0.0, step_len)] * side_steps
        steps += [(np.pi / 8, step_len)] * 4
    return steps


def true_relative_motion(pose_prev, pose_curr):
    """Pose of the current rig frame in the previous one."""
    rot, t = relative((pose_prev.rotation, pose_prev.translation),
                      (pose_curr.rotation, pose_curr.translation))
    return RelativeMotionHypothesis(rot, t, "general")


# ---------------------------------------------------------------------------
# correspondence generators
# ---------------------------------------------------------------------------

def _ray_through(center, point):
    d = point - center
    d = d / np.linalg.norm(d)
    return PluckerRay(d, np.cross(center, d))


def _sample_point_for_camera(rng, pose, depth_range=(4.0, 30.0), cone=0.9):
    """Point in front of a camera, in the frame the camera pose lives in."""
    d = rng.normal(size=3)
    d[2] = abs(d[2]) + cone  # bias toward the optical axis
    d /= np.linalg.norm(d)
    depth = rng.uniform(*depth_range)
    return pose.rotation @ (d * depth) + pose.center


def ray_correspondences(rng, extr, motion, count, pixel_sigma=0.0,
                        outlier_ratio=0.0, depth_range=(4.0, 30.0),
                        camera_indices=None):
    """Ray pairs consistent with a motion, one camera per correspondence.

    With pixel_sigma > 0 the rays are routed through the camera model
    (project + perturb + unproject); outliers replace the current-frame
    ray by one toward an unrelated point.
    """
    corrs = []
    truths = []
    n_cams = len(extr.cameras)
    for i in range(count):
        ci = (camera_indices[i % len(camera_indices)]
              if camera_indices is not None else i % n_cams)
        pose = extr.cameras[ci]
        x_prev = _sample_point_for_camera(rng, pose, depth_range)
        x_curr = motion.transform_prev_to_curr(x_prev)
        is_outlier = rng.uniform() < outlier_ratio
        if is_outlier:
            x_curr = _sample_point_for_camera(rng, pose, depth_range)
        ray_prev = _noisy_ray(rng, extr, ci, x_prev, pixel_sigma)
        ray_curr = _noisy_ray(rng, extr, ci, x_curr, pixel_sigma)
        if ray_prev is None or ray_curr is None:
            continue
        corrs.append(RayCorrespondence(ray_prev, ray_curr))
        truths.append(not is_outlier)
    return corrs, np.array(truths, dtype=bool)


def _noisy_ray(rng, extr, camera_index, point_rig, pixel_sigma):
    pose = extr.cameras[camera_index]
    if pixel_sigma <= 0.0 or not extr.intrinsics:
        return _ray_through(pose.center, point_rig)
    intr = extr.intrinsics[camera_index]
    x_cam = pose.rotation.T @ (point_rig - pose.center)
    try:
        px = cam.project(intr, x_cam)
    except Exception:
        return None
    u = px.u + rng.normal(0.0, pixel_sigma)
    v = px.v + rng.normal(0.0, pixel_sigma)
    try:
        d_cam = cam.unproject(intr, (u, v))
    except Exception:
        return None
    d_rig = pose.rotation @ d_cam
    return PluckerRay(d_rig, np.cross(pose.center, d_rig))


def point_ray_correspondences(rng, extr, vehicle_pose, count,
                              pixel_sigma=0.0, outlier_ratio=0.0,
                              depth_range=(4.0, 30.0)):
    """World points with their observed rays in the rig frame."""
    out = []
    truths = []
    n_cams = len(extr.cameras)
    for i in range(count):
        ci = i % n_cams
        pose = extr.cameras[ci]
        x_rig = _sample_point_for_camera(rng, pose, depth_range)
        x_world = vehicle_pose.transform(x_rig)
        target = x_rig
        is_outlier = rng.uniform() < outlier_ratio
        if is_outlier:
            target = _sample_point_for_camera(rng, pose, depth_range)
        ray = _noisy_ray(rng, extr, ci, target, pixel_sigma)
        if ray is None:
            continue
        out.append(PointRayCorrespondence(x_world, ray))
        truths.append(not is_outlier)
    return out, np.array(truths, dtype=bool)


# ---------------------------------------------------------------------------
# full scenarios: landmarks, tracks, odometry
# ---------------------------------------------------------------------------

@dataclass
class NoiseSpec:
    pixel_sigma: float = 0.0
    odometry_xy_sigma: float = 0.0  # meters, per step
    odometry_yaw_sigma: float = 0.0  # radians, per step
    outlier_ratio: float = 0.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    camera_count: int = 4
    image_width: int = 640
    image_height: int = 400
    xi: float = 1.2
    gamma: float = 300.0
    k1: float = 0.0
    k2: float = 0.0
    rig_radius: float = 1.0
    camera_height: float = 0.8
    camera_tilt_down: float = 0.35
    trajectory: str = "figure_eight"  # figure_eight | square_loop | arcs
    n_frames: int = 100
    step_length: float = 0.25
    landmark_count: int = 400
    landmark_radius: float = 18.0
    landmark_height_range: tuple = (0.0, 5.0)
    min_obs_depth: float = 1.0
    max_obs_depth: float = 40.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self):
        if self.camera_count < 1 or self.camera_count > 4:
            raise ConfigInvalid("camera_count must be in 1..4")
        if self.n_frames < 2:
            raise ConfigInvalid("n_frames must be >= 2")
        if self.landmark_count < 1:
            raise ConfigInvalid("landmark_count must be positive")
        if self.trajectory not in ("figure_eight", "square_loop", "arcs"):
            raise ConfigInvalid(f"unknown trajectory '{self.trajectory}'")
        if not 0.0 <= self.noise.outlier_ratio < 1.0:
            raise ConfigInvalid("outlier_ratio must be in [0, 1)")


@dataclass
class TrackObservation:
    camera_id: int
    frame_id: int
    feature_id: int
    u: float
    v: float
    is_outlier: bool = False


@dataclass
class Scenario:
    """Everything the generator knows, noise applied last."""

    config: ScenarioConfig
    rig: RigExtrinsics
    poses: list  # ground-truth VehiclePose per frame
    landmarks: np.ndarray  # (N, 3) world coordinates
    tracks: list  # list[TrackObservation]
    odometry: list  # noisy per-step (dx, dy, dyaw)
    odometry_truth: list  # noise-free per-step (dx, dy, dyaw)

    def odometry_poses(self):
        """Chain the noisy odometry into absolute planar poses."""
        pose = VehiclePose.identity()
        poses = [pose]
        for dx, dy, dyaw in self.odometry:
            pose = pose.compose(VehiclePose.from_planar(dx, dy, dyaw))
            poses.append(pose)
        return poses

    def tracks_by_camera(self):
        by_cam = {c: [] for c in range(len(self.rig.cameras))}
        for obs in self.tracks:
            by_cam[obs.camera_id].append(obs)
        return by_cam


def generate_scenario(config):
    config.validate()
    rng = np.random.default_rng(stage_seed(config.seed, "scenario"))
    intr = default_intrinsics(config.image_width, config.image_height,
                              config.xi, config.gamma, config.k1, config.k2)
    rig_full = surround_rig(intr, config.rig_radius, config.camera_height,
                            config.camera_tilt_down)
    cameras = rig_full.cameras[:config.camera_count]
    extr = RigExtrinsics(cameras, [intr] * len(cameras))

    n_steps = config.n_frames - 1
    if config.trajectory == "figure_eight":
        steps = figure_eight_steps(n_steps, step_len=config.step_length)
    elif config.trajectory == "square_loop":
        steps = square_loop_steps(max(1, (n_steps - 16) // 4),
                                  config.step_length)[:n_steps]
        steps += [(0.0, config.step_length)] * (n_steps - len(steps))
    else:
        arc_rng = np.random.default_rng(stage_seed(config.seed, "arcs"))
        steps = [(arc_rng.uniform(-0.15, 0.15),
                  config.step_length * arc_rng.uniform(0.6, 1.4))
                 for _ in range(n_steps)]
    poses = poses_from_ackermann_steps(steps)

    centers = np.array([p.translation for p in poses])
    mid = centers.mean(axis=0)
    angles = rng.uniform(0, 2 * np.pi, size=config.landmark_count)
    radii = config.landmark_radius * np.sqrt(rng.uniform(0.25, 1.0,
                                                         config.landmark_count))
    heights = rng.uniform(*config.landmark_height_range,
                          size=config.landmark_count)
    landmarks = np.stack([
        mid[0] + radii * np.cos(angles),
        mid[1] + radii * np.sin(angles),
        heights,
    ], axis=1)

    tracks = _observe_landmarks(config, extr, poses, landmarks)

    odo_truth = []
    odometry = []
    odo_rng = np.random.default_rng(stage_seed(config.seed, "odometry"))
    for prev, curr in zip(poses[:-1], poses[1:]):
        rel = true_relative_motion(prev, curr)
        dx, dy = rel.translation[0], rel.translation[1]
        dyaw = np.arctan2(rel.rotation[1, 0], rel.rotation[0, 0])
        odo_truth.append((dx, dy, dyaw))
        odometry.append((
            dx + odo_rng.normal(0.0, config.noise.odometry_xy_sigma),
            dy + odo_rng.normal(0.0, config.noise.odometry_xy_sigma),
            dyaw + odo_rng.normal(0.0, config.noise.odometry_yaw_sigma),
        ))
    return Scenario(config, extr, poses, landmarks, tracks,
                    odometry, odo_truth)


def _observe_landmarks(config, extr, poses, landmarks):
    tracks = []
    n_lm = len(landmarks)
    for frame_id, pose in enumerate(poses):
        frame_rng = np.random.default_rng(
            [stage_seed(config.seed, "obs"), frame_id])
        lm_rig = pose.inverse_transform(landmarks)
        for camera_id, cpose in enumerate(extr.cameras):
            intr = extr.intrinsics[camera_id]
            x_cam = (lm_rig - cpose.center) @ cpose.rotation
            depth = np.linalg.norm(x_cam, axis=1)
            px, valid = cam.project(intr, x_cam)
            noise = frame_rng.normal(0.0, config.noise.pixel_sigma,
                                     size=(n_lm, 2)) \
                if config.noise.pixel_sigma > 0 else np.zeros((n_lm, 2))
            uv = px + noise
            valid &= (depth >= config.min_obs_depth)
            valid &= (depth <= config.max_obs_depth)
            valid &= (uv[:, 0] >= 0) & (uv[:, 0] <= intr.width - 1)
            valid &= (uv[:, 1] >= 0) & (uv[:, 1] <= intr.height - 1)
            ids = np.nonzero(valid)[0]
            outlier_draw = frame_rng.uniform(size=len(ids))
            for j, lm_id in enumerate(ids):
                u, v = uv[lm_id]
                is_outlier = bool(outlier_draw[j] < config.noise.outlier_ratio)
                if is_outlier:
                    u = frame_rng.uniform(0, intr.width - 1)
                    v = frame_rng.uniform(0, intr.height - 1)
                tracks.append(TrackObservation(camera_id, frame_id,
                                               int(lm_id), float(u), float(v),
                                               is_outlier))
    return tracks


# ---------------------------------------------------------------------------
# analytic surfaces and textured rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneSurface:
    """Finite rectangle: anchor point, outward normal, in-plane axes."""

    point: np.ndarray
    normal: np.ndarray
    axis_u: np.ndarray
    extent_u: float
    extent_v: float

    @classmethod
    def make(cls, point, normal, axis_u, extent_u, extent_v):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        au = np.asarray(axis_u, dtype=float)
        au = au - (au @ n) * n
        au = au / np.linalg.norm(au)
        return cls(np.asarray(point, dtype=float), n, au,
                   float(extent_u), float(extent_v))

    def intersect(self, origins, dirs):
        n = self.normal
        denom = dirs @ n
        num = (self.point - origins) @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
        hit = origins + t[..., None] * dirs
        rel = hit - self.point
        av = np.cross(n, self.axis_u)
        u = rel @ self.axis_u
        v = rel @ av
        ok = (t > 1e-6) & (np.abs(u) <= self.extent_u) \
            & (np.abs(v) <= self.extent_v)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class BoxSurface:
    """Axis-aligned box in world coordinates."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def make(cls, center, size):
        c = np.asarray(center, dtype=float)
        s = 0.5 * np.asarray(size, dtype=float)
        return cls(c - s, c + s)

    def intersect(self, origins, dirs):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(np.abs(dirs) > 1e-12, 1.0 / dirs, np.inf)
        t1 = (self.lo - origins) * inv
        t2 = (self.hi - origins) * inv
        tmin = np.max(np.minimum(t1, t2), axis=-1)
        tmax = np.min(np.maximum(t1, t2), axis=-1)
        ok = (tmax >= tmin) & (tmax > 1e-6)
        t = np.where(tmin > 1e-6, tmin, tmax)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class CylinderSurface:
    """Vertical cylinder (a pillar) with finite height."""

    center_xy: np.ndarray
    radius: float
    z_range: tuple

    def intersect(self, origins, dirs):
        ox = origins[..., 0] - self.center_xy[0]
        oy = origins[..., 1] - self.center_xy[1]
        dx, dy = dirs[..., 0], dirs[..., 1]
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = ox * ox + oy * oy - self.radius ** 2
        disc = b * b - 4 * a * c
        ok = (disc >= 0) & (a > 1e-12)
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_near = np.where(ok, (-b - sq) / (2 * a), np.inf)
            t_far = np.where(ok, (-b + sq) / (2 * a), np.inf)
        t = np.where(t_near > 1e-6, t_near, t_far)
        z = origins[..., 2] + t * dirs[..., 2]
        ok &= (t > 1e-6) & (z >= self.z_range[0]) & (z <= self.z_range[1])
        return np.where(ok, t, np.inf)


def _hash_noise(p, seed):
    """Deterministic pseudo-random value in [0, 1) per 3D lattice point."""
    s = p[..., 0] * 127.1 + p[..., 1] * 311.7 + p[..., 2] * 74.7 + seed * 0.137
    return np.modf(np.sin(s) * 43758.5453123)[0] % 1.0


def value_noise(points, scale=1.0, octaves=3, seed=0):
    """Smoothed 3D value noise in [0, 1], vectorized over points."""
    pts = np.asarray(points, dtype=float) / scale
    out = np.zeros(pts.shape[:-1])
    amp_total = 0.0
    amp = 1.0
    for octave in range(octaves):
        p = pts * (2.0 ** octave)
        p0 = np.floor(p)
        f = p - p0
        f = f * f * (3.0 - 2.0 * f)  # smoothstep
        acc = np.zeros(p.shape[:-1])
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    corner = p0 + np.array([dx, dy, dz], dtype=float)
                    w = (np.where(dx, f[..., 0], 1 - f[..., 0])
                         * np.where(dy, f[..., 1], 1 - f[..., 1])
                         * np.where(dz, f[..., 2], 1 - f[..., 2]))
                    acc += w * _hash_noise(corner, seed + octave * 101)
        out += amp * acc
        amp_total += amp
        amp *= 0.5
    return out / amp_total


def render_textured_depth(surfaces, cam_rotation_world, cam_center_world,
                          intr, texture_scale=0.35, contrast=1.0,
                          octaves=3, seed=0, row_chunk=64):
    """Ray-cast intensity + ground-truth range image for a fisheye view.

    Returns (intensity, depth) with depth the Euclidean distance from
    the camera center along each pixel's ray; inf where nothing is hit.
    """
    h, w = intr.height, intr.width
    intensity = np.full((h, w), 0.5, dtype=np.float64)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    rot = np.asarray(cam_rotation_world, dtype=float)
    center = np.asarray(cam_center_world, dtype=float)
    for r0 in range(0, h, row_chunk):
        r1 = min(h, r0 + row_chunk)
        us, vs = np.meshgrid(np.arange(w), np.arange(r0, r1))
        pix = np.stack([us.ravel(), vs.ravel()], axis=-1).astype(float)
        rays, ok = cam.unproject(intr, pix)
        dirs = rays @ rot.T
        origins = np.broadcast_to(center, dirs.shape)
        t_best = np.full(dirs.shape[0], np.inf)
        for surf in surfaces:
            t = surf.intersect(origins, dirs)
            t_best = np.minimum(t_best, np.where(ok, t, np.inf))
        hit = np.isfinite(t_best)
        pts = origins[hit] + t_best[hit, None] * dirs[hit]
        tex = np.full(dirs.shape[0], 0.5)
        if contrast > 0 and np.any(hit):
            tex[hit] = 0.5 + contrast * (
                value_noise(pts, texture_scale, octaves, seed) - 0.5)
        block = slice(r0, r1)
        intensity[block] = np.clip(tex, 0.0, 1.0).reshape(r1 - r0, w)
        d = np.full(dirs.shape[0], np.inf)
        d[hit] = t_best[hit]
        depth[block] = d.reshape(r1 - r0, w)
    return intensity, depth
