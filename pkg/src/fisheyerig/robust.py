"""Sample consensus around any minimal solver.

Scoring uses an angular residual: each correspondence is triangulated
under the hypothesis and scored by the angle its gap subtends at the
observation distance. Correspondences whose triangulation lands closer
to the rig than min_triangulation_depth are never counted as inliers;
this rejects the parasitic identity motion that intra-camera ray pairs
always satisfy algebraically (any two rays through one camera center
intersect there).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoModelFound, ParallelRays
from .rig import VehiclePose
from .solvers import _triangulate_params, transform_ray_to_prev


@dataclass
class RansacConfig:
    confidence: float = 0.99
    inlier_ratio: float = 0.5  # assumed a priori; adapted while running
    sample_size: int = 2
    threshold: float = np.deg2rad(0.5)  # angular residual, radians
    max_iterations: int = 10000
    seed: int = 0
    min_triangulation_depth: float = 1.5  # meters from the rig origin

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if not 0.0 < self.inlier_ratio <= 1.0:
            raise ValueError("inlier ratio must be in (0, 1]")
        if self.sample_size < 1:
            raise ValueError("sample size must be >= 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def ransac_iterations(confidence, inlier_ratio, sample_size):
    """Number of hypotheses needed to hit an all-inlier sample.

    m = ln(1 - confidence) / ln(1 - inlier_ratio**sample_size), floored
    to an integer with a minimum of one iteration.
    """
    if inlier_ratio >= 1.0:
        return 1
    good = inlier_ratio ** sample_size
    if good <= 0.0:
        return np.iinfo(np.int64).max
    m = math.log(1.0 - confidence) / math.log(1.0 - good)
    return max(1, int(m))


def ray_pair_residual(corr, motion, min_depth=0.0):
    """Angle subtended by the triangulation gap of a ray pair.

    Returns pi/2 for parallel rays and for triangulations closer to the
    rig origin than min_depth (no scoreable parallax).
    """
    try:
        curr_in_prev = transform_ray_to_prev(corr.ray_curr, motion)
        pa, pb, la, lb = _triangulate_params(corr.ray_prev, curr_in_prev)
    except ParallelRays:
        return np.pi / 2
    if la < min_depth or lb < min_depth:
        return np.pi / 2
    gap = np.linalg.norm(pa - pb)
    dist = max(np.linalg.norm(0.5 * (pa + pb)), gap, 1e-12)
    return float(np.arctan2(gap, dist))


def make_ray_pair_scorer(corrs, min_depth=1.5, parallel_tol=1e-9):
    """Vectorized ray_pair_residual over a fixed correspondence list."""
    qp = np.array([c.ray_prev.q for c in corrs])
    mp = np.array([c.ray_prev.moment for c in corrs])
    qc = np.array([c.ray_curr.q for c in corrs])
    mc = np.array([c.ray_curr.moment for c in corrs])
    oa = np.cross(qp, mp)

    def scorer(motion):
        rot, t = motion.rotation, motion.translation
        qb = qc @ rot.T
        mb = mc @ rot.T + np.cross(t, qb)
        ob = np.cross(qb, mb)
        c = np.sum(qp * qb, axis=1)
        det = c * c - 1.0
        parallel = np.abs(det) < parallel_tol * parallel_tol
        det = np.where(parallel, -1.0, det)
        rhs = ob - oa
        ra = np.sum(rhs * qp, axis=1)
        rb = np.sum(rhs * qb, axis=1)
        la = (-ra + c * rb) / det
        lb = (-c * ra + rb) / det
        pa = oa + la[:, None] * qp
        pb = ob + lb[:, None] * qb
        gap = np.linalg.norm(pa - pb, axis=1)
        dist = np.maximum(np.linalg.norm(0.5 * (pa + pb), axis=1),
                          np.maximum(gap, 1e-12))
        ang = np.arctan2(gap, dist)
        bad = parallel | (la < min_depth) | (lb < min_depth)
        return np.where(bad, np.pi / 2, ang)

    return scorer


def make_point_ray_scorer(corrs):
    """Vectorized point-ray angular residual for absolute pose models."""
    pts = np.array([c.world_point for c in corrs])
    q = np.array([c.ray.q for c in corrs])
    o = np.array([c.ray.closest_point_to_origin() for c in corrs])

    def scorer(pose):
        if isinstance(pose, VehiclePose):
            rot, t = pose.rotation, pose.translation
        else:
            rot, t = pose
        x_rig = (pts - t) @ rot
        d = x_rig - o
        cross = np.linalg.norm(np.cross(q, d), axis=1)
        dot = np.sum(q * d, axis=1)
        return np.arctan2(cross, dot)

    return scorer


@dataclass
class RansacResult:
    model: object
    inlier_mask: np.ndarray
    iterations: int
    score: int


def run_ransac(solver, correspondences, config, scorer=None):
    """Generic sample consensus; deterministic given the config seed.

    solver maps a sample (list of correspondences) to an iterable of
    hypotheses. scorer(hypothesis) returns the residual array over all
    correspondences; the default is the angular ray-pair residual.
    Iteration count adapts to the best inlier ratio found so far.
    """
    corrs = list(correspondences)
    n = config.sample_size
    if len(corrs) < n:
        raise NoModelFound(
            f"need at least {n} correspondences, got {len(corrs)}")
    if scorer is None:
        scorer = make_ray_pair_scorer(corrs, config.min_triangulation_depth)
    rng = np.random.default_rng(config.seed)
    needed = min(config.max_iterations,
                 ransac_iterations(config.confidence, config.inlier_ratio, n))
    best = None
    best_score = -1
    best_mask = None
    iteration = 0
    while iteration < needed:
        iteration += 1
        sample_idx = rng.choice(len(corrs), size=n, replace=False)
        sample = [corrs[i] for i in sample_idx]
        try:
            hypotheses = solver(sample)
        except Exception:
            continue
        for hyp in hypotheses:
            mask = scorer(hyp) < config.threshold
            score = int(np.count_nonzero(mask))
            if score > best_score:
                best_score = score
                best = hyp
                best_mask = mask
                ratio = score / len(corrs)
                needed = min(
                    config.max_iterations,
                    max(iteration,
                        ransac_iterations(config.confidence,
                                          max(ratio, 1e-6), n)))
    if best is None or best_score < n:
        raise NoModelFound(
            f"no hypothesis reached {n} inliers over {iteration} iterations")
    return RansacResult(best, best_mask, iteration, best_score)
