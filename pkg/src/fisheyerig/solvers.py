"""Minimal and linear solvers for generalized-camera geometry.

Relative motions follow one convention throughout: a hypothesis (R, t)
is the pose of the current rig frame expressed in the previous rig
frame, X_prev = R @ X_curr + t. Under this convention a forward-left
arc has positive yaw theta and positive scale rho, and the translation
heading is theta / 2.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve2d

from .errors import (
    CollinearPoints,
    DegenerateConfiguration,
    InsufficientMotion,
    NoPositiveDepth,
    NoRealRoot,
    ParallelRays,
    SolverFailure,
)
from .geometry import project_to_so3, rotation_angle, rotz, skew, unskew
from .rig import PluckerRay


@dataclass(frozen=True)
class RayCorrespondence:
    """A ray pair: previous frame on the left, current frame on the right."""

    ray_prev: PluckerRay
    ray_curr: PluckerRay


@dataclass(frozen=True)
class PointRayCorrespondence:
    """World point matched to a viewing ray in the rig frame."""

    world_point: np.ndarray
    ray: PluckerRay

    def __post_init__(self):
        object.__setattr__(
            self, "world_point", np.asarray(self.world_point, dtype=float))


@dataclass(frozen=True)
class RelativeMotionHypothesis:
    """Relative rig motion, optionally tagged with its generating model."""

    rotation: np.ndarray
    translation: np.ndarray
    model: str = "general"  # general | ackermann | planar
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float))

    def transform_curr_to_prev(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def transform_prev_to_curr(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation


def motion_from_ackermann(theta, rho):
    """Circular planar motion: yaw theta, translation heading theta/2."""
    half = 0.5 * theta
    t = rho * np.array([np.cos(half), np.sin(half), 0.0])
    return RelativeMotionHypothesis(rotz(theta), t, "ackermann", (theta, rho))


def motion_from_planar(x, y, q):
    """Planar motion with Cayley yaw q = tan(theta/2), translation (x, y, 0)."""
    denom = 1.0 + q * q
    rot = np.array([
        [1.0 - q * q, -2.0 * q, 0.0],
        [2.0 * q, 1.0 - q * q, 0.0],
        [0.0, 0.0, denom],
    ]) / denom
    return RelativeMotionHypothesis(rot, np.array([x, y, 0.0]), "planar", (x, y, q))


def gec_residual(corr, motion):
    """Generalized epipolar residual l'^T [[E, R], [R, 0]] l with E = [t]x R."""
    qp, mp = corr.ray_prev.q, corr.ray_prev.moment
    qc, mc = corr.ray_curr.q, corr.ray_curr.moment
    rot, t = motion.rotation, motion.translation
    rqc = rot @ qc
    return float(qp @ np.cross(t, rqc) + qp @ (rot @ mc) + mp @ rqc)


def transform_ray_to_prev(ray, motion):
    """Express a current-frame Pluecker line in the previous frame."""
    q = motion.rotation @ ray.q
    m = motion.rotation @ ray.moment + np.cross(motion.translation, q)
    return PluckerRay(q, m)


# ---------------------------------------------------------------------------
# triangulation & absolute orientation
# ---------------------------------------------------------------------------

def _triangulate_params(ray_a, ray_b, parallel_tol=1e-9):
    qa, qb = ray_a.q, ray_b.q
    if np.linalg.norm(np.cross(qa, qb)) < parallel_tol:
        raise ParallelRays("ray directions are parallel beyond tolerance")
    oa = ray_a.closest_point_to_origin()
    ob = ray_b.closest_point_to_origin()
    c = float(qa @ qb)
    rhs = ob - oa
    # closest-approach parameters of the two lines
    det = c * c - 1.0
    la = (-(rhs @ qa) + c * (rhs @ qb)) / det
    lb = (-c * (rhs @ qa) + (rhs @ qb)) / det
    return oa + la * qa, ob + lb * qb, la, lb


def triangulate(ray_a, ray_b, parallel_tol=1e-9):
    """Midpoint of the shortest segment between two rays + its length."""
    pa, pb, _, _ = _triangulate_params(ray_a, ray_b, parallel_tol)
    return 0.5 * (pa + pb), float(np.linalg.norm(pa - pb))


def absolute_orientation(source_points, target_points):
    """Least-squares rigid transform with target ~ R @ source + t.

    Returns (R, t, rms). No scale. Raises CollinearPoints when the
    point sets do not pin down the rotation.
    """
    src = np.asarray(source_points, dtype=float)
    dst = np.asarray(target_points, dtype=float)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ValueError("need >= 3 matched points of identical shape")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, s, vt = np.linalg.svd(h)
    scale = max(s[0], 1e-300)
    if s[1] / scale < 1e-9:
        raise CollinearPoints("points are collinear; rotation underdetermined")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cd - rot @ cs
    res = dst - (src @ rot.T + t)
    rms = float(np.sqrt(np.mean(np.sum(res * res, axis=1))))
    return rot, t, rms


def _cheirality_ok(corrs, motion, min_param=0.0):
    """False only if every correspondence triangulates behind both rays."""
    any_in_front = False
    for corr in corrs:
        try:
            curr_in_prev = transform_ray_to_prev(corr.ray_curr, motion)
            point, _, la, lb = None, None, None, None
            pa, pb, la, lb = _triangulate_params(corr.ray_prev, curr_in_prev)
            point = 0.5 * (pa + pb)
        except ParallelRays:
            any_in_front = True
            continue
        if la > min_param or lb > min_param:
            any_in_front = True
    return any_in_front


# ---------------------------------------------------------------------------
# 17-point linear solver
# ---------------------------------------------------------------------------

def solve_17pt(corrs, degeneracy_ratio=1e-8):
    """Least-squares generalized essential matrix from >= 17 ray pairs.

    Solves the homogeneous system in the 18 entries of (E, R). For
    correspondences whose two rays pass through the same camera center
    (the usual intra-camera tracks) the system carries the parasitic
    exact solution (E, R) = (0, I); in that case the estimate is taken
    from the two-dimensional trailing subspace as the combination whose
    rotation block is a scaled rotation. Metric scale of t is preserved
    for non-central input.
    """
    if len(corrs) < 17:
        raise ValueError("need at least 17 correspondences")
    rows = np.empty((len(corrs), 18))
    for i, corr in enumerate(corrs):
        qp, mp = corr.ray_prev.q, corr.ray_prev.moment
        qc, mc = corr.ray_curr.q, corr.ray_curr.moment
        rows[i, :9] = np.outer(qp, qc).ravel()
        rows[i, 9:] = (np.outer(qp, mc) + np.outer(mp, qc)).ravel()
    _, svals, vt = np.linalg.svd(rows, full_matrices=True)
    svals = np.concatenate([svals, np.zeros(18 - len(svals))])
    tiny = int(np.count_nonzero(svals < degeneracy_ratio * svals[0]))
    if tiny > 2:
        raise DegenerateConfiguration(
            "nullspace dimension exceeds 2; relative pose not unique "
            "(central-only or otherwise degenerate input)")
    ident = np.zeros(18)
    ident[9:] = np.eye(3).ravel() / np.sqrt(3.0)
    v1, v2 = vt[-1], vt[-2]
    a1, a2 = float(ident @ v1), float(ident @ v2)
    if np.hypot(a1, a2) > 0.9:
        # intra-camera input: remove the identity direction from the
        # trailing subspace, then solve R_block + mu*I = scaled rotation
        v = a2 * v1 - a1 * v2
        v /= np.linalg.norm(v)
        e_block = v[:9].reshape(3, 3)
        r_dev = v[9:].reshape(3, 3)
        b = r_dev + r_dev.T
        b_dev = b - np.trace(b) / 3.0 * np.eye(3)
        bnorm = np.linalg.norm(b_dev)
        if bnorm < 1e-6 * max(np.linalg.norm(b), 1e-12):
            raise DegenerateConfiguration(
                "pure translation: rotation/scale not recoverable from GEC")
        a = r_dev @ r_dev.T
        a_dev = a - np.trace(a) / 3.0 * np.eye(3)
        mu = -float(np.sum(a_dev * b_dev)) / float(np.sum(b_dev * b_dev))
        r_block = r_dev + mu * np.eye(3)
        if np.linalg.det(r_block) < 0:
            e_block, r_block = -e_block, -r_block
    else:
        if tiny > 1:
            raise DegenerateConfiguration(
                "two-dimensional nullspace without intra-camera structure")
        v = v1
        e_block = v[:9].reshape(3, 3)
        r_block = v[9:].reshape(3, 3)
        if np.linalg.det(r_block) < 0:
            e_block, r_block = -e_block, -r_block
    det = np.linalg.det(r_block)
    if det <= 0:
        raise DegenerateConfiguration("rotation block is not orientable")
    alpha = det ** (1.0 / 3.0)
    rot = project_to_so3(r_block / alpha)
    t = unskew((e_block / alpha) @ rot.T)
    return RelativeMotionHypothesis(rot, t, "general")


# ---------------------------------------------------------------------------
# 2-point Ackermann solver
# ---------------------------------------------------------------------------

def _gec_trig_coeffs(corr):
    """Per-correspondence coefficients of the planar-motion GEC expansion.

    With (c, s) = (cos(theta/2), sin(theta/2)) the residual under
    circular motion reads rho*(P s + Q c) + U cos(theta) + V sin(theta) + W.
    """
    a, am = corr.ray_prev.q, corr.ray_prev.moment
    b, bm = corr.ray_curr.q, corr.ray_curr.moment
    p = a[0] * b[2] + a[2] * b[0]
    q = a[2] * b[1] - a[1] * b[2]
    u = a[0] * bm[0] + a[1] * bm[1] + am[0] * b[0] + am[1] * b[1]
    v = a[1] * bm[0] - a[0] * bm[1] + am[1] * b[0] - am[0] * b[1]
    w = a[2] * bm[2] + am[2] * b[2]
    return p, q, u, v, w


def _real_roots(coeffs_desc, imag_tol=1e-8):
    """Real roots of a polynomial given descending coefficients."""
    c = np.asarray(coeffs_desc, dtype=float)
    scale = np.max(np.abs(c))
    if scale == 0:
        return np.array([])
    c = c / scale
    nz = np.nonzero(np.abs(c) > 1e-14)[0]
    if len(nz) == 0:
        return np.array([])
    c = c[nz[0]:]
    if len(c) <= 1:
        return np.array([])
    roots = np.roots(c)
    keep = np.abs(roots.imag) <= imag_tol * (1.0 + np.abs(roots.real))
    return np.unique(roots[keep].real)


def solve_2pt_ackermann(corrs, polish_steps=2):
    """Circular-motion hypotheses (theta, rho) from exactly two ray pairs.

    Substituting the circular parameterization into the generalized
    epipolar constraint and eliminating rho yields a univariate cubic
    in tan(theta/2); every real root is returned as a hypothesis.
    """
    if len(corrs) != 2:
        raise ValueError("exactly 2 correspondences required")
    co = [_gec_trig_coeffs(c) for c in corrs]
    (p1, q1, u1, v1, w1), (p2, q2, u2, v2, w2) = co
    # G(c, s) = L1*M2 - L2*M1, homogeneous cubic in (c, s); x = s/c
    g0 = q1 * (u2 + w2) - q2 * (u1 + w1)
    g1 = p1 * (u2 + w2) + 2 * q1 * v2 - p2 * (u1 + w1) - 2 * q2 * v1
    g2 = 2 * p1 * v2 + q1 * (w2 - u2) - 2 * p2 * v1 - q2 * (w1 - u1)
    g3 = p1 * (w2 - u2) - p2 * (w1 - u1)
    poly = [g3, g2, g1, g0]
    roots = _real_roots(poly)
    if roots.size == 0:
        raise NoRealRoot("elimination cubic has no admissible real root")
    dpoly = np.polyder(np.poly1d(poly))
    hypotheses = []
    for x in roots:
        pl = np.poly1d(poly)
        for _ in range(polish_steps):
            d = dpoly(x)
            if abs(d) > 1e-14:
                x -= pl(x) / d
        half = np.arctan(x)
        theta = 2.0 * half
        c, s = np.cos(half), np.sin(half)
        ll = np.array([p1 * s + q1 * c, p2 * s + q2 * c])
        mm = np.array([
            u1 * np.cos(theta) + v1 * np.sin(theta) + w1,
            u2 * np.cos(theta) + v2 * np.sin(theta) + w2,
        ])
        denom = float(ll @ ll)
        rho = 0.0 if denom < 1e-300 else float(-(ll @ mm) / denom)
        hyp = motion_from_ackermann(theta, rho)
        if _cheirality_ok(corrs, hyp):
            hypotheses.append(hyp)
    if not hypotheses:
        raise NoRealRoot("all real roots rejected by cheirality")
    return _dedup_motions(hypotheses)


# ---------------------------------------------------------------------------
# 3-point planar solver
# ---------------------------------------------------------------------------

def _planar_fgc(corr):
    """Quadratic-in-q coefficient rows (ascending) of x*F + y*G + C = 0."""
    a, am = corr.ray_prev.q, corr.ray_prev.moment
    b, bm = corr.ray_curr.q, corr.ray_curr.moment
    f = np.array([
        -a[1] * b[2] + a[2] * b[1],
        2.0 * a[2] * b[0],
        -a[1] * b[2] - a[2] * b[1],
    ])
    g = np.array([
        a[0] * b[2] - a[2] * b[0],
        2.0 * a[2] * b[1],
        a[0] * b[2] + a[2] * b[0],
    ])
    u = a[0] * bm[0] + a[1] * bm[1] + am[0] * b[0] + am[1] * b[1]
    v = a[1] * bm[0] - a[0] * bm[1] + am[1] * b[0] - am[0] * b[1]
    w = a[2] * bm[2] + am[2] * b[2]
    c = np.array([u + w, 2.0 * v, w - u])
    return f, g, c


def solve_3pt_planar(corrs, residual_tol=1e-6, polish_steps=2):
    """Planar-motion hypotheses (x, y, q) from exactly three ray pairs.

    Each correspondence is linear in (x, y) with coefficients quadratic
    in the Cayley yaw q; vanishing of the 3x3 coefficient determinant
    gives a degree-6 polynomial in q (up to six real solutions).
    """
    if len(corrs) != 3:
        raise ValueError("exactly 3 correspondences required")
    rows = [_planar_fgc(c) for c in corrs]

    def det3(i, j, k):
        # polynomial determinant of columns (F, G, C) for row order i,j,k
        f_i, g_j, c_k = rows[i][0], rows[j][1], rows[k][2]
        return npoly.polymul(npoly.polymul(f_i, g_j), c_k)

    det = np.zeros(7)
    for (i, j, k, sign) in (
        (0, 1, 2, 1), (1, 2, 0, 1), (2, 0, 1, 1),
        (2, 1, 0, -1), (0, 2, 1, -1), (1, 0, 2, -1),
    ):
        term = det3(i, j, k)
        det[:len(term)] += sign * term
    scale = np.max(np.abs(det))
    if scale < 1e-300:
        raise SolverFailure("elimination determinant vanishes identically")
    roots = _real_roots(det[::-1])
    hypotheses = []
    for q in roots:
        fg = np.array([[npoly.polyval(q, r[0]), npoly.polyval(q, r[1])]
                       for r in rows])
        cc = np.array([npoly.polyval(q, r[2]) for r in rows])
        sol, _, rank, _ = np.linalg.lstsq(fg, -cc, rcond=None)
        if rank < 2:
            continue
        x, y = sol
        x, y, q = _polish_planar(rows, x, y, q, polish_steps)
        res = fg @ np.array([x, y]) + cc
        if np.max(np.abs(res)) / (1.0 + abs(x) + abs(y)) > residual_tol:
            continue
        hyp = motion_from_planar(x, y, q)
        if _cheirality_ok(corrs, hyp):
            hypotheses.append(hyp)
    if not hypotheses:
        raise SolverFailure("no admissible real solution for planar motion")
    return _dedup_motions(hypotheses)


def _polish_planar(rows, x, y, q, steps):
    for _ in range(steps):
        r = np.empty(3)
        jac = np.empty((3, 3))
        for k, (f, g, c) in enumerate(rows):
            fv, gv, cv = (npoly.polyval(q, p) for p in (f, g, c))
            fd, gd, cd = (npoly.polyval(q, npoly.polyder(p)) for p in (f, g, c))
            r[k] = x * fv + y * gv + cv
            jac[k] = (fv, gv, x * fd + y * gd + cd)
        try:
            delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        x, y, q = x + delta[0], y + delta[1], q + delta[2]
    return x, y, q


def _dedup_motions(hyps, rot_tol=1e-7, trans_tol=1e-7):
    kept = []
    for h in hyps:
        dup = False
        for k in kept:
            if (rotation_angle(h.rotation @ k.rotation.T) < rot_tol
                    and np.linalg.norm(h.translation - k.translation) < trans_tol):
                dup = True
                break
        if not dup:
            kept.append(h)
    return kept


# ---------------------------------------------------------------------------
# generalized P3P
# ---------------------------------------------------------------------------

def _pair_equation(o_i, q_i, o_j, q_j, d_ij):
    """Coefficients of |Y_i - Y_j|^2 - d_ij^2 = 0 with Y = o + lambda q.

    Returns (c, ei, ej, k): lam_i^2 + lam_j^2 - 2 c lam_i lam_j
    + 2 ei lam_i - 2 ej lam_j + k = 0.
    """
    u = o_i - o_j
    return (float(q_i @ q_j), float(u @ q_i), float(u @ q_j),
            float(u @ u - d_ij * d_ij))


def _bimul(a, b):
    return convolve2d(np.atleast_2d(a), np.atleast_2d(b))


def _biadd(a, b):
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])))
    out[:a.shape[0], :a.shape[1]] += a
    out[:b.shape[0], :b.shape[1]] += b
    return out


def solve_gp3p(corrs, collinear_tol=1e-6, max_solutions=8):
    """Absolute rig poses from three 2D-3D correspondences.

    Enforces pairwise-distance consistency between the world points and
    points at unknown depths along the rig rays, eliminates two depths
    by iterated resultants to a univariate polynomial in the first
    depth, then recovers each pose by absolute orientation. The pose
    maps rig coordinates into the world frame.
    """
    if len(corrs) != 3:
        raise ValueError("exactly 3 correspondences required")
    xw = np.array([c.world_point for c in corrs])
    d12 = np.linalg.norm(xw[0] - xw[1])
    d13 = np.linalg.norm(xw[0] - xw[2])
    d23 = np.linalg.norm(xw[1] - xw[2])
    span = max(d12, d13, d23)
    if span <= 0:
        raise CollinearPoints("world points coincide")
    area2 = np.linalg.norm(np.cross(xw[1] - xw[0], xw[2] - xw[0]))
    if area2 < collinear_tol * span * span:
        raise CollinearPoints("world points are collinear")

    qs = [c.ray.q for c in corrs]
    os_ = [c.ray.closest_point_to_origin() / span for c in corrs]
    dd = (d12 / span, d13 / span, d23 / span)

    c12, e12i, e12j, k12 = _pair_equation(os_[0], qs[0], os_[1], qs[1], dd[0])
    c13, e13i, e13j, k13 = _pair_equation(os_[0], qs[0], os_[2], qs[2], dd[1])
    c23, e23i, e23j, k23 = _pair_equation(os_[1], qs[1], os_[2], qs[2], dd[2])

    # A(l2; l1) = l2^2 + a1(l1) l2 + a0(l1), monic in l2
    a1 = np.array([-2.0 * e12j, -2.0 * c12])           # ascending in l1
    a0 = np.array([k12, 2.0 * e12i, 1.0])
    # B(l3; l1) = l3^2 + b1(l1) l3 + b0(l1)
    b1 = np.array([-2.0 * e13j, -2.0 * c13])
    b0 = np.array([k13, 2.0 * e13i, 1.0])
    # C(l3; l2) = l3^2 + e(l2) l3 + f(l2)
    ce = np.array([-2.0 * e23j, -2.0 * c23])           # ascending in l2
    cf = np.array([k23, 2.0 * e23i, 1.0])

    # D(l1, l2) = Res_l3(B, C) = (f - b0)^2 - (e - b1)(b1 f - b0 e)
    # bivariate arrays with axis 0 = l1 power, axis 1 = l2 power
    b1_2d = b1.reshape(-1, 1)
    b0_2d = b0.reshape(-1, 1)
    ce_2d = ce.reshape(1, -1)
    cf_2d = cf.reshape(1, -1)
    term1 = _biadd(cf_2d, -b0_2d)
    term2 = _biadd(ce_2d, -b1_2d)
    term3 = _biadd(_bimul(b1_2d, cf_2d), -_bimul(b0_2d, ce_2d))
    dpoly = _biadd(_bimul(term1, term1), -_bimul(term2, term3))

    # reduce D modulo the monic quadratic A: l2^2 = -(a1 l2 + a0), giving
    # D = p(l1) l2 + q(l1); then Res_l2(A, D) = a0 p^2 - a1 p q + q^2
    a1sq = npoly.polymul(a1, a1)
    a1cu = npoly.polymul(a1sq, a1)
    a1a0 = npoly.polymul(a1, a0)
    red = {
        2: (npoly.polymul([-1.0], a1), npoly.polymul([-1.0], a0)),
        3: (npoly.polyadd(a1sq, npoly.polymul([-1.0], a0)), a1a0),
        4: (npoly.polyadd(npoly.polymul([-1.0], a1cu),
                          npoly.polymul([2.0], a1a0)),
            npoly.polyadd(npoly.polymul(a0, a0),
                          npoly.polymul([-1.0], npoly.polymul(a1sq, a0)))),
    }
    p_lin = np.zeros(1)
    q_con = np.zeros(1)
    for j in range(dpoly.shape[1]):
        dj = np.trim_zeros(dpoly[:, j], "b")
        if dj.size == 0:
            continue
        if j == 0:
            q_con = npoly.polyadd(q_con, dj)
        elif j == 1:
            p_lin = npoly.polyadd(p_lin, dj)
        else:
            rl, rc = red[j]
            p_lin = npoly.polyadd(p_lin, npoly.polymul(dj, rl))
            q_con = npoly.polyadd(q_con, npoly.polymul(dj, rc))
    elim = npoly.polyadd(
        npoly.polyadd(npoly.polymul(a0, npoly.polymul(p_lin, p_lin)),
                      npoly.polymul([-1.0], npoly.polymul(
                          a1, npoly.polymul(p_lin, q_con)))),
        npoly.polymul(q_con, q_con))

    lam1_roots = _real_roots(elim[::-1], imag_tol=1e-6)
    eqs = ((c12, e12i, e12j, k12), (c13, e13i, e13j, k13),
           (c23, e23i, e23j, k23))
    solutions = []
    for l1 in lam1_roots:
        for l2 in _quad_roots(1.0, npoly.polyval(l1, a1), npoly.polyval(l1, a0)):
            for l3 in _quad_roots(1.0, npoly.polyval(l1, b1),
                                  npoly.polyval(l1, b0)):
                lam = _polish_depths(np.array([l1, l2, l3]), eqs)
                if lam is None or np.any(lam <= 0):
                    continue
                solutions.append(lam)
    if not solutions:
        raise NoPositiveDepth("no depth solution with all depths positive")
    poses = []
    seen = []
    for lam in solutions:
        pts_rig = np.array([os_[i] * span + lam[i] * span * qs[i]
                            for i in range(3)])
        try:
            rot, t, _ = absolute_orientation(pts_rig, xw)
        except CollinearPoints:
            continue
        key = np.concatenate([rot.ravel(), t / span])
        if any(np.linalg.norm(key - s) < 1e-6 for s in seen):
            continue
        seen.append(key)
        poses.append((rot, t))
    if not poses:
        raise NoPositiveDepth("no admissible pose from positive-depth roots")
    return poses[:max_solutions]


def _quad_roots(a, b, c):
    disc = b * b - 4.0 * a * c
    if disc < 0:
        if disc > -1e-10 * max(b * b, abs(4 * a * c), 1e-30):
            disc = 0.0
        else:
            return []
    rt = np.sqrt(disc)
    return [(-b + rt) / (2 * a), (-b - rt) / (2 * a)]


def _polish_depths(lam, eqs, steps=10, tol=1e-11):
    pairs = ((0, 1), (0, 2), (1, 2))
    for _ in range(steps):
        r = np.empty(3)
        jac = np.zeros((3, 3))
        for row, ((i, j), (c, ei, ej, k)) in enumerate(zip(pairs, eqs)):
            li, lj = lam[i], lam[j]
            r[row] = li * li + lj * lj - 2 * c * li * lj + 2 * ei * li \
                - 2 * ej * lj + k
            jac[row, i] = 2 * li - 2 * c * lj + 2 * ei
            jac[row, j] = 2 * lj - 2 * c * li - 2 * ej
        if np.max(np.abs(r)) < tol:
            return lam
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        lam = lam + delta
        if not np.all(np.isfinite(lam)):
            return None
    r_final = max(abs(lam[i] ** 2 + lam[j] ** 2 - 2 * e[0] * lam[i] * lam[j]
                      + 2 * e[1] * lam[i] - 2 * e[2] * lam[j] + e[3])
                  for (i, j), e in zip(pairs, eqs))
    return lam if r_final < 1e-8 else None


# ---------------------------------------------------------------------------
# planar hand-eye calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarHandEyeResult:
    """Camera pose in the odometry frame; height is not observable."""

    rotation: np.ndarray
    translation: np.ndarray  # z forced to 0
    scale: float  # metric scale of the camera-motion translations
    height_observable: bool = False


def solve_planar_hand_eye(camera_motions, odometry_motions, min_yaw=1e-3):
    """5-DoF camera-to-odometry transform from paired relative motions.

    camera_motions and odometry_motions are time-aligned lists of
    (R, t) relative poses (pose of frame k+1 in frame k). The camera
    translations may carry one unknown common scale, which is resolved
    against the metric odometry.
    """
    if len(camera_motions) != len(odometry_motions):
        raise ValueError("motion lists must be time-aligned and equal length")
    from scipy.spatial.transform import Rotation

    yaws = np.array([np.arctan2(r[1, 0], r[0, 0]) for r, _ in odometry_motions])
    keep = np.abs(yaws) >= min_yaw
    if np.count_nonzero(keep) < 2:
        raise InsufficientMotion(
            "need >= 2 motion pairs with non-zero relative yaw")
    axes = []
    for flag, yaw, (rot_b, _) in zip(keep, yaws, camera_motions):
        if not flag:
            continue
        rv = Rotation.from_matrix(rot_b).as_rotvec()
        axes.append(rv / yaw)
    axis = np.mean(axes, axis=0)
    norm = np.linalg.norm(axis)
    if norm < 1e-9:
        raise InsufficientMotion("camera rotation axes cancel out")
    axis /= norm
    r_align = _rotation_between(axis, np.array([0.0, 0.0, 1.0]))

    rows = []
    rhs = []
    for flag, yaw, (_, t_b), (rot_a, t_a) in zip(
            keep, yaws, camera_motions, odometry_motions):
        if not flag:
            continue
        v = r_align @ np.asarray(t_b, dtype=float)
        c, s = np.cos(yaw), np.sin(yaw)
        rows.append([c - 1.0, -s, -v[0], v[1]])
        rows.append([s, c - 1.0, -v[1], -v[0]])
        rhs.extend([-t_a[0], -t_a[1]])
    rows = np.asarray(rows)
    rhs = np.asarray(rhs)
    sol, _, rank, svals = np.linalg.lstsq(rows, rhs, rcond=None)
    if rank < 4 or svals[3] < 1e-8 * svals[0]:
        raise InsufficientMotion("motion set leaves the transform unobservable")
    tx, ty, p, q = sol
    scale = float(np.hypot(p, q))
    phi = float(np.arctan2(q, p))
    rotation = rotz(phi) @ r_align
    return PlanarHandEyeResult(rotation, np.array([tx, ty, 0.0]), scale)


def _rotation_between(a, b):
    """Rotation taking unit vector a to unit vector b."""
    c = float(np.clip(a @ b, -1.0, 1.0))
    axis = np.cross(a, b)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        if c > 0:
            return np.eye(3)
        # pick any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0])
        if abs(a[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        axis /= np.linalg.norm(axis)
        from scipy.spatial.transform import Rotation
        return Rotation.from_rotvec(np.pi * axis).as_matrix()
    from scipy.spatial.transform import Rotation
    return Rotation.from_rotvec(axis / n * np.arccos(c)).as_matrix()


# ---------------------------------------------------------------------------
# nonlinear refinement over a motion model
# ---------------------------------------------------------------------------

def refine_motion_gec(corrs, motion, iterations=15, step=1e-7):
    """Gauss-Newton refinement of a motion hypothesis on GEC residuals.

    Refines within the hypothesis' own model family (ackermann: theta,
    rho; planar: x, y, q; general: 6-DoF with local rotation updates).
    """
    if motion.model == "ackermann":
        params = np.array(motion.params, dtype=float)
        build = lambda p: motion_from_ackermann(p[0], p[1])
    elif motion.model == "planar":
        params = np.array(motion.params, dtype=float)
        build = lambda p: motion_from_planar(p[0], p[1], p[2])
    else:
        params = np.zeros(6)
        base_rot = motion.rotation
        base_t = motion.translation

        def build(p):
            from scipy.spatial.transform import Rotation
            rot = base_rot @ Rotation.from_rotvec(p[:3]).as_matrix()
            return RelativeMotionHypothesis(rot, base_t + p[3:], "general")

    def residuals(p):
        m = build(p)
        return np.array([gec_residual(c, m) for c in corrs])

    for _ in range(iterations):
        r = residuals(params)
        jac = np.empty((len(corrs), len(params)))
        for k in range(len(params)):
            dp = np.zeros_like(params)
            dp[k] = step
            jac[:, k] = (residuals(params + dp) - residuals(params - dp)) / (2 * step)
        delta, _, _, _ = np.linalg.lstsq(jac, -r, rcond=None)
        params = params + delta
        if np.linalg.norm(delta) < 1e-14:
            break
    return build(params)
