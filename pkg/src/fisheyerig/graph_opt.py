"""Nonlinear least-squares backends shared by mapping and calibration.

Two optimizers live here: a planar pose-graph solver and a sparse
bundle engine over vehicle poses, camera extrinsics and landmarks.
Both use damped Gauss-Newton with analytic Jacobians; robust kernels
are applied by iteratively reweighted least squares.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import camera as cam
from .geometry import skew, wrap_angle
from .rig import RigExtrinsics, CameraPose, VehiclePose

GRAD_TOL = 1e-8
MAX_ITERATIONS = 100


def robust_weight(kernel, scale, squared_norm):
    """IRLS weight rho'(s) for s = ||r||^2; kernel in {None,'huber','cauchy'}."""
    if kernel is None:
        return np.ones_like(squared_norm)
    c2 = scale * scale
    if kernel == "huber":
        norm = np.sqrt(np.maximum(squared_norm, 1e-300))
        return np.where(norm <= scale, 1.0, scale / norm)
    if kernel == "cauchy":
        return 1.0 / (1.0 + squared_norm / c2)
    raise ValueError(f"unknown kernel '{kernel}'")


def robust_cost(kernel, scale, squared_norm):
    if kernel is None:
        return squared_norm
    c2 = scale * scale
    if kernel == "huber":
        norm = np.sqrt(np.maximum(squared_norm, 1e-300))
        return np.where(norm <= scale, squared_norm,
                        2.0 * scale * norm - c2)
    if kernel == "cauchy":
        return c2 * np.log1p(squared_norm / c2)
    raise ValueError(f"unknown kernel '{kernel}'")


# ---------------------------------------------------------------------------
# planar pose graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseGraphEdge:
    i: int
    j: int
    kind: str  # "odometric" | "loop"
    measurement: tuple  # (dx, dy, dyaw) of node j in node i's frame
    information: np.ndarray = None  # 3x3; identity when omitted

    def info_sqrt(self):
        if self.information is None:
            return np.eye(3)
        return np.linalg.cholesky(np.asarray(self.information, dtype=float))


@dataclass
class PoseGraph:
    nodes: list  # list[VehiclePose]
    edges: list  # list[PoseGraphEdge]

    def validate(self):
        k = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.i < k and 0 <= e.j < k):
                raise ValueError(f"edge ({e.i},{e.j}) references missing node")
        odo = sorted((e.i, e.j) for e in self.edges if e.kind == "odometric")
        if odo != [(i, i + 1) for i in range(len(odo))]:
            raise ValueError("odometric edges must form the single chain")


def _edge_residual_jacobian(xy_yaw, edge):
    xi, yi, pi_ = xy_yaw[edge.i]
    xj, yj, pj = xy_yaw[edge.j]
    c, s = np.cos(pi_), np.sin(pi_)
    dx, dy = xj - xi, yj - yi
    rot = np.array([[c, s], [-s, c]])  # Rz(-yaw_i), planar block
    local = rot @ np.array([dx, dy])
    meas = edge.measurement
    r = np.array([local[0] - meas[0], local[1] - meas[1],
                  wrap_angle(pj - pi_ - meas[2])])
    drot = np.array([[-s, c], [-c, -s]])
    j_i = np.zeros((3, 3))
    j_i[:2, :2] = -rot
    j_i[:2, 2] = drot @ np.array([dx, dy])
    j_i[2, 2] = -1.0
    j_j = np.zeros((3, 3))
    j_j[:2, :2] = rot
    j_j[2, 2] = 1.0
    return r, j_i, j_j


def pose_graph_cost(graph, robust_kernel_scale=1.0, xy_yaw=None):
    if xy_yaw is None:
        xy_yaw = np.array([n.as_planar() for n in graph.nodes])
    total = 0.0
    for e in graph.edges:
        r, _, _ = _edge_residual_jacobian(xy_yaw, e)
        rw = e.info_sqrt() @ r
        s = float(rw @ rw)
        kernel = "huber" if e.kind == "loop" else None
        total += float(robust_cost(kernel, robust_kernel_scale, np.array(s)))
    return total


def optimize_pose_graph(graph, robust_kernel_scale=1.0,
                        max_iterations=MAX_ITERATIONS, grad_tol=GRAD_TOL):
    """Minimize the relative-pose residuals over planar node poses.

    The first node is held fixed. A Huber kernel acts on loop-closure
    edges only. Returns (graph, final_cost, converged).
    """
    graph.validate()
    xy_yaw = np.array([n.as_planar() for n in graph.nodes])
    k = len(graph.nodes)
    lam = 1e-6
    cost = pose_graph_cost(graph, robust_kernel_scale, xy_yaw)
    converged = False
    for _ in range(max_iterations):
        h = np.zeros((3 * k, 3 * k))
        g = np.zeros(3 * k)
        for e in graph.edges:
            r, j_i, j_j = _edge_residual_jacobian(xy_yaw, e)
            lsq = e.info_sqrt()
            r_w = lsq @ r
            j_iw, j_jw = lsq @ j_i, lsq @ j_j
            kernel = "huber" if e.kind == "loop" else None
            w = float(robust_weight(kernel, robust_kernel_scale,
                                    np.array(float(r_w @ r_w))))
            si, sj = 3 * e.i, 3 * e.j
            h[si:si + 3, si:si + 3] += w * j_iw.T @ j_iw
            h[sj:sj + 3, sj:sj + 3] += w * j_jw.T @ j_jw
            h[si:si + 3, sj:sj + 3] += w * j_iw.T @ j_jw
            h[sj:sj + 3, si:si + 3] += w * j_jw.T @ j_iw
            g[si:si + 3] += w * j_iw.T @ r_w
            g[sj:sj + 3] += w * j_jw.T @ r_w
        g_free = g[3:]
        if np.max(np.abs(g_free)) < grad_tol:
            converged = True
            break
        h_free = h[3:, 3:]
        improved = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(
                    h_free + lam * np.diag(np.diag(h_free)) +
                    1e-12 * np.eye(h_free.shape[0]), -g_free)
            except np.linalg.LinAlgError:
                lam *= 2.0
                continue
            trial = xy_yaw.copy()
            trial[1:] += delta.reshape(-1, 3)
            trial[:, 2] = wrap_angle(trial[:, 2])
            trial_cost = pose_graph_cost(graph, robust_kernel_scale, trial)
            if trial_cost <= cost:
                xy_yaw = trial
                cost = trial_cost
                lam = max(lam * 0.5, 1e-12)
                improved = True
                break
            lam *= 2.0
        if not improved:
            break
    nodes = [VehiclePose.from_planar(*xyy) for xyy in xy_yaw]
    return PoseGraph(nodes, graph.edges), cost, converged


# ---------------------------------------------------------------------------
# sparse map and bundle engine
# ---------------------------------------------------------------------------

@dataclass
class SparseMap:
    """Landmarks, observations and vehicle poses tied to one rig."""

    rig: RigExtrinsics
    poses: list  # list[VehiclePose]
    landmarks: np.ndarray  # (P, 3)
    obs_camera: np.ndarray  # (M,) int
    obs_frame: np.ndarray  # (M,) int
    obs_landmark: np.ndarray  # (M,) int, index into landmarks
    obs_uv: np.ndarray  # (M, 2) float
    landmark_ids: np.ndarray = None  # external ids, optional
    first_camera: np.ndarray = None  # first-observing camera per landmark

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=float).reshape(-1, 3)
        self.obs_camera = np.asarray(self.obs_camera, dtype=int)
        self.obs_frame = np.asarray(self.obs_frame, dtype=int)
        self.obs_landmark = np.asarray(self.obs_landmark, dtype=int)
        self.obs_uv = np.asarray(self.obs_uv, dtype=float).reshape(-1, 2)
        if self.landmark_ids is None:
            self.landmark_ids = np.arange(len(self.landmarks))
        if self.first_camera is None:
            first = np.full(len(self.landmarks), -1, dtype=int)
            for c, l in zip(self.obs_camera, self.obs_landmark):
                if first[l] < 0:
                    first[l] = c
            self.first_camera = first

    def observation_count(self):
        return len(self.obs_uv)

    def copy(self):
        return SparseMap(self.rig, list(self.poses), self.landmarks.copy(),
                         self.obs_camera.copy(), self.obs_frame.copy(),
                         self.obs_landmark.copy(), self.obs_uv.copy(),
                         self.landmark_ids.copy(), self.first_camera.copy())


@dataclass
class BundleOptions:
    free_poses: bool = True
    free_landmarks: bool = True
    free_extrinsics: bool = False
    fix_first_pose: bool = True
    pixel_sigma: float = 1.0  # W1 = I / pixel_sigma^2
    kernel: str = "cauchy"
    kernel_scale: float = 1.0  # in weighted-pixel units
    odometry: list = None  # per-step (dx, dy, dyaw) measurements
    odometry_information: np.ndarray = None  # 3x3 for (dx, dy, dyaw)
    max_iterations: int = MAX_ITERATIONS
    grad_tol: float = GRAD_TOL


@dataclass
class BundleResult:
    map: SparseMap
    rms_reprojection_px: float
    rms_odometry: float
    cost: float
    reprojection_cost: float
    odometry_cost: float
    converged: bool
    iterations: int


class _BundleProblem:
    """Parameter bookkeeping plus vectorized residuals and Jacobians."""

    def __init__(self, smap, options):
        self.map = smap
        self.opt = options
        self.n_frames = len(smap.poses)
        self.n_cams = len(smap.rig.cameras)
        self.n_lms = len(smap.landmarks)
        offset = 0
        self.pose_offset = np.full(self.n_frames, -1)
        if options.free_poses:
            start = 1 if options.fix_first_pose else 0
            for i in range(start, self.n_frames):
                self.pose_offset[i] = offset
                offset += 6
        self.extr_offset = np.full(self.n_cams, -1)
        if options.free_extrinsics:
            for c in range(self.n_cams):
                self.extr_offset[c] = offset
                offset += 6
        self.lm_offset = np.full(self.n_lms, -1)
        if options.free_landmarks:
            for p in range(self.n_lms):
                self.lm_offset[p] = offset
                offset += 3
        self.n_params = offset

    def state(self):
        m = self.map
        return ([(p.rotation.copy(), p.translation.copy()) for p in m.poses],
                [(c.rotation.copy(), c.center.copy()) for c in m.rig.cameras],
                m.landmarks.copy())

    def apply_delta(self, state, delta):
        from scipy.spatial.transform import Rotation
        poses, extr, lms = state
        poses = [(r.copy(), t.copy()) for r, t in poses]
        extr = [(r.copy(), t.copy()) for r, t in extr]
        lms = lms.copy()
        for i in range(self.n_frames):
            off = self.pose_offset[i]
            if off < 0:
                continue
            r, t = poses[i]
            poses[i] = (r @ Rotation.from_rotvec(delta[off:off + 3]).as_matrix(),
                        t + delta[off + 3:off + 6])
        for c in range(self.n_cams):
            off = self.extr_offset[c]
            if off < 0:
                continue
            r, t = extr[c]
            extr[c] = (r @ Rotation.from_rotvec(delta[off:off + 3]).as_matrix(),
                       t + delta[off + 3:off + 6])
        for p in range(self.n_lms):
            off = self.lm_offset[p]
            if off >= 0:
                lms[p] = lms[p] + delta[off:off + 3]
        return poses, extr, lms

    # -- reprojection ------------------------------------------------------

    def _project_blocks(self, state, camera_index, need_jacobian):
        """Residuals and Jacobian blocks for one camera's observations."""
        poses, extr, lms = state
        m = self.map
        sel = np.nonzero(m.obs_camera == camera_index)[0]
        if len(sel) == 0:
            return None
        intr = m.rig.intrinsics[camera_index]
        r_c, t_c = extr[camera_index]
        frames = m.obs_frame[sel]
        lmi = m.obs_landmark[sel]
        x_w = lms[lmi]
        rv = np.stack([poses[f][0] for f in frames])
        tv = np.stack([poses[f][1] for f in frames])
        y = np.einsum("nji,nj->ni", rv, x_w - tv)  # R_v^T (X - t)
        x_cam = (y - t_c) @ r_c  # row-vector form of R_c^T (y - t_c)
        uv, valid = cam.project(intr, x_cam)
        res = (uv - m.obs_uv[sel]) / self.opt.pixel_sigma
        res[~valid] = 0.0
        out = {"sel": sel, "residual": res, "valid": valid}
        if not need_jacobian:
            return out
        j_pix = _projection_jacobian(intr, x_cam) / self.opt.pixel_sigma
        j_pix[~valid] = 0.0
        out["j_lm"] = None
        out["j_pose"] = None
        out["j_extr"] = None
        rct = r_c.T
        if self.opt.free_landmarks:
            # dX_cam/dX_w = R_c^T R_v^T
            d = np.einsum("ij,nkj->nik", rct, rv)  # R_c^T @ R_v^T
            out["j_lm"] = np.einsum("nij,njk->nik", j_pix, d)
        if self.opt.free_poses:
            d_rot = np.einsum("ij,njk->nik", rct, _skew_batch(y))
            d_tr = -np.einsum("ij,nkj->nik", rct, rv)
            out["j_pose"] = (np.einsum("nij,njk->nik", j_pix, d_rot),
                             np.einsum("nij,njk->nik", j_pix, d_tr))
        if self.opt.free_extrinsics:
            d_rot = _skew_batch(x_cam)
            out["j_extr"] = (np.einsum("nij,njk->nik", j_pix, d_rot),
                             np.einsum("nij,jk->nik", -j_pix, rct))
        return out

    def residual_vector(self, state):
        """Stacked weighted residuals (reprojection then odometry)."""
        parts = []
        for c in range(self.n_cams):
            blk = self._project_blocks(state, c, need_jacobian=False)
            if blk is not None:
                parts.append(blk["residual"].ravel())
        parts.append(self._odometry_residuals(state)[0].ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def _odometry_residuals(self, state):
        opt = self.opt
        if opt.odometry is None:
            return np.zeros((0, 3)), None
        poses, _, _ = state
        info = opt.odometry_information
        lsq = np.eye(3) if info is None else np.linalg.cholesky(
            np.asarray(info, dtype=float))
        rs = np.zeros((len(opt.odometry), 3))
        jac = []
        for i, meas in enumerate(opt.odometry):
            r_i, t_i = poses[i]
            r_j, t_j = poses[i + 1]
            local = r_i.T @ (t_j - t_i)
            m_rel = r_i.T @ r_j
            yaw = np.arctan2(m_rel[1, 0], m_rel[0, 0])
            r = np.array([local[0] - meas[0], local[1] - meas[1],
                          wrap_angle(yaw - meas[2])])
            rs[i] = lsq @ r
            # d local / d dw_i = skew(local); d local / d dt_i = -R_i^T
            j_i = np.zeros((3, 6))
            j_j = np.zeros((3, 6))
            sk = skew(local)
            j_i[:2, :3] = sk[:2]
            j_i[:2, 3:] = -r_i.T[:2]
            j_j[:2, 3:] = r_i.T[:2]
            den = m_rel[0, 0] ** 2 + m_rel[1, 0] ** 2
            # yaw of Exp(-di) M Exp(dj)
            j_j[2, :3] = np.array([
                0.0,
                (-m_rel[0, 0] * m_rel[1, 2] + m_rel[1, 0] * m_rel[0, 2]) / den,
                (m_rel[0, 0] * m_rel[1, 1] - m_rel[1, 0] * m_rel[0, 1]) / den,
            ])
            j_i[2, :3] = np.array([
                m_rel[0, 0] * m_rel[2, 0] / den,
                m_rel[1, 0] * m_rel[2, 0] / den,
                -1.0,
            ])
            jac.append((lsq @ j_i, lsq @ j_j))
        return rs, jac

    # -- assembly ----------------------------------------------------------

    def build_normal_equations(self, state):
        rows = []
        cols = []
        vals = []
        res_parts = []
        row0 = 0
        sq_parts = []
        weights_parts = []
        for c in range(self.n_cams):
            blk = self._project_blocks(state, c, need_jacobian=True)
            if blk is None:
                continue
            res = blk["residual"]
            n = len(res)
            s = np.sum(res * res, axis=1)
            w = robust_weight(self.opt.kernel, self.opt.kernel_scale, s)
            w[~blk["valid"]] = 0.0
            sw = np.sqrt(w)
            res_w = res * sw[:, None]
            sq_parts.append(s)
            weights_parts.append(w)
            sel = blk["sel"]
            lmi = self.map.obs_landmark[sel]
            frames = self.map.obs_frame[sel]
            row_idx = row0 + 2 * np.arange(n)

            def scatter(jblk, col_offsets, width):
                ok = col_offsets >= 0
                if not np.any(ok):
                    return
                jw = jblk * sw[:, None, None]
                r_local = np.repeat(row_idx[ok], 2 * width) + \
                    np.tile(np.repeat([0, 1], width), np.count_nonzero(ok))
                c_local = np.tile(
                    np.concatenate([np.arange(width), np.arange(width)]),
                    np.count_nonzero(ok)) + np.repeat(col_offsets[ok], 2 * width)
                rows.append(r_local)
                cols.append(c_local)
                vals.append(jw[ok].reshape(-1))

            if blk["j_lm"] is not None:
                scatter(blk["j_lm"], self.lm_offset[lmi], 3)
            if blk["j_pose"] is not None:
                offs = self.pose_offset[frames]
                scatter(blk["j_pose"][0], offs, 3)
                scatter(blk["j_pose"][1], np.where(offs >= 0, offs + 3, -1), 3)
            if blk["j_extr"] is not None:
                off = self.extr_offset[c]
                offs = np.full(n, off)
                scatter(blk["j_extr"][0], offs, 3)
                scatter(blk["j_extr"][1], np.where(offs >= 0, offs + 3, -1), 3)
            res_parts.append(res_w.ravel())
            row0 += 2 * n

        odo_res, odo_jac = self._odometry_residuals(state)
        odo_cost = float(np.sum(odo_res * odo_res))
        if odo_jac is not None:
            for i, (j_i, j_j) in enumerate(odo_jac):
                for node, jblk in ((i, j_i), (i + 1, j_j)):
                    off = self.pose_offset[node]
                    if off < 0:
                        continue
                    for rr in range(3):
                        for cc in range(6):
                            if jblk[rr, cc] != 0.0:
                                rows.append(np.array([row0 + 3 * i + rr]))
                                cols.append(np.array([off + cc]))
                                vals.append(np.array([jblk[rr, cc]]))
            res_parts.append(odo_res.ravel())
            row0 += 3 * len(odo_res)

        residual = np.concatenate(res_parts) if res_parts else np.zeros(0)
        jac = sp.csr_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, dtype=int),
              np.concatenate(cols) if cols else np.zeros(0, dtype=int))),
            shape=(row0, self.n_params))
        sq = np.concatenate(sq_parts) if sq_parts else np.zeros(0)
        repro_cost = float(np.sum(robust_cost(
            self.opt.kernel, self.opt.kernel_scale, sq)))
        return jac, residual, repro_cost, odo_cost

    def cost(self, state):
        total_sq = []
        for c in range(self.n_cams):
            blk = self._project_blocks(state, c, need_jacobian=False)
            if blk is None:
                continue
            res = blk["residual"]
            total_sq.append(np.sum(res * res, axis=1))
        sq = np.concatenate(total_sq) if total_sq else np.zeros(0)
        repro = float(np.sum(robust_cost(self.opt.kernel,
                                         self.opt.kernel_scale, sq)))
        odo_res, _ = self._odometry_residuals(state)
        odo = float(np.sum(odo_res * odo_res))
        return repro + odo, repro, odo

    def reprojection_rms_px(self, state):
        errs = []
        for c in range(self.n_cams):
            blk = self._project_blocks(state, c, need_jacobian=False)
            if blk is None:
                continue
            res = blk["residual"][blk["valid"]] * self.opt.pixel_sigma
            errs.append(np.sum(res * res, axis=1))
        if not errs:
            return 0.0
        return float(np.sqrt(np.mean(np.concatenate(errs))))


def _skew_batch(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _projection_jacobian(intr, x_cam):
    """Batched 2x3 Jacobian of the fisheye projection at camera points."""
    n = np.linalg.norm(x_cam, axis=-1, keepdims=True)
    n = np.maximum(n, 1e-12)
    s = x_cam / n
    eye = np.broadcast_to(np.eye(3), s.shape[:-1] + (3, 3))
    d_s = (eye - s[..., :, None] * s[..., None, :]) / n[..., None]
    z = s[..., 2] + intr.xi
    z = np.where(np.abs(z) < 1e-12, 1e-12, z)
    xu = s[..., 0] / z
    yu = s[..., 1] / z
    d_persp = np.zeros(s.shape[:-1] + (2, 3))
    d_persp[..., 0, 0] = 1.0 / z
    d_persp[..., 0, 2] = -xu / z
    d_persp[..., 1, 1] = 1.0 / z
    d_persp[..., 1, 2] = -yu / z
    r = xu * xu + yu * yu
    k1, k2, p1, p2 = intr.k1, intr.k2, intr.p1, intr.p2
    radial = k1 * r + k2 * r * r
    dr = k1 + 2.0 * k2 * r
    d_dist = np.zeros(s.shape[:-1] + (2, 2))
    d_dist[..., 0, 0] = 1.0 + radial + 2.0 * xu * xu * dr \
        + 2.0 * p1 * yu + 6.0 * p2 * xu
    d_dist[..., 0, 1] = 2.0 * xu * yu * dr + 2.0 * p1 * xu + 2.0 * p2 * yu
    d_dist[..., 1, 0] = 2.0 * xu * yu * dr + 2.0 * p1 * xu + 2.0 * p2 * yu
    d_dist[..., 1, 1] = 1.0 + radial + 2.0 * yu * yu * dr \
        + 6.0 * p1 * yu + 2.0 * p2 * xu
    gamma = np.array([[intr.gamma1, 0.0], [0.0, intr.gamma2]])
    j = np.einsum("ij,njk,nkl,nlm->nim", gamma, d_dist, d_persp, d_s)
    return j


def bundle_adjust(smap, options):
    """Damped Gauss-Newton over the selected free variable groups."""
    problem = _BundleProblem(smap, options)
    state = problem.state()
    cost, repro, odo = problem.cost(state)
    lam = 1e-6
    converged = False
    iterations = 0
    if problem.n_params == 0:
        raise ValueError("no free variables selected")
    for iterations in range(1, options.max_iterations + 1):
        jac, residual, repro, odo = problem.build_normal_equations(state)
        grad = jac.T @ residual
        if np.max(np.abs(grad)) < options.grad_tol:
            converged = True
            break
        h = (jac.T @ jac).tocsc()
        improved = False
        for _ in range(20):
            damped = h + sp.diags(lam * h.diagonal() + 1e-12)
            try:
                delta = spla.spsolve(damped, -grad)
            except RuntimeError:
                lam *= 2.0
                continue
            trial = problem.apply_delta(state, delta)
            trial_cost, _, _ = problem.cost(trial)
            if trial_cost <= cost:
                state = trial
                cost = trial_cost
                lam = max(lam * 0.5, 1e-12)
                improved = True
                break
            lam *= 2.0
        if not improved:
            break
    poses, extr, lms = state
    new_map = smap.copy()
    new_map.poses = [VehiclePose(r, t) for r, t in poses]
    new_map.rig = RigExtrinsics(
        [CameraPose(r, t) for r, t in extr], list(smap.rig.intrinsics))
    new_map.landmarks = lms
    cost, repro, odo = problem.cost(state)
    rms_px = problem.reprojection_rms_px(state)
    rms_odo = float(np.sqrt(odo / max(1, 3 * len(options.odometry)))) \
        if options.odometry else 0.0
    return BundleResult(new_map, rms_px, rms_odo, cost, repro, odo,
                        converged, iterations)


def refine_map(smap, fix_poses=False, fix_landmarks=False, robust_scale=1.0,
               pixel_sigma=1.0, kernel="huber", max_iterations=MAX_ITERATIONS):
    """Refine landmarks and/or poses by minimizing robust reprojection.

    Returns (refined SparseMap, rms reprojection in pixels, converged).
    """
    if fix_poses and fix_landmarks:
        raise ValueError("at least one of poses/landmarks must be free")
    counts = np.bincount(smap.obs_landmark, minlength=len(smap.landmarks))
    if not fix_landmarks and np.any(counts[np.unique(smap.obs_landmark)] < 2):
        raise ValueError("every free landmark needs >= 2 observations")
    options = BundleOptions(
        free_poses=not fix_poses, free_landmarks=not fix_landmarks,
        free_extrinsics=False, pixel_sigma=pixel_sigma,
        kernel=kernel, kernel_scale=robust_scale,
        max_iterations=max_iterations)
    result = bundle_adjust(smap, options)
    return result.map, result.rms_reprojection_px, result.converged
