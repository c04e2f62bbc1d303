"""Unified projection model for fisheye cameras.

A scene point is projected onto a unit sphere, shifted along z by the
mirror parameter xi, reprojected onto the normalized image plane,
distorted by a radial-tangential polynomial, and mapped to pixels by
the projection matrix K. Directions whose shifted z-component is not
positive fall outside the model's valid cap.

All operations accept and return either single points or arrays with
the coordinate components in the last axis.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint, NoConvergence

# Rays are accepted while the z-component after the xi-shift stays above
# this; the model, not the lens spec sheet, defines projectability.
VALID_CAP_EPS = 1e-6

UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10


@dataclass(frozen=True)
class CameraIntrinsics:
    """Unified-projection parameters for one fisheye camera."""

    xi: float
    gamma1: float
    gamma2: float
    u0: float
    v0: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 1280
    height: int = 800

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("focal lengths must be positive")
        if self.xi < 0:
            raise ValueError("mirror parameter must be non-negative")
        if not (0 <= self.u0 < self.width and 0 <= self.v0 < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def has_distortion(self):
        return any(c != 0.0 for c in (self.k1, self.k2, self.p1, self.p2))

    def as_dict(self):
        return {
            "xi": self.xi, "gamma1": self.gamma1, "gamma2": self.gamma2,
            "u0": self.u0, "v0": self.v0, "k1": self.k1, "k2": self.k2,
            "p1": self.p1, "p2": self.p2,
            "width": self.width, "height": self.height,
        }


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __iter__(self):
        yield self.u
        yield self.v


def _distort(intr, xu, yu):
    """Radial-tangential distortion displacement, applied to (xu, yu)."""
    r = xu * xu + yu * yu
    radial = intr.k1 * r + intr.k2 * r * r
    dx = xu * radial + 2.0 * intr.p1 * xu * yu + intr.p2 * (r + 2.0 * xu * xu)
    dy = yu * radial + intr.p1 * (r + 2.0 * yu * yu) + 2.0 * intr.p2 * xu * yu
    return xu + dx, yu + dy


def project(intr, point):
    """Project camera-frame point(s) to pixel coordinates.

    Raises DegeneratePoint for scalar input outside the valid cap. For
    array input returns (pixels, valid_mask) instead of raising.
    """
    pt = np.asarray(point, dtype=float)
    single = pt.ndim == 1
    pts = np.atleast_2d(pt)
    norms = np.linalg.norm(pts, axis=-1)
    valid = norms > 0
    safe_norms = np.where(valid, norms, 1.0)
    s = pts / safe_norms[..., None]
    zs = s[..., 2] + intr.xi
    valid &= zs > VALID_CAP_EPS
    safe_zs = np.where(valid, zs, 1.0)
    xu = s[..., 0] / safe_zs
    yu = s[..., 1] / safe_zs
    xd, yd = _distort(intr, xu, yu)
    u = intr.gamma1 * xd + intr.u0
    v = intr.gamma2 * yd + intr.v0
    if single:
        if not valid[0]:
            raise DegeneratePoint(
                f"point {point} outside the valid viewing cap (xi={intr.xi})")
        return PixelPoint(float(u[0]), float(v[0]))
    return np.stack([u, v], axis=-1), valid


def _undistort(intr, xd, yd):
    """Invert the distortion polynomial by fixed-point iteration."""
    xu, yu = xd, yd
    converged = np.zeros(np.shape(xd), dtype=bool) if np.ndim(xd) else False
    for _ in range(UNDISTORT_MAX_ITER):
        xn, yn = _distort(intr, xu, yu)
        xu_next = xu + (xd - xn)
        yu_next = yu + (yd - yn)
        step = np.hypot(xu_next - xu, yu_next - yu)
        xu, yu = xu_next, yu_next
        converged = step < UNDISTORT_TOL
        if np.all(converged):
            break
    return xu, yu, converged


def unproject(intr, pixel):
    """Lift pixel(s) to unit viewing ray(s) in the camera frame.

    Scalar input raises NoConvergence if undistortion stalls; array
    input returns (rays, valid_mask).
    """
    px = np.asarray(
        pixel if not isinstance(pixel, PixelPoint) else (pixel.u, pixel.v),
        dtype=float)
    single = px.ndim == 1
    pxs = np.atleast_2d(px)
    xd = (pxs[..., 0] - intr.u0) / intr.gamma1
    yd = (pxs[..., 1] - intr.v0) / intr.gamma2
    if intr.has_distortion:
        xu, yu, converged = _undistort(intr, xd, yd)
    else:
        xu, yu = xd, yd
        converged = np.ones_like(xu, dtype=bool)
    # Point on the unit sphere whose xi-shifted perspective image is
    # (xu, yu): solve |lam*(xu, yu, 1) - (0, 0, xi)| = 1 for lam > 0.
    r2 = xu * xu + yu * yu
    disc = 1.0 + (1.0 - intr.xi * intr.xi) * r2
    ok = converged & (disc >= 0.0)
    lam = (intr.xi + np.sqrt(np.maximum(disc, 0.0))) / (1.0 + r2)
    ray = np.stack([lam * xu, lam * yu, lam - intr.xi], axis=-1)
    # unit by construction; renormalize to kill rounding
    n = np.linalg.norm(ray, axis=-1)
    ok &= n > 0
    ray = ray / np.where(ok, n, 1.0)[..., None]
    if single:
        if not ok[0]:
            raise NoConvergence(f"undistortion failed for pixel {pixel}")
        return ray[0]
    return ray, ok


@dataclass(frozen=True)
class PinholeSpec:
    """Virtual pinhole used for rectified views."""

    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("virtual focal must be positive")


def rectify_lookup(intr, virtual_rotation, virtual_pinhole):
    """Per-pixel source-coordinate map from a virtual pinhole view.

    virtual_rotation maps virtual-camera directions into the fisheye
    camera frame. Returns (map_uv, valid) with map_uv of shape
    (height, width, 2); cells whose ray leaves the fisheye model or the
    source image bounds are marked invalid.
    """
    rot = np.asarray(virtual_rotation, dtype=float)
    vp = virtual_pinhole
    us, vs = np.meshgrid(np.arange(vp.width), np.arange(vp.height))
    dirs = np.stack([
        (us - vp.cx) / vp.focal,
        (vs - vp.cy) / vp.focal,
        np.ones_like(us, dtype=float),
    ], axis=-1)
    dirs = dirs @ rot.T
    uv, valid = project(intr, dirs.reshape(-1, 3))
    uv = uv.reshape(vp.height, vp.width, 2)
    valid = valid.reshape(vp.height, vp.width)
    inside = (
        (uv[..., 0] >= 0) & (uv[..., 0] <= intr.width - 1)
        & (uv[..., 1] >= 0) & (uv[..., 1] <= intr.height - 1)
    )
    return uv, valid & inside
