"""Pinhole cameras, rigid poses and image warping.

Conventions used throughout the package:

* Camera frame is x right, y down, z forward. Pixel ``(u, v)`` addresses
  column ``u`` and row ``v``; integer coordinates sit on pixel centres.
* Images are float arrays of shape (H, W) or (H, W, C) with values in [0, 1];
  NaN marks an invalid pixel.
* Depth maps are float arrays of shape (H, W) holding z-depth in metres;
  non-positive or non-finite entries are invalid.
* A relative pose maps reference-camera coordinates to source-camera
  coordinates. Sequences store camera-to-world poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, GimbalLock, NonPositiveDepth

GIMBAL_EPS = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def scaled(self, s: float) -> CameraIntrinsics:
        """Intrinsics for an image resampled by factor ``s`` (0.25 for quarter size).

        All six fields are multiplied by ``s``; the image size must stay integral.
        Pixel ``i`` of the scaled image corresponds to pixel ``i / s`` of the
        original, which is what decimation at offset zero produces.
        """
        w = self.width * s
        h = self.height * s
        if w != round(w) or h != round(h):
            raise ValueError(f"scale {s} does not give an integral image size")
        return CameraIntrinsics(
            self.fx * s, self.fy * s, self.cx * s, self.cy * s, int(round(w)), int(round(h))
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: Pose) -> Pose:
        """``a @ b`` applies ``b`` first, then ``a``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def is_rotation_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        ortho = np.max(np.abs(r.T @ r - np.eye(3)))
        return bool(ortho < tol and abs(np.linalg.det(r) - 1.0) < tol)


def compose(a: Pose, b: Pose) -> Pose:
    return a @ b


def inverse(p: Pose) -> Pose:
    return p.inverse()


def relative_pose(world_from_ref: Pose, world_from_src: Pose) -> Pose:
    """Pose mapping reference-camera coordinates into source-camera coordinates."""
    return world_from_src.inverse() @ world_from_ref


@dataclass(frozen=True, eq=False)
class EulerPose:
    """Euler view of a pose: intrinsic Z-Y-X angles ``(yaw, pitch, roll)`` in radians."""

    angles: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", np.array(self.angles, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "translation", np.array(self.translation, dtype=np.float64).reshape(3)
        )


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_pose(e: EulerPose) -> Pose:
    yaw, pitch, roll = e.angles
    return Pose(_rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll), e.translation)


def pose_to_euler(p: Pose) -> EulerPose:
    r = p.rotation
    s = -r[2, 0]
    pitch = math.asin(max(-1.0, min(1.0, s)))
    if abs(abs(pitch) - math.pi / 2) <= GIMBAL_EPS:
        raise GimbalLock(f"pitch {pitch:.9f} is within {GIMBAL_EPS} of +-pi/2")
    # atan2 forms avoid the precision loss of asin near the poles
    pitch = math.atan2(s, math.hypot(r[0, 0], r[1, 0]))
    yaw = math.atan2(r[1, 0], r[0, 0])
    roll = math.atan2(r[2, 1], r[2, 2])
    return EulerPose([yaw, pitch, roll], p.translation)


def project(point, k: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise NonPositiveDepth(f"point depth {z} is not positive")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def unproject(pixel, depth: float, k: CameraIntrinsics) -> np.ndarray:
    u, v = (float(c) for c in pixel)
    if not depth > 0:
        raise NonPositiveDepth(f"depth {depth} is not positive")
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, float(depth)])


def pixel_grid(k: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Column and row coordinates of every pixel, each of shape (H, W)."""
    v, u = np.mgrid[0 : k.height, 0 : k.width]
    return u.astype(np.float64), v.astype(np.float64)


def image_valid(img: np.ndarray) -> np.ndarray:
    """Per-pixel validity of an (H, W) or (H, W, C) image."""
    img = np.asarray(img)
    fin = np.isfinite(img)
    return fin.all(axis=2) if img.ndim == 3 else fin


def depth_valid(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth)
    with np.errstate(invalid="ignore"):
        return np.isfinite(depth) & (depth > 0)


def bilinear_sample(img: np.ndarray, u, v):
    """Sample ``img`` at continuous coordinates.

    Returns NaN where the sample touches an invalid or out-of-bounds pixel.
    Scalars in give a scalar (or a channel vector) back.
    """
    img = np.asarray(img, dtype=np.float64)
    scalar = np.ndim(u) == 0 and np.ndim(v) == 0
    us = np.atleast_1d(np.asarray(u, dtype=np.float64))
    vs = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if img.ndim == 2:
        out = kernels.gather_bilinear(img, us, vs)
    else:
        out = np.stack(
            [kernels.gather_bilinear(img[..., c], us, vs) for c in range(img.shape[2])],
            axis=-1,
        )
        out[~np.isfinite(out).all(axis=-1)] = np.nan
    return out[0] if scalar else out


def reprojection_rays(rel_pose: Pose, k_ref: CameraIntrinsics, k_src: CameraIntrinsics):
    """Per-pixel terms ``(ray, offset)`` such that a reference pixel at depth d
    lands at homogeneous source coordinate ``d * ray + offset``.

    ``ray`` has shape (3, H, W), ``offset`` shape (3,).
    """
    u, v = pixel_grid(k_ref)
    dirs = np.stack([(u - k_ref.cx) / k_ref.fx, (v - k_ref.cy) / k_ref.fy, np.ones_like(u)])
    m = k_src.matrix @ rel_pose.rotation
    ray = np.einsum("ij,jhw->ihw", m, dirs)
    offset = k_src.matrix @ rel_pose.translation
    return np.ascontiguousarray(ray), offset


def reproject_coords(depth, rel_pose: Pose, k_ref: CameraIntrinsics, k_src: CameraIntrinsics):
    """Source pixel coordinates of every reference pixel; NaN where invalid or behind."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != k_ref.shape:
        raise DimensionMismatch(f"depth shape {depth.shape} != intrinsics {k_ref.shape}")
    ray, offset = reprojection_rays(rel_pose, k_ref, k_src)
    ok = depth_valid(depth)
    d = np.where(ok, depth, 0.0)
    s = d * ray + offset[:, None, None]
    front = ok & (s[2] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        us = np.where(front, s[0] / s[2], np.nan)
        vs = np.where(front, s[1] / s[2], np.nan)
        zs = np.where(front, s[2], np.nan)
    return us, vs, zs


def warp_source_to_ref(
    src: np.ndarray,
    depth: np.ndarray,
    rel_pose: Pose,
    k_ref: CameraIntrinsics,
    k_src: CameraIntrinsics,
) -> np.ndarray:
    """Resample ``src`` into the reference view using the reference depth map."""
    src = np.asarray(src, dtype=np.float64)
    if src.shape[:2] != k_src.shape:
        raise DimensionMismatch(f"source shape {src.shape[:2]} != intrinsics {k_src.shape}")
    us, vs, _ = reproject_coords(depth, rel_pose, k_ref, k_src)
    return bilinear_sample(src, us, vs)


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=2) if img.ndim == 3 else img
