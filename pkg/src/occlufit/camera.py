"""Pose, rotations, perspective projection, and SH illumination.

Conventions fixed here and documented in docs/formats.md:

* Euler order is extrinsic ``Rz(roll) @ Ry(yaw) @ Rx(pitch)``.
* Projection is a pinhole: a vertex ``v`` maps to camera space as
  ``q = k * R @ v + t`` (translation applied before the perspective
  divide), then to pixels as ``focal * (q.x / q.z, q.y / q.z) + pp``.
* Lighting uses the first nine real spherical harmonics, ordered
  [Y00, Y1m1, Y10, Y11, Y2m2, Y2m1, Y20, Y21, Y22]; irradiance is
  floored at zero before it multiplies albedo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import DEPTH_EPS, DIM_SH, FOCAL_AT_224
from .errors import ArgumentError, BehindCameraError, DimensionMismatchError

# Real SH constants (full double precision, tabulated in docs/formats.md):
# SH_C0 = 1/(2 sqrt(pi)),  SH_C1 = sqrt(3/(4 pi)),
# SH_C2A = sqrt(15/(4 pi)), SH_C2B = sqrt(5/(16 pi)), SH_C2C = SH_C2A / 2.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2A = 1.0925484305920792
SH_C2B = 0.31539156525252005
SH_C2C = 0.5462742152960396


@dataclass(frozen=True)
class Pose:
    """Rigid head pose: Euler angles (radians), scale, and translation.

    ``translation`` is a camera-space 3-vector; its x/y components shift
    the face laterally (image-plane direction) and z acts as the camera
    distance offset.
    """

    pitch: float = 0.0
    yaw: float = 0.0
    roll: float = 0.0
    scale_k: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        angles = (self.pitch, self.yaw, self.roll, self.scale_k)
        if not all(math.isfinite(a) for a in angles):
            raise ArgumentError("pose fields must be finite")
        if self.scale_k <= 0.0:
            raise ArgumentError(f"scale_k must be > 0, got {self.scale_k}")
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,):
            raise DimensionMismatchError("translation must be a 3-vector")
        if not np.all(np.isfinite(t)):
            raise ArgumentError("translation must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal length (pixels) and principal point."""

    focal: float
    principal_point: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.focal) and self.focal > 0.0):
            raise ArgumentError(f"focal must be > 0, got {self.focal}")
        pp = np.asarray(self.principal_point, dtype=np.float64).reshape(-1)
        if pp.shape != (2,):
            raise DimensionMismatchError("principal_point must be a 2-vector")
        pp.setflags(write=False)
        object.__setattr__(self, "principal_point", pp)


def default_intrinsics(width: int, height: int) -> CameraIntrinsics:
    """Default pinhole: 1015 px focal at 224x224, scaled by raster size,
    principal point at the raster center."""
    focal = FOCAL_AT_224 * max(width, height) / 224.0
    return CameraIntrinsics(focal, np.array([width / 2.0, height / 2.0]))


def rotation_from_euler(pitch: float, yaw: float, roll: float) -> np.ndarray:
    """Rotation matrix ``Rz(roll) @ Ry(yaw) @ Rx(pitch)``, an SO(3) element."""
    if not all(math.isfinite(a) for a in (pitch, yaw, roll)):
        raise ArgumentError("euler angles must be finite")
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cr, sr = math.cos(roll), math.sin(roll)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def validate_rotation(r: np.ndarray, tol: float = 1e-12) -> None:
    """Raise unless ``r`` is orthonormal with determinant +1 within tol."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise DimensionMismatchError("rotation must be 3x3")
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        raise ArgumentError("matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ArgumentError("matrix determinant differs from 1")


def project_points(points: np.ndarray, pose: Pose,
                   intrinsics: CameraIntrinsics
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Project a flat (3V,) position vector to pixel coordinates.

    Returns ``(pixels, depths)`` with shapes (V, 2) and (V,). Raises
    BehindCameraError naming the first vertex whose camera-space depth
    falls at or below DEPTH_EPS.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 1 or pts.size % 3 != 0:
        raise DimensionMismatchError("points must be a flat (3V,) vector")
    if not np.all(np.isfinite(pts)):
        raise ArgumentError("points must be finite")
    v = pts.reshape(-1, 3)
    r = rotation_from_euler(pose.pitch, pose.yaw, pose.roll)
    q = pose.scale_k * (v @ r.T) + pose.translation
    depths = q[:, 2].copy()
    bad = np.nonzero(depths <= DEPTH_EPS)[0]
    if bad.size:
        raise BehindCameraError(int(bad[0]), float(depths[bad[0]]))
    pixels = (intrinsics.focal * q[:, :2] / depths[:, None]
              + intrinsics.principal_point)
    return pixels, depths


def sh_basis(normal: np.ndarray) -> np.ndarray:
    """The nine real SH basis values for one unit normal."""
    n = np.asarray(normal, dtype=np.float64).reshape(-1)
    if n.shape != (3,):
        raise DimensionMismatchError("normal must be a 3-vector")
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ArgumentError("normal must be unit length (tol 1e-6)")
    return _sh_rows(n[None, :])[0]


def _sh_rows(normals: np.ndarray) -> np.ndarray:
    """(V, 9) SH basis matrix for (V, 3) unit normals, no validation."""
    x, y, z = normals[:, 0], normals[:, 1], normals[:, 2]
    out = np.empty((normals.shape[0], DIM_SH))
    out[:, 0] = SH_C0
    out[:, 1] = SH_C1 * y
    out[:, 2] = SH_C1 * z
    out[:, 3] = SH_C1 * x
    out[:, 4] = SH_C2A * x * y
    out[:, 5] = SH_C2A * y * z
    out[:, 6] = SH_C2B * (3.0 * z * z - 1.0)
    out[:, 7] = SH_C2A * x * z
    out[:, 8] = SH_C2C * (x * x - y * y)
    return out


def check_gamma(gamma: np.ndarray) -> np.ndarray:
    """Validate a 9-vector of SH lighting coefficients."""
    g = np.asarray(gamma, dtype=np.float64).reshape(-1)
    if g.shape != (DIM_SH,):
        raise DimensionMismatchError(f"gamma must have {DIM_SH} entries")
    if not np.all(np.isfinite(g)):
        raise ArgumentError("gamma must be finite")
    return g


def shade_vertices(albedo: np.ndarray, normals: np.ndarray,
                   gamma: np.ndarray) -> np.ndarray:
    """Per-vertex radiance: albedo times SH irradiance, clamped to [0, 1].

    Irradiance ``e = max(0, gamma . sh_basis(n))`` is shared across the
    three color channels of each vertex; the floor avoids the negative
    reconstructions low-order SH can produce.
    """
    g = check_gamma(gamma)
    alb = np.asarray(albedo, dtype=np.float64).reshape(-1)
    nrm = np.asarray(normals, dtype=np.float64)
    if nrm.ndim != 2 or nrm.shape[1] != 3:
        raise DimensionMismatchError("normals must be (V, 3)")
    if alb.shape != (3 * nrm.shape[0],):
        raise DimensionMismatchError(
            f"albedo length {alb.shape[0]} != 3 * {nrm.shape[0]} vertices")
    if np.abs(np.linalg.norm(nrm, axis=1) - 1.0).max() > 1e-6:
        raise ArgumentError("normals must be unit length (tol 1e-6)")
    irradiance = np.maximum(0.0, _sh_rows(nrm) @ g)
    radiance = alb.reshape(-1, 3) * irradiance[:, None]
    return np.clip(radiance, 0.0, 1.0).reshape(-1)
