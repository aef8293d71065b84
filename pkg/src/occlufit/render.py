"""Deterministic software rasterizer.

Z-buffered triangle rasterization with perspective-correct barycentric
interpolation of per-vertex radiance. Pixel (ix, iy) is sampled at its
center (ix + 0.5, iy + 0.5); a center that lands exactly on an edge is
covered only when that edge is a top or left edge of the screen-space
triangle, so adjacent triangles never double-cover a pixel. No
anti-aliasing; back-face culling is off by default. The inner loop is
numba-compiled for speed but uses strict IEEE arithmetic, so results are
bitwise reproducible and match a scalar point-in-triangle oracle exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .camera import (
    CameraIntrinsics,
    Pose,
    check_gamma,
    project_points,
    shade_vertices,
)
from .errors import ArgumentError, DimensionMismatchError, GeometryError
from .morphable import MorphableBasis, synthesize_shape, synthesize_texture


@dataclass(frozen=True)
class Mesh:
    """Renderable mesh: positions and albedo flat (3V,), unit normals (V, 3),
    triangle index triples (T, 3)."""

    positions: np.ndarray
    albedo: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1)
        alb = np.asarray(self.albedo, dtype=np.float64).reshape(-1)
        nrm = np.asarray(self.normals, dtype=np.float64)
        tri = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if pos.size % 3 != 0:
            raise DimensionMismatchError("positions must be (3V,)")
        v = pos.size // 3
        if alb.shape != (3 * v,):
            raise DimensionMismatchError("albedo length differs from 3V")
        if nrm.shape != (v, 3):
            raise DimensionMismatchError("normals must be (V, 3)")
        if tri.size and (tri.min() < 0 or tri.max() >= v):
            raise DimensionMismatchError("triangle index out of range")
        if v and np.abs(np.linalg.norm(nrm, axis=1) - 1.0).max() > 1e-6:
            raise ArgumentError("normals must be unit length (tol 1e-6)")
        for name, arr in (("positions", pos), ("albedo", alb),
                          ("normals", nrm), ("triangles", tri)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def vertex_count(self) -> int:
        return self.positions.size // 3


@dataclass(frozen=True)
class RenderOutput:
    """Rendered image in [0, 1], binary coverage, and per-pixel depth
    (+inf where uncovered)."""

    image: np.ndarray     # (H, W, 3)
    coverage: np.ndarray  # (H, W) of {0.0, 1.0}
    depth: np.ndarray     # (H, W)

    def __post_init__(self):
        for arr in (self.image, self.coverage, self.depth):
            arr.setflags(write=False)


def compute_normals(positions: np.ndarray,
                    triangles: np.ndarray) -> np.ndarray:
    """Per-vertex normals: area-weighted mean of incident face normals.

    The unnormalized face cross products already carry the area weight;
    they are accumulated in triangle order, which is deterministic for a
    given mesh. Raises GeometryError naming any triangle with area below
    1e-12 or any vertex with no incident area.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    face = np.cross(pos[tri[:, 1]] - pos[tri[:, 0]],
                    pos[tri[:, 2]] - pos[tri[:, 0]])
    areas = 0.5 * np.linalg.norm(face, axis=1)
    small = np.nonzero(areas <= 1e-12)[0]
    if small.size:
        raise GeometryError(f"triangle {int(small[0])} has area "
                            f"{areas[small[0]]:g} <= 1e-12")
    acc = np.zeros_like(pos)
    for k in range(3):
        np.add.at(acc, tri[:, k], face)
    norms = np.linalg.norm(acc, axis=1)
    isolated = np.nonzero(norms <= 1e-20)[0]
    if isolated.size:
        raise GeometryError(f"vertex {int(isolated[0])} has no incident "
                            "surface area")
    return acc / norms[:, None]


@njit(cache=True)
def _raster_kernel(pix, depth, colors, tris, height, width, cull):
    image = np.zeros((height, width, 3))
    covered = np.zeros((height, width), np.uint8)
    zbuf = np.full((height, width), np.inf)
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        ax = pix[i0, 0]
        ay = pix[i0, 1]
        bx = pix[i1, 0]
        by = pix[i1, 1]
        cx = pix[i2, 0]
        cy = pix[i2, 1]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            if cull:
                continue
            i1, i2 = i2, i1
            bx = pix[i1, 0]
            by = pix[i1, 1]
            cx = pix[i2, 0]
            cy = pix[i2, 1]
            area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        az = depth[i0]
        bz = depth[i1]
        cz = depth[i2]
        # Pixel centers sit at integer + 0.5; bbox clamped to the raster.
        xmin = min(ax, min(bx, cx))
        xmax = max(ax, max(bx, cx))
        ymin = min(ay, min(by, cy))
        ymax = max(ay, max(by, cy))
        x0 = max(0, int(np.floor(xmin - 0.5)))
        x1 = min(width - 1, int(np.ceil(xmax - 0.5)))
        y0 = max(0, int(np.floor(ymin - 0.5)))
        y1 = min(height - 1, int(np.ceil(ymax - 0.5)))
        # Top-left tie rule per edge: include a center exactly on the
        # edge when the edge is horizontal going +x, or goes up (-y).
        tl0 = (cy == by and cx > bx) or (cy < by)
        tl1 = (ay == cy and ax > cx) or (ay < cy)
        tl2 = (by == ay and bx > ax) or (by < ay)
        for iy in range(y0, y1 + 1):
            py = iy + 0.5
            for ix in range(x0, x1 + 1):
                px = ix + 0.5
                w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if not (w0 > 0.0 or (w0 == 0.0 and tl0)):
                    continue
                if not (w1 > 0.0 or (w1 == 0.0 and tl1)):
                    continue
                if not (w2 > 0.0 or (w2 == 0.0 and tl2)):
                    continue
                l0 = w0 / area2
                l1 = w1 / area2
                l2 = w2 / area2
                inv_z = l0 / az + l1 / bz + l2 / cz
                z = 1.0 / inv_z
                if z < zbuf[iy, ix]:
                    zbuf[iy, ix] = z
                    covered[iy, ix] = 1
                    for ch in range(3):
                        num = (l0 * colors[i0, ch] / az
                               + l1 * colors[i1, ch] / bz
                               + l2 * colors[i2, ch] / cz)
                        image[iy, ix, ch] = num / inv_z
    return image, covered, zbuf


def rasterize(mesh: Mesh, pose: Pose, intrinsics: CameraIntrinsics,
              gamma: np.ndarray, width: int, height: int,
              cull_backfaces: bool = False) -> RenderOutput:
    """Shade, project, and rasterize a mesh onto a (height, width) raster.

    Vertices are shaded first (SH irradiance times albedo), projected
    through the pinhole camera, then scan-converted with a z-buffer.
    Triangles with negative screen-space orientation are culled when
    ``cull_backfaces`` is set. Background pixels are color 0 with
    coverage 0 and depth +inf.
    """
    if width < 1 or height < 1:
        raise ArgumentError(f"raster size {width}x{height} must be >= 1x1")
    gamma = check_gamma(gamma)
    if mesh.triangles.shape[0] == 0 or mesh.vertex_count == 0:
        return RenderOutput(np.zeros((height, width, 3)),
                            np.zeros((height, width)),
                            np.full((height, width), np.inf))
    colors = shade_vertices(mesh.albedo, mesh.normals, gamma).reshape(-1, 3)
    pix, depth = project_points(mesh.positions, pose, intrinsics)
    image, covered, zbuf = _raster_kernel(
        np.ascontiguousarray(pix), np.ascontiguousarray(depth),
        np.ascontiguousarray(colors), np.ascontiguousarray(mesh.triangles),
        height, width, cull_backfaces)
    return RenderOutput(image, covered.astype(np.float64), zbuf)


def render_params(basis: MorphableBasis, params, intrinsics: CameraIntrinsics,
                  width: int, height: int) -> RenderOutput:
    """Render a parameter vector: synthesize shape and albedo, compute
    model-space normals, shade, project, rasterize. Fully deterministic."""
    positions = synthesize_shape(basis, params.shape_coeffs())
    albedo = synthesize_texture(basis, params.texture_coeffs())
    normals = compute_normals(positions, basis.triangles)
    mesh = Mesh(positions, albedo, normals, basis.triangles)
    return rasterize(mesh, params.pose(), intrinsics, params.gamma,
                     width, height)
