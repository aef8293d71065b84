"""Linear statistical face model: mean shape/texture plus PCA bases.

Shape is synthesized as ``mean + basis_id @ alpha + basis_exp @ beta``,
texture as ``mean + basis_tex @ beta_te`` (clamped to [0, 1] so the
renderer always sees bounded albedo). The module also owns the on-disk
basis container (binary with a JSON sidecar alternative, see
docs/formats.md) and a deterministic synthetic-basis generator used as
the test fixture; no real face-model data is bundled.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .constants import DIM_EXP, DIM_ID, DIM_TEX
from .errors import (
    ArgumentError,
    BasisDimensionError,
    BasisFormatError,
    DimensionMismatchError,
)

# Binary basis container: magic, version, then V / column counts /
# triangle count as little-endian uint32, then the float64 payload.
_BASIS_MAGIC = b"OCLBASIS"
_BASIS_VERSION = 1
_HEADER = struct.Struct("<8sIIIIII")


@dataclass(frozen=True)
class MorphableBasis:
    """Immutable statistical face model.

    Arrays are flattened vertex-major: entry ``3*v + c`` is coordinate
    (or color channel) ``c`` of vertex ``v``.
    """

    mean_shape: np.ndarray    # (3V,) model units
    mean_texture: np.ndarray  # (3V,) albedo in [0, 1]
    basis_id: np.ndarray      # (3V, 80)
    basis_exp: np.ndarray     # (3V, 64)
    basis_tex: np.ndarray     # (3V, 80)
    triangles: np.ndarray     # (T, 3) vertex indices

    def __post_init__(self):
        for name in ("mean_shape", "mean_texture", "basis_id", "basis_exp",
                     "basis_tex"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "triangles",
            np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        validate_basis(self)
        for name in ("mean_shape", "mean_texture", "basis_id", "basis_exp",
                     "basis_tex", "triangles"):
            getattr(self, name).setflags(write=False)

    @property
    def vertex_count(self) -> int:
        return self.mean_shape.size // 3


@dataclass(frozen=True)
class ShapeCoeffs:
    """Identity (80) and expression (64) shape coefficients."""

    alpha_id: np.ndarray
    beta_exp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha_id",
                           _check_coeffs(self.alpha_id, DIM_ID, "alpha_id"))
        object.__setattr__(self, "beta_exp",
                           _check_coeffs(self.beta_exp, DIM_EXP, "beta_exp"))

    @classmethod
    def zeros(cls) -> "ShapeCoeffs":
        return cls(np.zeros(DIM_ID), np.zeros(DIM_EXP))


@dataclass(frozen=True)
class TextureCoeffs:
    """Texture coefficients (80)."""

    beta_te: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta_te",
                           _check_coeffs(self.beta_te, DIM_TEX, "beta_te"))

    @classmethod
    def zeros(cls) -> "TextureCoeffs":
        return cls(np.zeros(DIM_TEX))


def _check_coeffs(vec, dim: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    if vec.shape != (dim,):
        raise DimensionMismatchError(f"{name} must have {dim} entries, "
                                     f"got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return vec


def validate_basis(basis: MorphableBasis) -> None:
    """Raise if any MorphableBasis invariant is violated."""
    n3 = basis.mean_shape.shape[0]
    if n3 % 3 != 0 or n3 == 0:
        raise BasisDimensionError(f"mean_shape length {n3} is not 3*V")
    v = n3 // 3
    if basis.mean_texture.shape != (n3,):
        raise BasisDimensionError("mean_texture length differs from 3*V")
    for name, cols in (("basis_id", DIM_ID), ("basis_exp", DIM_EXP),
                       ("basis_tex", DIM_TEX)):
        mat = getattr(basis, name)
        if mat.shape != (n3, cols):
            raise BasisDimensionError(
                f"{name} must be ({n3}, {cols}), got {mat.shape}")
    tex = basis.mean_texture
    if tex.min() < 0.0 or tex.max() > 1.0:
        raise BasisFormatError("mean_texture entries outside [0, 1]")
    tris = basis.triangles
    if tris.size and (tris.min() < 0 or tris.max() >= v):
        raise BasisDimensionError("triangle index out of range")
    for t, (a, b, c) in enumerate(tris):
        if a == b or b == c or a == c:
            raise BasisFormatError(f"triangle {t} has repeated vertices")


def synthesize_shape(basis: MorphableBasis, coeffs: ShapeCoeffs) -> np.ndarray:
    """Vertex positions for the given coefficients, as a flat (3V,) vector.

    Pure linear map: mean plus identity and expression basis columns
    weighted by the coefficients. No clamping.
    """
    return (basis.mean_shape
            + basis.basis_id @ coeffs.alpha_id
            + basis.basis_exp @ coeffs.beta_exp)


def synthesize_texture(basis: MorphableBasis, coeffs: TextureCoeffs,
                       clamp: bool = True) -> np.ndarray:
    """Per-vertex albedo for the given coefficients, as a flat (3V,) vector.

    The linear synthesis can leave the [0, 1] albedo range; the result is
    clamped by default because the shading model requires bounded albedo.
    Pass ``clamp=False`` to get the raw linear value.
    """
    tex = basis.mean_texture + basis.basis_tex @ coeffs.beta_te
    if clamp:
        tex = np.clip(tex, 0.0, 1.0)
    return tex


def save_basis(basis: MorphableBasis, path) -> None:
    """Write the binary basis container (see docs/formats.md)."""
    path = str(path)
    n3 = basis.mean_shape.shape[0]
    header = _HEADER.pack(_BASIS_MAGIC, _BASIS_VERSION, n3 // 3,
                          DIM_ID, DIM_EXP, DIM_TEX, basis.triangles.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (basis.mean_shape, basis.mean_texture, basis.basis_id,
                    basis.basis_exp, basis.basis_tex):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.triangles, dtype="<u4").tobytes())


def save_basis_json(basis: MorphableBasis, path) -> None:
    """Write the JSON sidecar form, practical only for tiny fixtures."""
    doc = {
        "v": basis.vertex_count,
        "mean_shape": basis.mean_shape.tolist(),
        "mean_texture": basis.mean_texture.tolist(),
        "basis_id": basis.basis_id.tolist(),
        "basis_exp": basis.basis_exp.tolist(),
        "basis_tex": basis.basis_tex.tolist(),
        "triangles": basis.triangles.tolist(),
    }
    with open(str(path), "w") as fh:
        json.dump(doc, fh)


def load_basis(path) -> MorphableBasis:
    """Load a basis from the binary container or its JSON sidecar form.

    Dispatches on the ``.json`` extension, otherwise expects the binary
    magic. Raises FileNotFoundError for a missing file, BasisFormatError
    for a malformed or truncated container, and BasisDimensionError when
    the stored fields are inconsistent.
    """
    path = str(path)
    if path.endswith(".json"):
        return _load_basis_json(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise BasisFormatError(f"{path}: truncated header")
    magic, version, v, n_id, n_exp, n_tex, n_tri = _HEADER.unpack_from(blob)
    if magic != _BASIS_MAGIC:
        raise BasisFormatError(f"{path}: bad magic {magic!r}")
    if version != _BASIS_VERSION:
        raise BasisFormatError(f"{path}: unsupported version {version}")
    if (n_id, n_exp, n_tex) != (DIM_ID, DIM_EXP, DIM_TEX):
        raise BasisDimensionError(
            f"{path}: basis columns {(n_id, n_exp, n_tex)} != "
            f"{(DIM_ID, DIM_EXP, DIM_TEX)}")
    n3 = 3 * v
    sizes = [n3, n3, n3 * n_id, n3 * n_exp, n3 * n_tex]
    need = _HEADER.size + 8 * sum(sizes) + 4 * 3 * n_tri
    if len(blob) != need:
        raise BasisFormatError(
            f"{path}: payload is {len(blob)} bytes, expected {need}")
    off = _HEADER.size
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(blob, "<f8", count=size, offset=off)
                      .astype(np.float64))
        off += 8 * size
    tris = (np.frombuffer(blob, "<u4", count=3 * n_tri, offset=off)
            .astype(np.int64).reshape(-1, 3))
    mean_shape, mean_texture, flat_id, flat_exp, flat_tex = arrays
    return MorphableBasis(mean_shape, mean_texture,
                          flat_id.reshape(n3, n_id),
                          flat_exp.reshape(n3, n_exp),
                          flat_tex.reshape(n3, n_tex), tris)


def _load_basis_json(path: str) -> MorphableBasis:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BasisFormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return MorphableBasis(
            np.asarray(doc["mean_shape"], dtype=np.float64),
            np.asarray(doc["mean_texture"], dtype=np.float64),
            np.asarray(doc["basis_id"], dtype=np.float64),
            np.asarray(doc["basis_exp"], dtype=np.float64),
            np.asarray(doc["basis_tex"], dtype=np.float64),
            np.asarray(doc["triangles"], dtype=np.int64),
        )
    except KeyError as exc:
        raise BasisFormatError(f"{path}: missing field {exc}") from exc


def make_synthetic_basis(v_count: int, seed: int) -> MorphableBasis:
    """Deterministic pseudorandom basis on a sphere-like closed mesh.

    Vertices are Fibonacci-spiral points on the unit sphere, radially
    perturbed; the triangulation is the convex hull of the unperturbed
    points with outward winding (for v_count == 3 the mesh degenerates to
    a single triangle, since no closed surface exists below 4 vertices).
    Identical (v_count, seed) give bitwise-identical bases.
    """
    if v_count < 3:
        raise ArgumentError(f"v_count must be >= 3, got {v_count}")
    rng = np.random.default_rng(seed)
    points = _fibonacci_sphere(v_count)
    if v_count == 3:
        tris = np.array([[0, 1, 2]], dtype=np.int64)
    else:
        hull = ConvexHull(points)
        tris = _orient_outward(points, hull.simplices.astype(np.int64))
    radii = 1.0 + 0.08 * rng.uniform(-1.0, 1.0, v_count)
    positions = points * radii[:, None]
    n3 = 3 * v_count
    mean_texture = rng.uniform(0.25, 0.85, n3)
    basis_id = rng.normal(0.0, 0.05, (n3, DIM_ID))
    basis_exp = rng.normal(0.0, 0.05, (n3, DIM_EXP))
    basis_tex = rng.normal(0.0, 0.02, (n3, DIM_TEX))
    return MorphableBasis(positions.reshape(-1), mean_texture,
                          basis_id, basis_exp, basis_tex, tris)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * i
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _orient_outward(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Flip hull triangles so their normals point away from the centroid."""
    center = points.mean(axis=0)
    out = tris.copy()
    for t in range(out.shape[0]):
        a, b, c = points[out[t]]
        normal = np.cross(b - a, c - a)
        if np.dot(normal, (a + b + c) / 3.0 - center) < 0.0:
            out[t, 1], out[t, 2] = out[t, 2], out[t, 1]
    order = np.lexsort((out[:, 2], out[:, 1], out[:, 0]))
    return out[order]
