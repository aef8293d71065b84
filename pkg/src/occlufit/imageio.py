"""Raster and mesh file IO.

PNG via Pillow, PGM written by hand so the bytes are stable, a raw
little-endian float32 depth dump, and Wavefront OBJ export with vertex
colors. All writers are byte-deterministic for identical input.
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError, UnsupportedImageError
from .render import Mesh, RenderOutput

_SUPPORTED = {".png", ".pgm", ".ppm"}
_DEPTH_MAGIC = b"DPF1"


def load_image(path) -> np.ndarray:
    """Load a PNG/PGM/PPM file as an (H, W, 3) float array in [0, 1].

    Grayscale inputs are replicated across the three channels. Raises
    UnsupportedImageError for other extensions and CorruptImageError when
    the file cannot be decoded.
    """
    arr = _load_raw(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def load_mask(path) -> np.ndarray:
    """Load an occlusion mask: any nonzero sample becomes 1."""
    arr = _load_raw(path)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return (arr > 0.0).astype(np.float64)


def _load_raw(path) -> np.ndarray:
    path = str(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SUPPORTED:
        raise UnsupportedImageError(f"{path}: unsupported extension {ext!r} "
                                    f"(expected one of {sorted(_SUPPORTED)})")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB" if len(img.getbands()) >= 3 else "L")
            data = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"{path}: cannot decode ({exc})") from exc
    return data / 255.0


def save_png(path, array: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 3) float array in [0, 1] as 8-bit PNG."""
    arr = np.asarray(array, dtype=np.float64)
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized).save(str(path), format="PNG")


def save_pgm(path, array: np.ndarray) -> None:
    """Write an (H, W) float array in [0, 1] as binary PGM (P5, maxval
    255)."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2:
        raise UnsupportedImageError("PGM output requires a 2-D array")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(str(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())


def save_depth(path, depth: np.ndarray) -> None:
    """Write a depth map as the raw dump documented in docs/formats.md:
    magic 'DPF1', uint32 height and width, then row-major little-endian
    float32 samples (+inf preserved for uncovered pixels)."""
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise UnsupportedImageError("depth dump requires a 2-D array")
    h, w = arr.shape
    with open(str(path), "wb") as fh:
        fh.write(_DEPTH_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(arr.astype("<f4").tobytes())


def load_depth(path) -> np.ndarray:
    """Read back a depth dump (float32 precision)."""
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[:4] != _DEPTH_MAGIC or len(blob) < 12:
        raise CorruptImageError(f"{path}: not a depth dump")
    h, w = struct.unpack_from("<II", blob, 4)
    if len(blob) != 12 + 4 * h * w:
        raise CorruptImageError(f"{path}: truncated depth dump")
    return np.frombuffer(blob, "<f4", offset=12).reshape(h, w).astype(
        np.float64)


def export_render(output: RenderOutput, image_path=None, coverage_path=None,
                  depth_path=None) -> None:
    """Write the requested pieces of a render: PNG image, PGM coverage,
    raw depth dump."""
    if image_path is not None:
        save_png(image_path, output.image)
    if coverage_path is not None:
        save_pgm(coverage_path, output.coverage)
    if depth_path is not None:
        save_depth(depth_path, output.depth)


def export_obj(mesh: Mesh, path) -> None:
    """Write a mesh as Wavefront OBJ.

    Vertex colors ride on extended 'v x y z r g b' records, normals as
    'vn', faces as 'f i//i j//j k//k' (1-based). Fixed 6-decimal
    formatting and LF line endings keep the output byte-stable.
    """
    pos = mesh.positions.reshape(-1, 3)
    col = mesh.albedo.reshape(-1, 3)
    lines = []
    for p, c in zip(pos, col):
        lines.append(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f} "
                     f"{c[0]:.6f} {c[1]:.6f} {c[2]:.6f}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.6f} {n[1]:.6f} {n[2]:.6f}")
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    with open(str(path), "wb") as fh:
        fh.write("\n".join(lines).encode("ascii") + b"\n")
