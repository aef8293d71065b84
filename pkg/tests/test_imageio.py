import math

import numpy as np
import pytest
from PIL import Image

from occlufit import Mesh
from occlufit.errors import CorruptImageError, UnsupportedImageError
from occlufit.imageio import (
    export_obj,
    export_render,
    load_depth,
    load_image,
    load_mask,
    save_depth,
    save_pgm,
    save_png,
)
from occlufit.render import RenderOutput


def tetra_mesh():
    pts = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0],
                    [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]) / math.sqrt(3.0)
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    albedo = np.linspace(0.0, 1.0, 12)
    return Mesh(pts.reshape(-1), albedo, pts, tris)


def test_png_roundtrip_fullscale(tmp_path):
    img = np.zeros((4, 5, 3))
    img[0, 0] = 1.0
    img[1, 2] = [0.0, 1.0, 0.5]
    path = tmp_path / "img.png"
    save_png(path, img)
    back = load_image(path)
    assert back[0, 0, 0] == 1.0  # 8-bit 255 scales back to exactly 1.0
    assert back[1, 2, 1] == 1.0
    np.testing.assert_allclose(back, img, atol=1 / 255.0 / 2 + 1e-12)


def test_grayscale_png_replicates_channels(tmp_path):
    path = tmp_path / "gray.png"
    save_png(path, np.full((3, 3), 0.5))
    back = load_image(path)
    assert back.shape == (3, 3, 3)
    assert np.array_equal(back[..., 0], back[..., 2])


def test_pgm_mask_binarization(tmp_path):
    path = tmp_path / "mask.pgm"
    with open(path, "wb") as fh:
        fh.write(b"P5\n4 2\n255\n")
        fh.write(bytes([0, 7, 255, 0, 1, 0, 0, 128]))
    mask = load_mask(path)
    np.testing.assert_array_equal(
        mask, [[0, 1, 1, 0], [1, 0, 0, 1]])


def test_png_mask_any_nonzero(tmp_path):
    path = tmp_path / "mask.png"
    arr = np.zeros((2, 2, 3), dtype=np.uint8)
    arr[0, 1] = (9, 0, 0)
    Image.fromarray(arr).save(path)
    mask = load_mask(path)
    np.testing.assert_array_equal(mask, [[0, 1], [0, 0]])


def test_save_pgm_bytes_are_stable(tmp_path):
    arr = np.random.default_rng(0).random((5, 4))
    p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
    save_pgm(p1, arr)
    save_pgm(p2, arr)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes().startswith(b"P5\n4 5\n255\n")


def test_unsupported_extension(tmp_path):
    path = tmp_path / "image.bmp"
    path.write_bytes(b"BM junk")
    with pytest.raises(UnsupportedImageError):
        load_image(path)


def test_corrupt_file(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"\x89PNG\r\n\x1a\nthis is not a real png")
    with pytest.raises(CorruptImageError):
        load_image(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")


def test_depth_dump_roundtrip(tmp_path):
    depth = np.full((3, 4), np.inf)
    depth[1, 2] = 7.25
    path = tmp_path / "depth.bin"
    save_depth(path, depth)
    back = load_depth(path)
    assert back[1, 2] == 7.25
    assert np.isinf(back[0, 0])
    assert back.shape == (3, 4)


def test_export_render_writes_requested(tmp_path):
    out = RenderOutput(np.zeros((2, 2, 3)), np.zeros((2, 2)),
                       np.full((2, 2), np.inf))
    export_render(out, image_path=tmp_path / "i.png",
                  coverage_path=tmp_path / "c.pgm",
                  depth_path=tmp_path / "d.bin")
    assert (tmp_path / "i.png").exists()
    assert (tmp_path / "c.pgm").exists()
    assert (tmp_path / "d.bin").exists()


def test_obj_tetrahedron_record_counts(tmp_path):
    path = tmp_path / "tet.obj"
    export_obj(tetra_mesh(), path)
    lines = path.read_text().splitlines()
    assert sum(1 for ln in lines if ln.startswith("v ")) == 4
    assert sum(1 for ln in lines if ln.startswith("vn ")) == 4
    assert sum(1 for ln in lines if ln.startswith("f ")) == 4


def test_obj_byte_determinism(tmp_path):
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    export_obj(tetra_mesh(), p1)
    export_obj(tetra_mesh(), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert b"\r" not in p1.read_bytes()


def test_obj_positions_roundtrip_at_format_precision(tmp_path):
    mesh = tetra_mesh()
    path = tmp_path / "tet.obj"
    export_obj(mesh, path)
    verts = []
    colors = []
    faces = []
    for line in path.read_text().splitlines():
        parts = line.split()
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
            colors.append([float(x) for x in parts[4:7]])
        elif parts[0] == "f":
            faces.append([int(tok.split("//")[0]) - 1 for tok in parts[1:]])
    np.testing.assert_allclose(np.array(verts).reshape(-1), mesh.positions,
                               atol=1e-6)
    np.testing.assert_allclose(np.array(colors).reshape(-1), mesh.albedo,
                               atol=1e-6)
    np.testing.assert_array_equal(np.array(faces), mesh.triangles)
