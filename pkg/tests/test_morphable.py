import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlufit import (
    MorphableBasis,
    ShapeCoeffs,
    TextureCoeffs,
    load_basis,
    make_synthetic_basis,
    save_basis,
    synthesize_shape,
    synthesize_texture,
)
from occlufit.errors import (
    ArgumentError,
    BasisDimensionError,
    BasisFormatError,
    DimensionMismatchError,
)
from occlufit.morphable import save_basis_json, validate_basis

from oracles import dense_matvec


def random_coeffs(rng, scale=0.5):
    return (ShapeCoeffs(rng.normal(0, scale, 80), rng.normal(0, scale, 64)),
            TextureCoeffs(rng.normal(0, scale, 80)))


def test_zero_coeffs_give_means(basis8):
    shape = synthesize_shape(basis8, ShapeCoeffs.zeros())
    assert np.array_equal(shape, basis8.mean_shape)
    tex = synthesize_texture(basis8, TextureCoeffs.zeros())
    assert np.array_equal(tex, basis8.mean_texture)


def test_unit_vector_picks_basis_column(basis8):
    alpha = np.zeros(80)
    alpha[0] = 1.0
    shape = synthesize_shape(basis8, ShapeCoeffs(alpha, np.zeros(64)))
    expected = basis8.mean_shape + basis8.basis_id[:, 0]
    np.testing.assert_allclose(shape, expected, rtol=0, atol=0)


def test_shape_matches_dense_oracle(rng):
    basis = make_synthetic_basis(4, 3)
    coeffs, _ = random_coeffs(rng)
    got = synthesize_shape(basis, coeffs)
    want = (basis.mean_shape
            + dense_matvec(basis.basis_id, coeffs.alpha_id)
            + dense_matvec(basis.basis_exp, coeffs.beta_exp))
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_texture_matches_dense_oracle_preclamp(rng):
    basis = make_synthetic_basis(4, 3)
    _, coeffs = random_coeffs(rng)
    got = synthesize_texture(basis, coeffs, clamp=False)
    want = basis.mean_texture + dense_matvec(basis.basis_tex, coeffs.beta_te)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_texture_clamps_to_unit_interval(basis8):
    # pick coefficients that push the first entry above 1
    col = basis8.basis_tex[0]
    j = int(np.argmax(np.abs(col)))
    beta = np.zeros(80)
    beta[j] = (1.3 - basis8.mean_texture[0]) / col[j]
    tex = synthesize_texture(basis8, TextureCoeffs(beta))
    assert tex[0] == 1.0
    raw = synthesize_texture(basis8, TextureCoeffs(beta), clamp=False)
    assert raw[0] == pytest.approx(1.3, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    basis = make_synthetic_basis(6, 11)
    c1, t1 = random_coeffs(rng)
    c2, t2 = random_coeffs(rng)
    mixed = ShapeCoeffs(a * c1.alpha_id + b * c2.alpha_id,
                        a * c1.beta_exp + b * c2.beta_exp)
    lhs = synthesize_shape(basis, mixed)
    rhs = (a * synthesize_shape(basis, c1) + b * synthesize_shape(basis, c2)
           - (a + b - 1.0) * basis.mean_shape)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)
    tex_mixed = TextureCoeffs(a * t1.beta_te + b * t2.beta_te)
    lhs_t = synthesize_texture(basis, tex_mixed, clamp=False)
    rhs_t = (a * synthesize_texture(basis, t1, clamp=False)
             + b * synthesize_texture(basis, t2, clamp=False)
             - (a + b - 1.0) * basis.mean_texture)
    np.testing.assert_allclose(lhs_t, rhs_t, rtol=1e-10, atol=1e-10)


def test_coefficient_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        ShapeCoeffs(np.zeros(79), np.zeros(64))
    with pytest.raises(DimensionMismatchError):
        ShapeCoeffs(np.zeros(80), np.zeros(63))
    with pytest.raises(DimensionMismatchError):
        TextureCoeffs(np.zeros(81))
    with pytest.raises(ArgumentError):
        TextureCoeffs(np.full(80, np.nan))


def test_synthetic_basis_determinism_and_seed_sensitivity():
    a = make_synthetic_basis(8, 42)
    b = make_synthetic_basis(8, 42)
    c = make_synthetic_basis(8, 43)
    assert np.array_equal(a.mean_shape, b.mean_shape)
    assert np.array_equal(a.basis_id, b.basis_id)
    assert np.array_equal(a.triangles, b.triangles)
    assert not np.array_equal(a.mean_shape, c.mean_shape)


@pytest.mark.parametrize("v_count", [3, 4, 8, 16, 33])
def test_synthetic_basis_passes_invariants(v_count):
    basis = make_synthetic_basis(v_count, 5)
    validate_basis(basis)  # raises on violation
    assert basis.vertex_count == v_count
    if v_count >= 4:
        # closed surface: every vertex belongs to at least one triangle
        assert set(basis.triangles.reshape(-1)) == set(range(v_count))


def test_synthetic_basis_rejects_tiny_vertex_count():
    with pytest.raises(ArgumentError):
        make_synthetic_basis(2, 0)


def test_basis_binary_roundtrip(tmp_path, basis8):
    path = tmp_path / "fixture.basis"
    save_basis(basis8, path)
    loaded = load_basis(path)
    assert loaded.vertex_count == 8
    assert loaded.basis_id.shape == (24, 80)
    assert loaded.basis_exp.shape == (24, 64)
    assert loaded.basis_tex.shape == (24, 80)
    np.testing.assert_array_equal(loaded.mean_shape, basis8.mean_shape)
    np.testing.assert_array_equal(loaded.basis_exp, basis8.basis_exp)
    np.testing.assert_array_equal(loaded.triangles, basis8.triangles)


def test_basis_json_roundtrip(tmp_path):
    basis = make_synthetic_basis(4, 9)
    path = tmp_path / "fixture.json"
    save_basis_json(basis, path)
    loaded = load_basis(path)
    np.testing.assert_allclose(loaded.basis_tex, basis.basis_tex, rtol=1e-15)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_basis(tmp_path / "absent.basis")


def test_load_truncated_file(tmp_path, basis8):
    path = tmp_path / "broken.basis"
    save_basis(basis8, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(BasisFormatError):
        load_basis(path)


def test_load_bad_magic(tmp_path):
    path = tmp_path / "junk.basis"
    path.write_bytes(b"NOTABASIS" + b"\x00" * 64)
    with pytest.raises(BasisFormatError):
        load_basis(path)


def test_inconsistent_dimensions_rejected(basis8):
    with pytest.raises(BasisDimensionError):
        MorphableBasis(basis8.mean_shape, basis8.mean_texture,
                       basis8.basis_id[:-3], basis8.basis_exp,
                       basis8.basis_tex, basis8.triangles)


def test_texture_range_enforced(basis8):
    bad = np.array(basis8.mean_texture)
    bad[0] = 1.5
    with pytest.raises(BasisFormatError):
        MorphableBasis(basis8.mean_shape, bad, basis8.basis_id,
                       basis8.basis_exp, basis8.basis_tex, basis8.triangles)


def test_degenerate_triangle_rejected(basis8):
    tris = np.array(basis8.triangles)
    tris[0] = (1, 1, 2)
    with pytest.raises(BasisFormatError):
        MorphableBasis(basis8.mean_shape, basis8.mean_texture,
                       basis8.basis_id, basis8.basis_exp, basis8.basis_tex,
                       tris)
