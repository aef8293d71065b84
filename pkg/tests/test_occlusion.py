import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlufit import (
    adversarial_loss,
    apply_mask,
    baseline_inpaint,
    compose_contour,
    contour_objective,
    extract_contours,
    feature_matching_loss,
    gram_matrix,
    masked_pixel_loss,
    style_loss,
    synthesis_objective,
    to_grayscale,
)
from occlufit.errors import (
    ArgumentError,
    DegenerateMaskError,
    DimensionMismatchError,
)

from oracles import (
    adversarial_reference,
    feature_matching_reference,
    gram_reference,
    masked_pixel_reference,
    style_reference,
)

seeds = st.integers(0, 2**31 - 1)


def random_mask(rng, shape):
    return (rng.random(shape) < 0.4).astype(np.float64)


# ---------------------------------------------------------------- masks

def test_apply_mask_identity_and_full():
    rng = np.random.default_rng(0)
    img = rng.random((5, 7, 3))
    assert np.array_equal(apply_mask(img, np.zeros((5, 7))), img)
    assert np.array_equal(apply_mask(img, np.ones((5, 7))),
                          np.zeros((5, 7, 3)))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_mask_partition_identity(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((6, 6, 3))
    mask = random_mask(rng, (6, 6))
    recomposed = apply_mask(img, mask) + apply_mask(img, 1.0 - mask)
    assert np.array_equal(recomposed, img)


def test_apply_mask_rejects_non_binary():
    with pytest.raises(ArgumentError):
        apply_mask(np.zeros((2, 2, 3)), np.full((2, 2), 0.5))


def test_apply_mask_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        apply_mask(np.zeros((2, 2, 3)), np.zeros((3, 3)))


def test_grayscale_constants():
    white = np.ones((1, 1, 3))
    assert to_grayscale(white)[0, 0] == pytest.approx(1.0, abs=1e-15)
    red = np.zeros((1, 1, 3))
    red[..., 0] = 1.0
    assert to_grayscale(red)[0, 0] == 0.299
    gray = np.full((2, 2, 3), 0.37)
    np.testing.assert_allclose(to_grayscale(gray), 0.37, rtol=1e-12)


# ------------------------------------------------------------- contours

def test_compose_contour_selection():
    rng = np.random.default_rng(3)
    c_true = rng.random((4, 4))
    c_syn = rng.random((4, 4))
    assert np.array_equal(compose_contour(c_true, c_syn, np.zeros((4, 4))),
                          c_true)
    assert np.array_equal(compose_contour(c_true, c_syn, np.ones((4, 4))),
                          c_syn)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_compose_contour_matches_scalar_select(seed):
    rng = np.random.default_rng(seed)
    c_true = rng.random((5, 5))
    c_syn = rng.random((5, 5))
    mask = random_mask(rng, (5, 5))
    got = compose_contour(c_true, c_syn, mask)
    for y in range(5):
        for x in range(5):
            want = c_syn[y, x] if mask[y, x] == 1.0 else c_true[y, x]
            assert got[y, x] == want


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_compose_contour_idempotent(seed):
    rng = np.random.default_rng(seed)
    c_true = rng.random((5, 5))
    c_syn = rng.random((5, 5))
    mask = random_mask(rng, (5, 5))
    once = compose_contour(c_true, c_syn, mask)
    twice = compose_contour(once, c_syn, mask)
    assert np.array_equal(once, twice)


def test_extract_contours_constant_image():
    assert np.array_equal(extract_contours(np.full((8, 8), 0.6), 0.1, 0.5),
                          np.zeros((8, 8)))


def test_extract_contours_step_edge():
    img = np.zeros((8, 8))
    img[:, 4:] = 1.0  # step between columns 3 and 4
    contour = extract_contours(img, 0.2, 0.6)
    # With replicated borders the Sobel x response is 4 at columns 3 and 4
    # and 0 elsewhere; the NMS tie rule keeps the bright side only.
    expected = np.zeros((8, 8))
    expected[:, 4] = 1.0
    np.testing.assert_array_equal(contour, expected)


def test_extract_contours_deterministic():
    rng = np.random.default_rng(8)
    img = rng.random((12, 12))
    a = extract_contours(img, 0.1, 0.3)
    b = extract_contours(img, 0.1, 0.3)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_extract_contours_threshold_validation():
    with pytest.raises(ArgumentError):
        extract_contours(np.zeros((4, 4)), 0.5, 0.2)
    with pytest.raises(ArgumentError):
        extract_contours(np.zeros((4, 4)), 0.1, 1.5)


# ----------------------------------------------------------- loss kernels

def test_adversarial_loss_half_scores():
    real = np.full((3, 3), 0.5)
    fake = np.full((2, 5), 0.5)
    got = adversarial_loss(real, fake)
    assert got == pytest.approx(-2.0 * math.log(2.0), rel=1e-15)


def test_adversarial_loss_perfect_discriminator():
    real = np.ones((4, 4))
    fake = np.zeros((4, 4))
    assert adversarial_loss(real, fake) == pytest.approx(0.0, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(seeds, st.sampled_from(["discriminator", "generator"]))
def test_adversarial_loss_matches_oracle(seed, mode):
    rng = np.random.default_rng(seed)
    real = rng.uniform(0, 1, (4, 6))
    fake = rng.uniform(0, 1, (3, 5))
    got = adversarial_loss(real, fake, mode=mode)
    want = adversarial_reference(real, fake, mode=mode)
    assert got == pytest.approx(want, rel=1e-12)


def test_adversarial_loss_mode_flag_signs():
    rng = np.random.default_rng(4)
    real = rng.uniform(0, 1, (4, 4))
    fake = rng.uniform(0, 1, (4, 4))
    disc = adversarial_loss(real, fake, mode="discriminator")
    gen = adversarial_loss(real, fake, mode="generator")
    term_real = float(np.mean(np.log(np.clip(real, 1e-7, 1 - 1e-7))))
    assert disc + gen == pytest.approx(2.0 * term_real, rel=1e-12)


def test_adversarial_loss_empty_rejected():
    with pytest.raises(ArgumentError):
        adversarial_loss(np.zeros((0, 2)), np.full((2, 2), 0.5))


def test_feature_matching_identical_stacks():
    stack = [np.ones((2, 3, 3)), np.zeros((1, 4, 4))]
    assert feature_matching_loss(stack, stack) == 0.0


def test_feature_matching_constant_offset():
    rng = np.random.default_rng(5)
    real = [rng.random((2, 3, 4)), rng.random((3, 2, 2)), rng.random((1, 5, 5))]
    fake = [layer + 1.0 for layer in real]
    assert feature_matching_loss(real, fake) == pytest.approx(3.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_feature_matching_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    shapes = [(2, 4, 3), (3, 2, 5)]
    real = [rng.normal(size=s) for s in shapes]
    fake = [rng.normal(size=s) for s in shapes]
    got = feature_matching_loss(real, fake)
    want = feature_matching_reference(real, fake)
    assert got == pytest.approx(want, rel=1e-12)


def test_feature_matching_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        feature_matching_loss([np.zeros((2, 2, 2))], [np.zeros((2, 2, 3))])


def test_masked_pixel_loss_zero_residual():
    img = np.random.default_rng(0).random((4, 4, 3))
    mask = np.zeros((4, 4))
    mask[1, 1] = 1.0
    assert masked_pixel_loss(img, img, mask) == 0.0


@pytest.mark.parametrize("n_masked", [1, 4, 9])
def test_masked_pixel_loss_constant_residual_is_3c(n_masked):
    c = 0.125
    truth = np.zeros((6, 6, 3))
    mask = np.zeros((6, 6))
    mask.reshape(-1)[:n_masked] = 1.0
    predicted = truth.copy()
    predicted[mask == 1.0] = c
    assert masked_pixel_loss(predicted, truth, mask) == 3.0 * c


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_masked_pixel_loss_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    predicted = rng.random((5, 4, 3))
    truth = rng.random((5, 4, 3))
    mask = random_mask(rng, (5, 4))
    if mask.sum() == 0:
        mask[0, 0] = 1.0
    got = masked_pixel_loss(predicted, truth, mask)
    want = masked_pixel_reference(predicted, truth, mask)
    assert got == pytest.approx(want, rel=1e-12)


def test_masked_pixel_loss_degenerate_mask():
    with pytest.raises(DegenerateMaskError):
        masked_pixel_loss(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)),
                          np.zeros((2, 2)))


def test_gram_matrix_all_ones_single_channel():
    layer = np.ones((1, 2, 2))
    np.testing.assert_array_equal(gram_matrix(layer), [[4.0]])


def test_gram_matrix_orthogonal_channels():
    layer = np.zeros((2, 2, 2))
    layer[0, 0, 0] = 1.0
    layer[1, 1, 1] = 1.0
    g = gram_matrix(layer)
    assert g[0, 1] == 0.0 and g[1, 0] == 0.0


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_gram_matrix_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    layer = rng.normal(size=(4, 3, 5))
    g = gram_matrix(layer)
    assert np.abs(g - g.T).max() <= 1e-12
    assert np.linalg.eigvalsh(g).min() >= -1e-10
    np.testing.assert_allclose(g, gram_reference(layer), rtol=1e-12,
                               atol=1e-12)


def test_style_loss_identical_stacks():
    stack = [np.random.default_rng(1).random((2, 3, 3))]
    assert style_loss(stack, stack) == 0.0


def test_style_loss_spatial_permutation_invariant():
    rng = np.random.default_rng(2)
    layer = rng.random((3, 4, 2))
    flat = layer.reshape(3, -1)
    perm = rng.permutation(flat.shape[1])
    permuted = flat[:, perm].reshape(3, 4, 2)
    assert style_loss([layer], [permuted]) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_style_loss_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    shapes = [(2, 3, 4), (3, 2, 2)]
    a = [rng.normal(size=s) for s in shapes]
    b = [rng.normal(size=s) for s in shapes]
    got = style_loss(a, b)
    want = style_reference(a, b)
    assert got == pytest.approx(want, rel=1e-12)
    assert got >= 0.0


def test_objective_weights():
    assert contour_objective(0.0, 0.0) == 0.0
    assert contour_objective(1.0, 1.0) == 12.5
    assert contour_objective(2.0, 0.0) == 2.0
    assert synthesis_objective(0.0, 0.0, 0.0) == 0.0
    assert synthesis_objective(1.0, 1.0, 1.0) == pytest.approx(251.1,
                                                               rel=1e-15)
    assert synthesis_objective(0.0, 2.0, 0.0) == 2.0


def test_objective_weight_overrides():
    assert contour_objective(1.0, 1.0, lambda1=2.0, lambda2=3.0) == 5.0
    assert synthesis_objective(1.0, 1.0, 1.0, lambda3=1.0, lambda4=1.0,
                               lambda5=1.0) == 3.0


# ------------------------------------------------------------- inpainting

def test_inpaint_noop_on_zero_mask():
    rng = np.random.default_rng(6)
    img = rng.random((4, 4, 3))
    out = baseline_inpaint(img, np.zeros((4, 4)))
    assert np.array_equal(out, img)


def test_inpaint_center_average():
    img = np.zeros((3, 3, 3))
    img[0, 1] = 0.2
    img[1, 0] = 0.4
    img[1, 2] = 0.6
    img[2, 1] = 0.8
    mask = np.zeros((3, 3))
    mask[1, 1] = 1.0
    out = baseline_inpaint(img, mask)
    assert out[1, 1, 0] == 0.5
    assert out[1, 1, 1] == 0.5
    assert out[1, 1, 2] == 0.5


def test_inpaint_uniform_neighbors():
    img = np.full((3, 3, 3), 0.37)
    mask = np.zeros((3, 3))
    mask[1, 1] = 1.0
    out = baseline_inpaint(img, mask)
    assert out[1, 1, 0] == 0.37


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_inpaint_preserves_unmasked_bitwise(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((7, 6, 3))
    mask = random_mask(rng, (7, 6))
    if mask.min() == 1.0:
        mask[0, 0] = 0.0
    out = baseline_inpaint(img, mask)
    keep = mask == 0.0
    assert np.array_equal(out[keep], img[keep])
    assert np.isfinite(out).all()


def test_inpaint_fills_large_hole():
    img = np.zeros((8, 8, 3))
    img[:, :, 0] = 0.75
    mask = np.zeros((8, 8))
    mask[2:6, 2:6] = 1.0
    out = baseline_inpaint(img, mask)
    np.testing.assert_allclose(out[:, :, 0], 0.75, rtol=1e-12)


def test_inpaint_all_ones_mask_rejected():
    with pytest.raises(DegenerateMaskError):
        baseline_inpaint(np.zeros((3, 3, 3)), np.ones((3, 3)))
