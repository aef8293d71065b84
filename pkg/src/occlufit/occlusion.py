"""Mask algebra, contour extraction/fusion, and inpainting loss kernels.

The loss kernels operate on caller-supplied tensors: discriminator score
maps (values in (0, 1)) and activation stacks (lists of (Q, H, W) layer
arrays). No networks live here; a deterministic diffusion-based inpainter
stands in for the learned synthesizer so the pipeline runs end to end.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .constants import (
    LAMBDA_ADV_CONTOUR,
    LAMBDA_ADV_SYNTH,
    LAMBDA_FEATURE_MATCH,
    LAMBDA_MASKED_PIXEL,
    LAMBDA_STYLE,
    LUMA_B,
    LUMA_G,
    LUMA_R,
    SCORE_EPS,
)
from .errors import ArgumentError, DegenerateMaskError, DimensionMismatchError

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def check_mask(mask: np.ndarray) -> np.ndarray:
    """Validate a binary occlusion mask (1 = occluded, 0 = background)."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"mask must be 2-D, got shape {m.shape}")
    if not np.isin(m, (0.0, 1.0)).all():
        raise ArgumentError("mask values must be exactly 0 or 1")
    return m


def clamp_scores(scores: np.ndarray) -> np.ndarray:
    """Clamp discriminator outputs into [SCORE_EPS, 1 - SCORE_EPS]."""
    s = np.asarray(scores, dtype=np.float64)
    return np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS)


def check_activation_stack(stack) -> list[np.ndarray]:
    """Validate an ordered list of (Q, H, W) activation layers."""
    if len(stack) < 1:
        raise ArgumentError("activation stack must have at least one layer")
    out = []
    for i, layer in enumerate(stack):
        arr = np.asarray(layer, dtype=np.float64)
        if arr.ndim != 3 or arr.size == 0:
            raise DimensionMismatchError(
                f"layer {i} must be a non-empty (Q, H, W) array")
        out.append(arr)
    return out


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the occluded pixels: elementwise product with (1 - mask).

    The mask is binary so the arithmetic is exact; apply_mask(I, M) and
    apply_mask(I, 1 - M) partition I bitwise.
    """
    img = np.asarray(image, dtype=np.float64)
    m = check_mask(mask)
    if img.shape[:2] != m.shape:
        raise DimensionMismatchError(
            f"image {img.shape[:2]} and mask {m.shape} disagree")
    keep = 1.0 - m
    if img.ndim == 3:
        keep = keep[:, :, None]
    elif img.ndim != 2:
        raise DimensionMismatchError("image must be (H, W) or (H, W, C)")
    return img * keep


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (H, W, 3) image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatchError("image must be (H, W, 3)")
    return (LUMA_R * img[:, :, 0] + LUMA_G * img[:, :, 1]
            + LUMA_B * img[:, :, 2])


def compose_contour(c_true: np.ndarray, c_syn: np.ndarray,
                    mask: np.ndarray) -> np.ndarray:
    """Fuse contour maps: c_true where the mask is 0, c_syn where it is 1."""
    a = np.asarray(c_true, dtype=np.float64)
    b = np.asarray(c_syn, dtype=np.float64)
    m = check_mask(mask)
    if a.shape != m.shape or b.shape != m.shape:
        raise DimensionMismatchError(
            f"contour shapes {a.shape}/{b.shape} and mask {m.shape} disagree")
    return np.where(m == 1.0, b, a)


def extract_contours(gray: np.ndarray, low: float, high: float) -> np.ndarray:
    """Binary contour map of a grayscale image.

    Sobel gradient magnitude (edge-replicated borders), normalized to
    [0, 1], thinned by non-maximum suppression along the quantized
    gradient direction, then hysteresis thresholding: pixels >= high
    seed, pixels >= low survive when 8-connected to a seed. The NMS tie
    rule keeps a pixel when its magnitude strictly exceeds the neighbor
    ahead of it along the gradient and is >= the neighbor behind, so an
    ideal step edge yields a single-pixel contour on its bright side.
    """
    if not (0.0 <= low < high <= 1.0):
        raise ArgumentError(f"thresholds must satisfy 0 <= low < high <= 1, "
                            f"got ({low}, {high})")
    g = np.asarray(gray, dtype=np.float64)
    if g.ndim == 3 and g.shape[2] == 1:
        g = g[:, :, 0]
    if g.ndim != 2:
        raise DimensionMismatchError("gray must be (H, W) or (H, W, 1)")
    padded = np.pad(g, 1, mode="edge")
    gx = _correlate3(padded, _SOBEL_X)
    gy = _correlate3(padded, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    # below accumulation noise the image is flat; the Sobel response of a
    # genuine [0, 1] edge is many orders of magnitude above this
    if peak <= 1e-12:
        return np.zeros_like(g)
    mag = mag / peak
    thinned = _non_maximum_suppression(mag, gx, gy)
    strong = thinned >= high
    weak = thinned >= low
    if not strong.any():
        return np.zeros_like(g)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0]).astype(np.float64)


def _correlate3(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w = padded.shape[0] - 2, padded.shape[1] - 2
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            k = kernel[dy, dx]
            if k != 0.0:
                out += k * padded[dy:dy + h, dx:dx + w]
    return out


def _non_maximum_suppression(mag, gx, gy):
    """Keep local maxima along the gradient direction, quantized to the
    four axis/diagonal directions; ties break toward the positive
    gradient side."""
    h, w = mag.shape
    angle = np.arctan2(gy, gx)
    sector = np.floor_divide(np.mod(angle + np.pi / 8.0, np.pi),
                             np.pi / 4.0).astype(int) % 4
    steps = ((1, 0), (1, 1), (0, 1), (-1, 1))  # (dx, dy) per sector
    padded = np.pad(mag, 1, mode="constant")
    out = np.zeros_like(mag)
    for s, (dx, dy) in enumerate(steps):
        sel = (sector == s) & (mag > 0.0)
        if not sel.any():
            continue
        pos = (gx * dx + gy * dy) >= 0.0
        fdx = np.where(pos, dx, -dx)
        fdy = np.where(pos, dy, -dy)
        ys, xs = np.nonzero(sel)
        ahead = padded[ys + 1 + fdy[ys, xs], xs + 1 + fdx[ys, xs]]
        behind = padded[ys + 1 - fdy[ys, xs], xs + 1 - fdx[ys, xs]]
        vals = mag[ys, xs]
        keep = (vals > ahead) & (vals >= behind)
        out[ys[keep], xs[keep]] = vals[keep]
    return out


def adversarial_loss(real_scores: np.ndarray, fake_scores: np.ndarray,
                     mode: str = "discriminator") -> float:
    """Two-term log objective over discriminator score maps.

    ``discriminator`` mode returns mean(log real) + mean(log(1 - fake));
    ``generator`` mode negates the second term. Expectations average over
    all score-map pixels. Scores are clamped so the logs stay finite.
    """
    if mode not in ("discriminator", "generator"):
        raise ArgumentError(f"unknown mode {mode!r}")
    real = clamp_scores(real_scores)
    fake = clamp_scores(fake_scores)
    if real.size == 0 or fake.size == 0:
        raise ArgumentError("score maps must be non-empty")
    term_real = float(np.mean(np.log(real)))
    term_fake = float(np.mean(np.log(1.0 - fake)))
    if mode == "generator":
        return term_real - term_fake
    return term_real + term_fake


def feature_matching_loss(real, fake) -> float:
    """Sum over layers of the L1 activation distance, each layer divided
    by its element count."""
    a_stack = check_activation_stack(real)
    b_stack = check_activation_stack(fake)
    if len(a_stack) != len(b_stack):
        raise DimensionMismatchError("stacks have different depths")
    total = 0.0
    for i, (a, b) in enumerate(zip(a_stack, b_stack)):
        if a.shape != b.shape:
            raise DimensionMismatchError(
                f"layer {i} shapes {a.shape} and {b.shape} disagree")
        total += float(np.abs(a - b).sum()) / a.size
    return total


def masked_pixel_loss(predicted: np.ndarray, truth: np.ndarray,
                      mask: np.ndarray) -> float:
    """Whole-image L1 distance divided by the occluded-pixel count, so a
    fixed-magnitude residual confined to the mask costs the same at any
    mask size."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    m = check_mask(mask)
    if p.shape != t.shape:
        raise DimensionMismatchError(
            f"predicted {p.shape} and truth {t.shape} disagree")
    if p.shape[:2] != m.shape:
        raise DimensionMismatchError(
            f"image {p.shape[:2]} and mask {m.shape} disagree")
    s_m = float(m.sum())
    if s_m == 0.0:
        raise DegenerateMaskError("mask has no occluded pixels")
    return float(np.abs(p - t).sum()) / s_m


def gram_matrix(layer: np.ndarray) -> np.ndarray:
    """Q x Q matrix of channel inner products over all spatial positions."""
    arr = np.asarray(layer, dtype=np.float64)
    if arr.ndim != 3 or arr.size == 0:
        raise DimensionMismatchError("layer must be a non-empty (Q, H, W) "
                                     "array")
    flat = arr.reshape(arr.shape[0], -1)
    return flat @ flat.T


def style_loss(predicted_feats, truth_feats) -> float:
    """Gram-matrix style distance, with the double normalization applied
    literally: per layer, the Gram difference is divided by Q*H*W, its
    entrywise L1 norm is taken, and the result is scaled by 1/Q^2."""
    a_stack = check_activation_stack(predicted_feats)
    b_stack = check_activation_stack(truth_feats)
    if len(a_stack) != len(b_stack):
        raise DimensionMismatchError("stacks have different depths")
    total = 0.0
    for i, (a, b) in enumerate(zip(a_stack, b_stack)):
        if a.shape != b.shape:
            raise DimensionMismatchError(
                f"layer {i} shapes {a.shape} and {b.shape} disagree")
        q, hh, ww = a.shape
        diff = (gram_matrix(a) - gram_matrix(b)) / (q * hh * ww)
        total += float(np.abs(diff).sum()) / (q * q)
    return total


def contour_objective(l1: float, l2: float,
                      lambda1: float = LAMBDA_ADV_CONTOUR,
                      lambda2: float = LAMBDA_FEATURE_MATCH) -> float:
    """Weighted contour-generator objective: lambda1*l1 + lambda2*l2."""
    if not (math.isfinite(l1) and math.isfinite(l2)):
        raise ArgumentError("loss terms must be finite")
    return lambda1 * l1 + lambda2 * l2


def synthesis_objective(l3: float, l4: float, l5: float,
                        lambda3: float = LAMBDA_ADV_SYNTH,
                        lambda4: float = LAMBDA_MASKED_PIXEL,
                        lambda5: float = LAMBDA_STYLE) -> float:
    """Weighted synthesis-generator objective:
    lambda3*l3 + lambda4*l4 + lambda5*l5."""
    if not all(math.isfinite(v) for v in (l3, l4, l5)):
        raise ArgumentError("loss terms must be finite")
    return lambda3 * l3 + lambda4 * l4 + lambda5 * l5


def baseline_inpaint(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Deterministic diffusion fill of the occluded region.

    Round-based: every unfilled masked pixel with at least one valid
    4-neighbor takes the mean of those neighbors, all fills in a round
    computed from the previous round's state (so within-round order is
    irrelevant). Neighbor means use compensated summation, making the
    result independent of neighbor enumeration order. Unmasked pixels
    are returned bitwise untouched.
    """
    img = np.asarray(image, dtype=np.float64)
    m = check_mask(mask)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatchError("image must be (H, W, 3)")
    if img.shape[:2] != m.shape:
        raise DimensionMismatchError(
            f"image {img.shape[:2]} and mask {m.shape} disagree")
    if m.min() == 1.0:
        raise DegenerateMaskError("mask occludes every pixel; nothing to "
                                  "diffuse from")
    h, w = m.shape
    out = img.copy()
    filled = m == 0.0
    while not filled.all():
        snapshot = out.copy()
        valid = filled.copy()
        fills = []
        for y, x in zip(*np.nonzero(~filled)):
            vals = [snapshot[ny, nx] for ny, nx in
                    ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1))
                    if 0 <= ny < h and 0 <= nx < w and valid[ny, nx]]
            if vals:
                fills.append((y, x, vals))
        for y, x, vals in fills:
            for ch in range(3):
                out[y, x, ch] = math.fsum(v[ch] for v in vals) / len(vals)
            filled[y, x] = True
    return out
