"""Analysis-by-synthesis parameter recovery.

The unknown vector (identity, expression, texture, lighting, pose) is
optimized directly with momentum gradient descent on the combined
per-pixel and embedding-cosine objective, using central-difference
gradients. The scale factor is optimized in log space so it stays
positive; the camera-distance offset t_z is carried on the parameter
vector but is not one of the 239 free coordinates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import CameraIntrinsics, Pose, check_gamma
from .constants import (
    DIM_EXP,
    DIM_ID,
    DIM_SH,
    DIM_TEX,
    LAMBDA_FEATURE,
    LAMBDA_PER_PIXEL,
    PARAM_DIM,
)
from .errors import (
    ArgumentError,
    DegenerateEmbeddingError,
    DegenerateRenderError,
    DimensionMismatchError,
    DivergenceError,
    EvaluationError,
)
from .morphable import MorphableBasis, ShapeCoeffs, TextureCoeffs
from .render import RenderOutput, render_params

# Free-vector layout: [alpha_id | beta_exp | beta_te | gamma | pose],
# pose = (pitch, yaw, roll, log k, t_x, t_y).
_ID_END = DIM_ID
_EXP_END = _ID_END + DIM_EXP
_TEX_END = _EXP_END + DIM_TEX
_SH_END = _TEX_END + DIM_SH

BLOCK_SLICES = {
    "shape": slice(0, _EXP_END),
    "texture": slice(_EXP_END, _TEX_END),
    "lighting": slice(_TEX_END, _SH_END),
    "pose": slice(_SH_END, PARAM_DIM),
}


def _block_of(index: int) -> str:
    for name, sl in BLOCK_SLICES.items():
        if sl.start <= index < sl.stop:
            return name
    raise IndexError(index)


@dataclass(frozen=True)
class ParamVector:
    """The full unknown vector: 239 free coordinates plus fixed t_z."""

    alpha_id: np.ndarray
    beta_exp: np.ndarray
    beta_te: np.ndarray
    gamma: np.ndarray
    pitch: float = 0.0
    yaw: float = 0.0
    roll: float = 0.0
    scale_k: float = 1.0
    t_x: float = 0.0
    t_y: float = 0.0
    t_z: float = 0.0

    def __post_init__(self):
        shape = ShapeCoeffs(self.alpha_id, self.beta_exp)
        object.__setattr__(self, "alpha_id", shape.alpha_id)
        object.__setattr__(self, "beta_exp", shape.beta_exp)
        object.__setattr__(self, "beta_te",
                           TextureCoeffs(self.beta_te).beta_te)
        object.__setattr__(self, "gamma", check_gamma(self.gamma))
        scalars = (self.pitch, self.yaw, self.roll, self.scale_k,
                   self.t_x, self.t_y, self.t_z)
        if not all(math.isfinite(s) for s in scalars):
            raise ArgumentError("pose scalars must be finite")
        if self.scale_k <= 0.0:
            raise ArgumentError("scale_k must be positive")

    @classmethod
    def zeros(cls, camera_distance: float) -> "ParamVector":
        """All 239 free coordinates zero (so scale_k = 1) at the given
        camera distance."""
        return cls(np.zeros(DIM_ID), np.zeros(DIM_EXP), np.zeros(DIM_TEX),
                   np.zeros(DIM_SH), t_z=camera_distance)

    def to_free(self) -> np.ndarray:
        """Flatten to the (239,) free vector, scale as log k."""
        pose = np.array([self.pitch, self.yaw, self.roll,
                         math.log(self.scale_k), self.t_x, self.t_y])
        return np.concatenate([self.alpha_id, self.beta_exp, self.beta_te,
                               self.gamma, pose])

    @classmethod
    def from_free(cls, vec: np.ndarray, t_z: float) -> "ParamVector":
        v = np.asarray(vec, dtype=np.float64).reshape(-1)
        if v.shape != (PARAM_DIM,):
            raise DimensionMismatchError(
                f"free vector must have {PARAM_DIM} entries, got {v.shape}")
        pose = v[_SH_END:]
        return cls(v[:_ID_END], v[_ID_END:_EXP_END], v[_EXP_END:_TEX_END],
                   v[_TEX_END:_SH_END],
                   pitch=float(pose[0]), yaw=float(pose[1]),
                   roll=float(pose[2]), scale_k=math.exp(float(pose[3])),
                   t_x=float(pose[4]), t_y=float(pose[5]), t_z=t_z)

    def shape_coeffs(self) -> ShapeCoeffs:
        return ShapeCoeffs(self.alpha_id, self.beta_exp)

    def texture_coeffs(self) -> TextureCoeffs:
        return TextureCoeffs(self.beta_te)

    def pose(self) -> Pose:
        return Pose(self.pitch, self.yaw, self.roll, self.scale_k,
                    np.array([self.t_x, self.t_y, self.t_z]))

    def coeff_norm_sq(self) -> float:
        """Squared norm of the shape+texture coefficient blocks, the
        quantity penalized by the optional regularizer."""
        return float(self.alpha_id @ self.alpha_id
                     + self.beta_exp @ self.beta_exp
                     + self.beta_te @ self.beta_te)


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings. The lambda6/lambda7 defaults are the paper-
    default stage-2 weights; reg_weight is an extension beyond them and
    can be zeroed."""

    max_iters: int = 400
    step_size: float = 0.05
    fd_epsilon: float = 1e-4
    lambda6: float = LAMBDA_PER_PIXEL
    lambda7: float = LAMBDA_FEATURE
    reg_weight: float = 1e-4
    convergence_tol: float = 1e-7
    momentum: float = 0.9
    step_scale_pose: float = 1.0
    step_scale_lighting: float = 1.0
    step_scale_shape: float = 0.1
    step_scale_texture: float = 0.1
    backtracking: bool = False
    max_backtracks: int = 30
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.max_iters < 0:
            raise ArgumentError("max_iters must be >= 0")
        positives = {
            "step_size": self.step_size,
            "fd_epsilon": self.fd_epsilon,
            "divergence_factor": self.divergence_factor,
        }
        for name, value in positives.items():
            if not (math.isfinite(value) and value > 0.0):
                raise ArgumentError(f"{name} must be positive")
        for name in ("lambda6", "lambda7", "reg_weight", "convergence_tol",
                     "momentum", "step_scale_pose", "step_scale_lighting",
                     "step_scale_shape", "step_scale_texture"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ArgumentError(f"{name} must be non-negative")

    def step_scales(self) -> np.ndarray:
        """Per-coordinate step multipliers from the per-block settings."""
        s = np.empty(PARAM_DIM)
        s[BLOCK_SLICES["shape"]] = self.step_scale_shape
        s[BLOCK_SLICES["texture"]] = self.step_scale_texture
        s[BLOCK_SLICES["lighting"]] = self.step_scale_lighting
        s[BLOCK_SLICES["pose"]] = self.step_scale_pose
        return s


@dataclass(frozen=True)
class FitReport:
    """Per-run record: loss trace, final term breakdown, and termination
    reason ('converged', 'iteration budget', or 'stalled')."""

    iterations: int
    loss_trace: list[float]
    term_breakdown: dict[str, float]
    termination: str
    wall_ms: float

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "loss_trace": self.loss_trace,
            "term_breakdown": self.term_breakdown,
            "termination": self.termination,
            "wall_ms": self.wall_ms,
        }


@dataclass(frozen=True)
class DownsampleEmbedder:
    """Reference image embedder: block-mean downsample to grid x grid per
    channel, flattened, with a trailing constant bias component.

    Deterministic; stands in for a learned feature extractor behind the
    same interface. The bias keeps the embedding norm nonzero for every
    image (including all-black renders), so the cosine feature loss is
    defined and smooth along the whole fitting trajectory.
    """

    grid: int = 8

    @property
    def dim(self) -> int:
        return 3 * self.grid * self.grid + 1

    def __call__(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise DimensionMismatchError("image must be (H, W, 3)")
        h, w = img.shape[:2]
        if h < self.grid or w < self.grid:
            raise ArgumentError(
                f"image {h}x{w} smaller than embed grid {self.grid}")
        re = (np.arange(self.grid) * h) // self.grid
        ce = (np.arange(self.grid) * w) // self.grid
        sums = np.add.reduceat(np.add.reduceat(img, re, axis=0), ce, axis=1)
        rc = np.diff(np.append(re, h))
        cc = np.diff(np.append(ce, w))
        counts = np.outer(rc, cc).astype(np.float64)
        cells = (sums / counts[:, :, None]).reshape(-1)
        return np.append(cells, 1.0)


def per_pixel_loss(rendered: RenderOutput, target: np.ndarray) -> float:
    """Coverage-restricted L2 image distance, mean-normalized: the root of
    the summed squared channel differences over covered pixels, divided by
    the covered-pixel count (so the value is raster-size-independent)."""
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.shape != rendered.image.shape:
        raise DimensionMismatchError(
            f"target {tgt.shape} and render {rendered.image.shape} disagree")
    covered = rendered.coverage > 0.0
    n = int(covered.sum())
    if n == 0:
        raise DegenerateRenderError("render covers no pixels")
    diff = (rendered.image - tgt)[covered]
    return math.sqrt(float((diff * diff).sum())) / n


def feature_loss(img_a: np.ndarray, img_b: np.ndarray, embedder) -> float:
    """Cosine distance between the images' embeddings, in [0, 2]."""
    ea = np.asarray(embedder(img_a), dtype=np.float64).reshape(-1)
    eb = np.asarray(embedder(img_b), dtype=np.float64).reshape(-1)
    na = float(np.linalg.norm(ea))
    nb = float(np.linalg.norm(eb))
    if na <= 1e-12 or nb <= 1e-12:
        raise DegenerateEmbeddingError(
            f"embedding norms ({na:g}, {nb:g}) too small for cosine")
    cos = float(ea @ eb) / (na * nb)
    return 1.0 - max(-1.0, min(1.0, cos))


def total_3d_loss(rendered: RenderOutput, target: np.ndarray, embedder,
                  config: FitConfig, params: ParamVector | None = None,
                  on_degenerate_embedding: str = "raise"
                  ) -> tuple[float, dict[str, float]]:
    """Combined fitting objective and its per-term breakdown.

    total = lambda6 * per_pixel + lambda7 * feature
            + reg_weight * ||(alpha_id, beta_exp, beta_te)||^2

    The regularizer needs the coefficients, so it is 0 when ``params`` is
    omitted (or reg_weight is 0); it is always reported separately. With
    ``on_degenerate_embedding="neutral"`` a zero-norm embedding yields
    feature term 1.0 instead of raising, which keeps all-black initial
    renders optimizable.
    """
    l6 = per_pixel_loss(rendered, target)
    try:
        l7 = feature_loss(target, rendered.image, embedder)
    except DegenerateEmbeddingError:
        if on_degenerate_embedding != "neutral":
            raise
        l7 = 1.0
    reg = config.reg_weight * params.coeff_norm_sq() if params else 0.0
    weighted = {
        "weighted_per_pixel": config.lambda6 * l6,
        "weighted_feature": config.lambda7 * l7,
        "weighted_reg": reg,
    }
    total = (weighted["weighted_per_pixel"] + weighted["weighted_feature"]
             + weighted["weighted_reg"])
    breakdown = {"per_pixel": l6, "feature": l7, "reg": reg,
                 **weighted, "total": total}
    return total, breakdown


def numeric_gradient(objective, x: ParamVector, eps: float) -> np.ndarray:
    """Central-difference gradient of a scalar objective over the 239 free
    coordinates, evaluated in coordinate order."""
    if not (math.isfinite(eps) and eps > 0.0):
        raise ArgumentError("eps must be positive")
    free = x.to_free()
    grad = np.empty(PARAM_DIM)
    for i in range(PARAM_DIM):
        bumped = free.copy()
        bumped[i] = free[i] + eps
        f_plus = objective(ParamVector.from_free(bumped, x.t_z))
        bumped[i] = free[i] - eps
        f_minus = objective(ParamVector.from_free(bumped, x.t_z))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise EvaluationError(
                f"objective non-finite at coordinate {i} "
                f"(block {_block_of(i)!r}): f+={f_plus!r} f-={f_minus!r}")
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def fit(target: np.ndarray, basis: MorphableBasis,
        intrinsics: CameraIntrinsics, init: ParamVector, config: FitConfig,
        embedder) -> tuple[ParamVector, FitReport]:
    """Recover the parameter vector for a target image.

    Momentum gradient descent on the combined objective with central-
    difference gradients and per-block step scaling. Stops when the
    iteration budget runs out or the relative loss change drops below
    convergence_tol. With ``config.backtracking`` the step is halved
    (momentum dropped as a last resort) until the loss does not increase,
    making the accepted trace non-increasing. Raises DivergenceError if
    the loss ever exceeds divergence_factor times the initial loss.
    """
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.ndim != 3 or tgt.shape[2] != 3:
        raise DimensionMismatchError("target must be (H, W, 3)")
    height, width = tgt.shape[:2]
    start = time.perf_counter()

    def objective(p: ParamVector) -> float:
        out = render_params(basis, p, intrinsics, width, height)
        return total_3d_loss(out, tgt, embedder, config, params=p,
                             on_degenerate_embedding="neutral")[0]

    scales = config.step_scales()
    t_z = init.t_z
    free = init.to_free()
    current = init
    loss = objective(current)
    trace = [loss]
    velocity = np.zeros(PARAM_DIM)
    termination = "iteration budget"
    # Backtracking keeps a running step: restart each iteration at twice
    # the last accepted value (capped by step_size) so the line search
    # does not re-pay all the halvings near a norm-shaped optimum.
    running_step = config.step_size

    for _ in range(config.max_iters):
        grad = numeric_gradient(objective, current, config.fd_epsilon)
        if config.backtracking:
            accepted = False
            step = min(2.0 * running_step, config.step_size)
            for attempt in range(2 * config.max_backtracks):
                vel = config.momentum * velocity - step * scales * grad
                if attempt >= config.max_backtracks:
                    vel = -step * scales * grad
                cand_free = free + vel
                cand = ParamVector.from_free(cand_free, t_z)
                cand_loss = objective(cand)
                if cand_loss <= loss:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                termination = "stalled"
                break
            running_step = step
            velocity = vel
            free = cand_free
            current = cand
            new_loss = cand_loss
        else:
            velocity = config.momentum * velocity - (config.step_size
                                                     * scales * grad)
            free = free + velocity
            current = ParamVector.from_free(free, t_z)
            new_loss = objective(current)
        trace.append(new_loss)
        if new_loss > config.divergence_factor * max(trace[0], 1e-300):
            raise DivergenceError(
                f"loss {new_loss:g} exceeded {config.divergence_factor:g}x "
                f"initial {trace[0]:g}", trace)
        rel = (abs(new_loss) if loss == 0.0
               else abs(new_loss - loss) / abs(loss))
        loss = new_loss
        if rel < config.convergence_tol:
            termination = "converged"
            break

    final_render = render_params(basis, current, intrinsics, width, height)
    _, breakdown = total_3d_loss(final_render, tgt, embedder, config,
                                 params=current,
                                 on_degenerate_embedding="neutral")
    wall_ms = (time.perf_counter() - start) * 1000.0
    report = FitReport(iterations=len(trace) - 1, loss_trace=trace,
                       term_breakdown=breakdown, termination=termination,
                       wall_ms=wall_ms)
    return current, report


def default_camera_distance(basis: MorphableBasis) -> float:
    """Camera distance placing the mean shape at roughly two thirds of the
    frame with the default intrinsics: 3 * (focal/raster) * bounding
    radius, with focal/raster fixed by the 1015/224 default."""
    pts = basis.mean_shape.reshape(-1, 3)
    radius = float(np.linalg.norm(pts - pts.mean(axis=0), axis=1).max())
    return 3.0 * (1015.0 / 224.0) * radius
