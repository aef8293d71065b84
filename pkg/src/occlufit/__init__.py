"""Occlusion-aware 3D face reconstruction.

Two-stage pipeline: mask/contour composition with inpainting loss
kernels produce a completed face image, then a morphable face model is
fitted to it by analysis-by-synthesis through a deterministic software
renderer.
"""

from . import constants
from .camera import (
    CameraIntrinsics,
    Pose,
    default_intrinsics,
    project_points,
    rotation_from_euler,
    sh_basis,
    shade_vertices,
)
from .fitting import (
    DownsampleEmbedder,
    FitConfig,
    FitReport,
    ParamVector,
    feature_loss,
    fit,
    numeric_gradient,
    per_pixel_loss,
    total_3d_loss,
)
from .morphable import (
    MorphableBasis,
    ShapeCoeffs,
    TextureCoeffs,
    load_basis,
    make_synthetic_basis,
    save_basis,
    synthesize_shape,
    synthesize_texture,
)
from .occlusion import (
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
from .pipeline import PipelineConfig, RunArtifacts, run_pipeline
from .render import Mesh, RenderOutput, compute_normals, rasterize, render_params

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "DownsampleEmbedder",
    "FitConfig",
    "FitReport",
    "Mesh",
    "MorphableBasis",
    "ParamVector",
    "PipelineConfig",
    "Pose",
    "RenderOutput",
    "RunArtifacts",
    "ShapeCoeffs",
    "TextureCoeffs",
    "adversarial_loss",
    "apply_mask",
    "baseline_inpaint",
    "compose_contour",
    "compute_normals",
    "constants",
    "contour_objective",
    "default_intrinsics",
    "extract_contours",
    "feature_loss",
    "feature_matching_loss",
    "fit",
    "gram_matrix",
    "load_basis",
    "make_synthetic_basis",
    "masked_pixel_loss",
    "numeric_gradient",
    "per_pixel_loss",
    "project_points",
    "rasterize",
    "render_params",
    "rotation_from_euler",
    "run_pipeline",
    "save_basis",
    "sh_basis",
    "shade_vertices",
    "style_loss",
    "synthesis_objective",
    "synthesize_shape",
    "synthesize_texture",
    "to_grayscale",
    "total_3d_loss",
]
