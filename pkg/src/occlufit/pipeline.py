"""End-to-end orchestration: masked image in, fitted face model out.

Stage 1 composes the masked grayscale/contour inputs and produces a
completed image (deterministic diffusion inpaint, or an externally
completed image dropped into the same slot). Stage 2 fits the face model
to the completed image. All artifacts are staged in a scratch directory
and renamed into place only when every stage has succeeded, so a failed
run leaves nothing partial behind.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import imageio
from .camera import CameraIntrinsics, default_intrinsics
from .errors import ConfigError, DegenerateMaskError
from .fitting import (
    DownsampleEmbedder,
    FitConfig,
    FitReport,
    ParamVector,
    default_camera_distance,
    fit,
)
from .morphable import (
    MorphableBasis,
    load_basis,
    make_synthetic_basis,
    synthesize_shape,
    synthesize_texture,
)
from .occlusion import (
    apply_mask,
    baseline_inpaint,
    compose_contour,
    extract_contours,
    to_grayscale,
)
from .render import Mesh, compute_normals, render_params

EMIT_CHOICES = ("obj", "render", "report", "contours", "completed")

REPRO_SEED_VAR = "REPRO_SEED"


@dataclass(frozen=True)
class PipelineConfig:
    """One reconstruction job. Parsed from a flat JSON document whose
    fit-related keys carry a ``fit.`` prefix (schema in docs/formats.md)."""

    input_image: str
    mask: str
    basis: str
    output_dir: str
    raster_size: tuple[int, int] | None = None  # (W, H); None = image size
    inpaint_mode: str = "baseline"
    external_completed: str | None = None
    emit: tuple[str, ...] = EMIT_CHOICES
    contour_low: float = 0.1
    contour_high: float = 0.25
    camera_distance: float | None = None  # None = derived from the basis
    focal: float | None = None            # None = default intrinsics
    embed_grid: int = 8
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.inpaint_mode not in ("baseline", "external"):
            raise ConfigError(f"inpaint_mode must be 'baseline' or "
                              f"'external', got {self.inpaint_mode!r}")
        if self.inpaint_mode == "external" and not self.external_completed:
            raise ConfigError("external inpaint mode requires "
                              "external_completed")
        bad = [e for e in self.emit if e not in EMIT_CHOICES]
        if bad:
            raise ConfigError(f"unknown emit targets {bad}; choices are "
                              f"{list(EMIT_CHOICES)}")
        if self.raster_size is not None:
            w, h = self.raster_size
            if w < 16 or h < 16:
                raise ConfigError(f"raster_size {w}x{h} below minimum 16x16")


@dataclass(frozen=True)
class RunArtifacts:
    """Paths of everything a run wrote; fields for unrequested emit
    targets are None."""

    completed_image: str | None
    mesh_obj: str | None
    final_render: str | None
    fit_report: str | None
    contour_maps: tuple[str, ...]
    report: FitReport | None = None

    def to_dict(self) -> dict:
        return {
            "completed_image": self.completed_image,
            "mesh_obj": self.mesh_obj,
            "final_render": self.final_render,
            "fit_report": self.fit_report,
            "contour_maps": list(self.contour_maps),
        }


def parse_raster(text: str) -> tuple[int, int]:
    """Parse 'WxH' into a (width, height) pair."""
    parts = text.lower().split("x")
    try:
        w, h = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"raster spec {text!r} is not WxH") from None
    return w, h


def config_from_dict(doc: dict, base_dir: str = ".") -> PipelineConfig:
    """Build a PipelineConfig from the flat JSON document.

    Relative paths are resolved against ``base_dir`` (the config file's
    directory). Unknown keys are rejected so typos fail loudly.
    """
    doc = dict(doc)
    fit_kwargs = {}
    for key in [k for k in doc if k.startswith("fit.")]:
        fit_kwargs[key[4:]] = doc.pop(key)
    known_fit = {f.name for f in fields(FitConfig)}
    bad = set(fit_kwargs) - known_fit
    if bad:
        raise ConfigError(f"unknown fit settings {sorted(bad)}")

    def path_of(value):
        if value is None:
            return None
        value = str(value)
        if value.startswith("synthetic:") or os.path.isabs(value):
            return value
        return os.path.join(base_dir, value)

    kwargs = {}
    for key in ("input_image", "mask", "basis", "output_dir"):
        if key not in doc:
            raise ConfigError(f"missing required config key {key!r}")
        kwargs[key] = path_of(doc.pop(key))
    if "raster" in doc:
        kwargs["raster_size"] = parse_raster(str(doc.pop("raster")))
    if "emit" in doc:
        emit = doc.pop("emit")
        if isinstance(emit, str):
            emit = [e for e in emit.split(",") if e]
        kwargs["emit"] = tuple(emit)
    for key in ("inpaint_mode", "contour_low", "contour_high",
                "camera_distance", "focal", "embed_grid"):
        if key in doc:
            kwargs[key] = doc.pop(key)
    if "external_completed" in doc:
        kwargs["external_completed"] = path_of(doc.pop("external_completed"))
    if doc:
        raise ConfigError(f"unknown config keys {sorted(doc)}")
    try:
        fit_cfg = FitConfig(**{k: _coerce_fit(k, v)
                               for k, v in fit_kwargs.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(fit=fit_cfg, **kwargs)


def _coerce_fit(key: str, value):
    if key == "max_iters":
        return int(value)
    if key == "backtracking":
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    return float(value)


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc, base_dir=os.path.dirname(
        os.path.abspath(path)))


def _repro_seed() -> int | None:
    raw = os.environ.get(REPRO_SEED_VAR)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{REPRO_SEED_VAR}={raw!r} is not an integer") \
            from None


def _resolve_basis(spec: str) -> MorphableBasis:
    if spec.startswith("synthetic:"):
        v_count = int(spec.split(":", 1)[1])
        return make_synthetic_basis(v_count, _repro_seed() or 0)
    return load_basis(spec)


def run_pipeline(config: PipelineConfig) -> RunArtifacts:
    """Execute one reconstruction job and return the artifact paths."""
    image = imageio.load_image(config.input_image)
    mask = imageio.load_mask(config.mask)
    if mask.shape != image.shape[:2]:
        raise ConfigError(f"mask {mask.shape} does not match image "
                          f"{image.shape[:2]}")
    if config.raster_size is None:
        width, height = image.shape[1], image.shape[0]
        if width < 16 or height < 16:
            raise ConfigError(f"input raster {width}x{height} below 16x16")
    else:
        width, height = config.raster_size
        if (height, width) != image.shape[:2]:
            raise ConfigError(
                f"raster_size {width}x{height} does not match input image "
                f"{image.shape[1]}x{image.shape[0]}; no resampling is done")
    if mask.min() == 1.0:
        raise DegenerateMaskError("mask occludes the whole image")

    basis = _resolve_basis(config.basis)

    # Stage 1: masked inputs, contours, completion.
    masked = apply_mask(image, mask)
    gray_masked = to_grayscale(masked)
    c_true = apply_mask(
        extract_contours(gray_masked, config.contour_low,
                         config.contour_high), mask)
    if config.inpaint_mode == "external":
        completed = imageio.load_image(config.external_completed)
        if completed.shape != image.shape:
            raise ConfigError("external completed image shape differs from "
                              "input")
        # Unmasked pixels always come from the input, bitwise.
        completed = apply_mask(image, mask) + apply_mask(completed, 1.0 - mask)
    else:
        completed = baseline_inpaint(image, mask)
    c_syn = extract_contours(to_grayscale(completed), config.contour_low,
                             config.contour_high)
    c_goal = compose_contour(c_true, c_syn, mask)

    # Stage 2: fit the face model to the completed image.
    intrinsics = (default_intrinsics(width, height) if config.focal is None
                  else CameraIntrinsics(
                      config.focal, np.array([width / 2.0, height / 2.0])))
    distance = (default_camera_distance(basis)
                if config.camera_distance is None else config.camera_distance)
    init = ParamVector.zeros(distance)
    embedder = DownsampleEmbedder(config.embed_grid)
    params, report = fit(completed, basis, intrinsics, init, config.fit,
                         embedder)

    # Export phase: stage everything, then rename into place.
    os.makedirs(config.output_dir, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".stage-", dir=config.output_dir)
    try:
        staged: list[tuple[str, str]] = []

        def stage(name: str, writer) -> str:
            tmp = os.path.join(staging, name)
            writer(tmp)
            final = os.path.join(config.output_dir, name)
            staged.append((tmp, final))
            return final

        emit = set(config.emit)
        completed_path = render_path = report_path = obj_path = None
        contour_paths: tuple[str, ...] = ()
        if "completed" in emit:
            completed_path = stage(
                "completed.png", lambda p: imageio.save_png(p, completed))
        if "contours" in emit:
            contour_paths = tuple(
                stage(f"contour_{tag}.pgm",
                      lambda p, a=arr: imageio.save_pgm(p, a))
                for tag, arr in (("true", c_true), ("syn", c_syn),
                                 ("goal", c_goal)))
        if "render" in emit:
            final_render = render_params(basis, params, intrinsics, width,
                                         height)
            render_path = stage(
                "render.png", lambda p: imageio.save_png(p,
                                                         final_render.image))
        if "obj" in emit:
            positions = synthesize_shape(basis, params.shape_coeffs())
            albedo = synthesize_texture(basis, params.texture_coeffs())
            mesh = Mesh(positions, albedo,
                        compute_normals(positions, basis.triangles),
                        basis.triangles)
            obj_path = stage("face.obj",
                             lambda p: imageio.export_obj(mesh, p))
        if "report" in emit:
            doc = report.to_dict()
            doc["repro_seed"] = _repro_seed()
            report_path = stage(
                "fit_report.json",
                lambda p: _write_json(p, doc))

        for tmp, final in staged:
            os.replace(tmp, final)
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    return RunArtifacts(completed_image=completed_path, mesh_obj=obj_path,
                        final_render=render_path, fit_report=report_path,
                        contour_maps=contour_paths, report=report)


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(config: PipelineConfig, *, raster: str | None = None,
                    emit: str | None = None, output_dir: str | None = None,
                    inpaint_mode: str | None = None,
                    external_completed: str | None = None,
                    fit_overrides: dict | None = None) -> PipelineConfig:
    """Apply CLI per-field overrides on top of a parsed config."""
    changes = {}
    if raster is not None:
        changes["raster_size"] = parse_raster(raster)
    if emit is not None:
        changes["emit"] = tuple(e for e in emit.split(",") if e)
    if output_dir is not None:
        changes["output_dir"] = output_dir
    if inpaint_mode is not None:
        changes["inpaint_mode"] = inpaint_mode
    if external_completed is not None:
        changes["external_completed"] = external_completed
    if fit_overrides:
        bad = set(fit_overrides) - {f.name for f in fields(FitConfig)}
        if bad:
            raise ConfigError(f"unknown fit settings {sorted(bad)}")
        fit_cfg = replace(config.fit, **{k: _coerce_fit(k, v)
                                         for k, v in fit_overrides.items()})
        changes["fit"] = fit_cfg
    return replace(config, **changes) if changes else config
