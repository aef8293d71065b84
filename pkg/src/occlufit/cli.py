"""Command-line interface.

Subcommands:

* ``reconstruct --config job.json`` runs the full pipeline; repeated
  ``--config`` plus ``--jobs N`` fans independent jobs across processes.
* ``inspect-basis PATH`` prints basis dimensions and invariant checks.
* ``losses --a IMG --b IMG --mask MASK`` computes the masked-pixel and
  style kernels standalone and prints JSON loss records.

Exit codes: 0 success, 2 config error, 3 IO error, 4 degenerate mask,
5 fit divergence, 1 anything else.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys

from . import imageio
from .errors import (
    BasisFileError,
    ConfigError,
    DegenerateMaskError,
    DivergenceError,
    ImageIOError,
    OcclufitError,
)
from .morphable import load_basis, validate_basis
from .occlusion import apply_mask, masked_pixel_loss, style_loss
from .constants import LAMBDA_MASKED_PIXEL, LAMBDA_STYLE
from .pipeline import apply_overrides, load_config, run_pipeline

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE_MASK = 4
EXIT_DIVERGENCE = 5

_FIT_FLAGS = ("max-iters", "step-size", "fd-epsilon", "lambda6", "lambda7",
              "reg-weight", "convergence-tol", "momentum", "backtracking")


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (ImageIOError, BasisFileError, FileNotFoundError,
                        OSError)):
        return EXIT_IO
    if isinstance(exc, DegenerateMaskError):
        return EXIT_DEGENERATE_MASK
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_FAILURE


def _fail(stage: str, exc: Exception) -> int:
    line = json.dumps({"stage": stage, "error": type(exc).__name__,
                       "message": str(exc)})
    print(line, file=sys.stderr)
    return _exit_code_for(exc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occlufit",
        description="Occlusion-aware face reconstruction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="run the two-stage pipeline")
    rec.add_argument("--config", action="append", required=True,
                     metavar="PATH", help="job config (repeatable)")
    rec.add_argument("--raster", help="override raster size, e.g. 64x64")
    rec.add_argument("--emit", help="comma list from "
                                    "obj,render,report,contours,completed")
    rec.add_argument("--output-dir", help="override output directory")
    rec.add_argument("--inpaint-mode", choices=("baseline", "external"))
    rec.add_argument("--external-completed", metavar="PATH")
    rec.add_argument("--jobs", type=int, default=1,
                     help="worker processes for batch runs")
    for flag in _FIT_FLAGS:
        rec.add_argument(f"--fit.{flag}", dest=f"fit_{flag.replace('-', '_')}",
                         metavar="VALUE")

    ins = sub.add_parser("inspect-basis",
                         help="print basis dimensions and invariant checks")
    ins.add_argument("path")

    los = sub.add_parser("losses",
                         help="standalone masked-pixel and style kernels")
    los.add_argument("--a", required=True, metavar="IMG")
    los.add_argument("--b", required=True, metavar="IMG")
    los.add_argument("--mask", required=True, metavar="MASK")
    return parser


def _cmd_reconstruct(args) -> int:
    fit_overrides = {}
    for flag in _FIT_FLAGS:
        value = getattr(args, f"fit_{flag.replace('-', '_')}")
        if value is not None:
            fit_overrides[flag.replace("-", "_")] = value
    configs = []
    for path in args.config:
        try:
            cfg = load_config(path)
            cfg = apply_overrides(
                cfg, raster=args.raster, emit=args.emit,
                output_dir=args.output_dir, inpaint_mode=args.inpaint_mode,
                external_completed=args.external_completed,
                fit_overrides=fit_overrides or None)
        except OcclufitError as exc:
            return _fail("config", exc)
        configs.append(cfg)

    if args.jobs > 1 and len(configs) > 1:
        codes = []
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            for code, lines in pool.map(_run_one, configs):
                for stream, text in lines:
                    print(text, file=sys.stderr if stream == "err"
                          else sys.stdout)
                codes.append(code)
        return max(codes)
    code = EXIT_OK
    for cfg in configs:
        one, lines = _run_one(cfg)
        for stream, text in lines:
            print(text, file=sys.stderr if stream == "err" else sys.stdout)
        code = max(code, one)
    return code


def _run_one(cfg) -> tuple[int, list[tuple[str, str]]]:
    try:
        artifacts = run_pipeline(cfg)
    except Exception as exc:  # mapped to a distinct exit code
        line = json.dumps({"stage": "pipeline", "error": type(exc).__name__,
                           "message": str(exc)})
        return _exit_code_for(exc), [("err", line)]
    lines = [("out", path) for path in (
        artifacts.completed_image, artifacts.final_render,
        artifacts.mesh_obj, artifacts.fit_report,
        *artifacts.contour_maps) if path]
    return EXIT_OK, lines


def _cmd_inspect_basis(args) -> int:
    try:
        basis = load_basis(args.path)
    except Exception as exc:
        return _fail("load-basis", exc)
    print(f"vertices: {basis.vertex_count}")
    print(f"triangles: {basis.triangles.shape[0]}")
    print(f"basis columns: id={basis.basis_id.shape[1]} "
          f"exp={basis.basis_exp.shape[1]} tex={basis.basis_tex.shape[1]}")
    tex = basis.mean_texture
    print(f"mean texture range: [{tex.min():.4f}, {tex.max():.4f}]")
    try:
        validate_basis(basis)
    except Exception as exc:
        print(f"invariants: FAIL ({exc})")
        return EXIT_FAILURE
    print("invariants: OK")
    return EXIT_OK


def _cmd_losses(args) -> int:
    try:
        img_a = imageio.load_image(args.a)
        img_b = imageio.load_image(args.b)
        mask = imageio.load_mask(args.mask)
        pixel = masked_pixel_loss(img_a, img_b, mask)
        # Style distance with the image itself as the single feature
        # layer, both sides restricted to the unoccluded region.
        feats_a = [apply_mask(img_a, mask).transpose(2, 0, 1)]
        feats_b = [apply_mask(img_b, mask).transpose(2, 0, 1)]
        style = style_loss(feats_a, feats_b)
    except Exception as exc:
        return _fail("losses", exc)
    records = [
        {"name": "masked_pixel", "value": pixel,
         "weights": {"lambda4": LAMBDA_MASKED_PIXEL}},
        {"name": "style", "value": style,
         "weights": {"lambda5": LAMBDA_STYLE}},
    ]
    print(json.dumps(records, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "reconstruct":
        return _cmd_reconstruct(args)
    if args.command == "inspect-basis":
        return _cmd_inspect_basis(args)
    return _cmd_losses(args)


if __name__ == "__main__":
    sys.exit(main())
