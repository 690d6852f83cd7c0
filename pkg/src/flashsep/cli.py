"""Command-line entry point exposing every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 estimator
contract violation. Logs go to stderr; data goes to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import flashcue, formats, metrics, pipeline, synth
from . import isp as isp_mod
from .errors import ContractError, DataError, FlashSepError
from .rawcore import delinearize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONTRACT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit code 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _echo_config(out_dir: Path, args: argparse.Namespace) -> None:
    """Write the fully-resolved run configuration next to the outputs."""
    doc = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in sorted(vars(args).items()) if k != "func"}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(json.dumps(doc, indent=2) + "\n")


def _cmd_isp(args) -> int:
    frame = formats.read_raw_frame(args.input)
    stage_set = isp_mod.StageSet.FULL if args.stage_set == "full" \
        else isp_mod.StageSet.LINEAR_ONLY
    if args.config:
        cfg = isp_mod.IspConfig.from_json(Path(args.config).read_text())
        cfg.stage_set = stage_set
    else:
        cfg = isp_mod.IspConfig.from_meta(frame.meta, stage_set=stage_set)
    out = isp_mod.run_isp(frame, cfg)
    out_path = Path(args.out)
    if stage_set is isp_mod.StageSet.LINEAR_ONLY or out_path.suffix == ".lfr":
        formats.write_lfr(out_path, out)
    else:
        formats.write_ppm(out_path, out, depth=args.depth)
    return EXIT_OK


def _cmd_flashonly(args) -> int:
    ambient = formats.read_raw_frame(args.ambient)
    flash = formats.read_raw_frame(args.flash)
    pair = flashcue.FlashPair(ambient=ambient, flash=flash)
    result = flashcue.compute_flash_only(pair, signed=args.signed)
    formats.write_lfr(args.out, result.image)
    if args.mask:
        formats.write_pgm(args.mask, result.mask.astype(np.uint16) * 65535)
    if args.rgb_out:
        rgb = flashcue.flash_only_to_rgb(result.image, ambient.meta, cfa=ambient.cfa)
        formats.write_ppm(args.rgb_out, rgb, depth=8)
    print(f"flash-only written; exposure ratio {result.exposure_ratio:.6g}, "
          f"{result.clamped} negative pixels clamped", file=sys.stderr)
    return EXIT_OK


def _cmd_synth(args) -> int:
    if args.recipe:
        recipe = synth.SynthRecipe.from_dict(json.loads(Path(args.recipe).read_text()))
    else:
        recipe = synth.SynthRecipe()
    recipe.misalign_mode = args.mode
    recipe.seed = args.seed
    out_dir = Path(args.out)
    _echo_config(out_dir, args)
    manifest = synth.emit_dataset(args.sources, recipe, out_dir, threads=args.threads)
    print(f"wrote {len(manifest['samples'])} samples to {out_dir}", file=sys.stderr)
    return EXIT_OK


def _cmd_align(args) -> int:
    ambient = formats.read_lfr(args.ambient) if args.ambient.endswith(".lfr") \
        else formats.read_ppm(args.ambient)
    flash = formats.read_lfr(args.flash) if args.flash.endswith(".lfr") \
        else formats.read_ppm(args.flash)
    spec = pipeline.AlignSpec(mode=args.mode, flow=args.flow,
                              ransac_seed=args.seed)
    warped, flow, valid = pipeline.align_preprocess(ambient, flash, spec)
    formats.write_lfr(args.out, warped)
    if args.flow_out:
        formats.write_lfr(args.flow_out, flow)
    print(f"aligned flash written; {float(valid.mean()):.1%} pixels valid",
          file=sys.stderr)
    return EXIT_OK


def _builtin_estimator(role: str, name: str) -> pipeline.Estimator:
    """Estimators for wiring tests: no learned weights involved."""
    if role == "reflection":
        inputs = (pipeline.AMBIENT_RGB, pipeline.FLASH_ONLY_GRAY)
        if name == "zero":
            return pipeline.Estimator(role, inputs,
                                      fn=lambda d: np.zeros_like(d[pipeline.AMBIENT_RGB]))
    if role == "transmission":
        inputs = (pipeline.AMBIENT_RGB, pipeline.REFLECTION)
        if name == "passthrough":
            return pipeline.Estimator(role, inputs,
                                      fn=lambda d: d[pipeline.AMBIENT_RGB])
        if name == "subtract":
            return pipeline.Estimator(
                role, inputs,
                fn=lambda d: d[pipeline.AMBIENT_RGB] - d[pipeline.REFLECTION])
    raise DataError(f"unknown builtin estimator {name!r} for role {role!r}")


def _load_estimator(role: str, spec: dict) -> pipeline.Estimator:
    if "builtin" in spec:
        return _builtin_estimator(role, spec["builtin"])
    if "command" in spec:
        inputs = spec.get("inputs")
        if inputs is None:
            inputs = [pipeline.AMBIENT_RGB, pipeline.FLASH_ONLY_GRAY] \
                if role == "reflection" else [pipeline.AMBIENT_RGB, pipeline.REFLECTION]
        return pipeline.Estimator(role, tuple(inputs), command=list(spec["command"]),
                                  timeout_s=spec.get("timeout_s", 120.0))
    raise DataError(f"estimator spec for {role!r} needs 'builtin' or 'command'")


def _cmd_run(args) -> int:
    ambient = formats.read_raw_frame(args.ambient)
    flash = formats.read_raw_frame(args.flash)
    if args.estimators:
        est_doc = json.loads(Path(args.estimators).read_text())
    else:
        est_doc = {"reflection": {"builtin": "zero"},
                   "transmission": {"builtin": "passthrough"}}
    g_r = _load_estimator("reflection", est_doc["reflection"])
    g_t = _load_estimator("transmission", est_doc["transmission"])
    spec = pipeline.AlignSpec(mode=args.align, flow=args.flow, ransac_seed=args.seed)
    result = pipeline.run_two_stage(ambient, flash, g_r, g_t, align=spec)
    out_dir = Path(args.out)
    _echo_config(out_dir, args)
    formats.write_lfr(out_dir / "transmission.lfr", result.transmission)
    formats.write_lfr(out_dir / "reflection.lfr", result.reflection)
    formats.write_lfr(out_dir / "flash_only.lfr", result.flash_only)
    formats.write_lfr(out_dir / "validity.lfr", result.validity.astype(np.float32))
    if args.trace:
        Path(args.trace).write_text(json.dumps(result.trace, indent=2) + "\n")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    report = metrics.evaluate_manifest(
        args.manifest, args.pred, gt_role=args.gt_role,
        border_crop=args.border_crop)
    Path(args.out).write_text(report.to_json() + "\n")
    print(report.format_table(), file=sys.stderr)
    return EXIT_OK


def _cmd_formats(args) -> int:
    print(formats.format_specs())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flashsep",
                description="Flash/no-flash reflection separation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("isp", help="run the ISP on a raw frame")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stage-set", choices=["full", "linear"], default="full",
                    dest="stage_set")
    sp.add_argument("--config", default=None, help="IspConfig JSON file")
    sp.add_argument("--depth", type=int, choices=[8, 16], default=8)
    sp.set_defaults(func=_cmd_isp)

    sp = sub.add_parser("flashonly", help="compute the flash-only image")
    sp.add_argument("--ambient", required=True)
    sp.add_argument("--flash", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask", default=None)
    sp.add_argument("--signed", action="store_true")
    sp.add_argument("--rgb-out", default=None, dest="rgb_out")
    sp.set_defaults(func=_cmd_flashonly)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--sources", required=True, help="input manifest JSON")
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=["none", "homography", "depth"],
                    default="none")
    sp.add_argument("--recipe", default=None, help="SynthRecipe JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("align", help="align a flash image to an ambient image")
    sp.add_argument("--ambient", required=True)
    sp.add_argument("--flash", required=True)
    sp.add_argument("--mode", choices=["identity", "homography", "external_flow"],
                    default="homography")
    sp.add_argument("--flow", default=None, help="LFR1 flow for external_flow mode")
    sp.add_argument("--out", required=True)
    sp.add_argument("--flow-out", default=None, dest="flow_out")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_align)

    sp = sub.add_parser("run", help="run the two-stage pipeline")
    sp.add_argument("--ambient", required=True)
    sp.add_argument("--flash", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--estimators", default=None,
                    help="JSON: {reflection: {...}, transmission: {...}}")
    sp.add_argument("--align", choices=["identity", "homography", "external_flow"],
                    default="identity")
    sp.add_argument("--flow", default=None)
    sp.add_argument("--trace", default=None, help="write the stage trace JSON here")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("evaluate", help="score predictions against ground truth")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--gt-role", default="gt_transmission", dest="gt_role")
    sp.add_argument("--border-crop", type=int, default=0, dest="border_crop")
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("formats", help="print the on-disk format specs")
    sp.set_defaults(func=_cmd_formats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ContractError as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except (DataError, FlashSepError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
