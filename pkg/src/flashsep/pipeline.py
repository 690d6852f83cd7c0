"""Two-stage reflection-removal orchestration with pluggable estimators.

The wiring is fixed; the estimators are not. Stage one predicts the
reflection layer from the ambient image and the grayscale flash-only image;
stage two predicts the transmission from the ambient image and the predicted
reflection only. The flash-only image never reaches the transmission
estimator, which keeps its artifacts out of the final prediction. That rule
is enforced before any pixel work and proven by a per-run stage trace.

Estimators run in-process (a callable) or as an external command exchanging
LFR1 files (invoked with --role, --in, --out).
"""

from __future__ import annotations

import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, StageError
from . import flashcue, formats, geometry, isp
from .rawcore import RawFrame, linearize

# channel role names used in estimator declarations and stage traces
AMBIENT_RGB = "ambient_rgb"
FLASH_RGB = "flash_rgb"
FLASH_ONLY_RGB = "flash_only_rgb"
FLASH_ONLY_GRAY = "flash_only_gray"
REFLECTION = "reflection"
AMBIENT_LINEAR = "ambient_linear"
FLASH_LINEAR = "flash_linear"

_FLASH_ONLY_ROLES = {FLASH_ONLY_RGB, FLASH_ONLY_GRAY}


@dataclass
class Estimator:
    """A pluggable estimator: role, declared inputs, and an invocation."""

    role: str  # reflection | transmission | base | flow
    inputs: tuple[str, ...]
    fn: "callable | None" = None
    command: list[str] | None = None
    timeout_s: float = 120.0

    def __post_init__(self):
        self.inputs = tuple(self.inputs)
        if (self.fn is None) == (self.command is None):
            raise ContractError(
                f"estimator {self.role!r} needs exactly one of fn or command")


def validate_estimator(est: Estimator) -> None:
    """Enforce the wiring contracts before any pixel work."""
    if est.role == "transmission":
        bad = _FLASH_ONLY_ROLES.intersection(est.inputs)
        if bad:
            raise ContractError(
                "transmission estimator must not receive the flash-only "
                f"channel, but declares {sorted(bad)}")
    elif est.role == "reflection":
        if set(est.inputs) != {AMBIENT_RGB, FLASH_ONLY_GRAY}:
            raise ContractError(
                "reflection estimator inputs must be exactly "
                f"{{{AMBIENT_RGB}, {FLASH_ONLY_GRAY}}}, got {list(est.inputs)}")


def invoke_estimator(est: Estimator, inputs: dict[str, np.ndarray]) -> np.ndarray:
    """Run an estimator on named channel inputs and return its output image."""
    missing = [r for r in est.inputs if r not in inputs]
    if missing:
        raise DataError(f"estimator {est.role!r} missing inputs {missing}")
    ordered = {r: inputs[r] for r in est.inputs}
    if est.fn is not None:
        return np.asarray(est.fn(ordered), dtype=np.float32)
    with tempfile.TemporaryDirectory(prefix="flashsep_est_") as tmp:
        tmp = Path(tmp)
        in_paths = []
        for role, img in ordered.items():
            p = tmp / f"{role}.lfr"
            formats.write_lfr(p, img)
            in_paths.append(str(p))
        out_path = tmp / "out.lfr"
        cmd = list(est.command) + ["--role", est.role, "--in", *in_paths,
                                   "--out", str(out_path)]
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=est.timeout_s)
        except subprocess.TimeoutExpired as e:
            raise StageError(f"estimator {est.role!r} timed out after "
                             f"{est.timeout_s}s") from e
        if proc.returncode != 0:
            raise StageError(
                f"estimator {est.role!r} exited with {proc.returncode}: "
                f"{proc.stderr.decode(errors='replace')[-500:]}")
        if not out_path.exists():
            raise StageError(f"estimator {est.role!r} produced no output file")
        return formats.read_lfr(out_path)


@dataclass
class AlignSpec:
    """How to align the flash image to the ambient image.

    mode "identity" skips alignment; "homography" estimates a global warp
    from block-matching correspondences plus RANSAC; "external_flow" takes a
    dense flow from a file, an array, or a flow estimator. External flows are
    interpreted as the misalignment flow of the transmission layer (the flow
    that warps aligned content to the flash image) and are inverted before
    application.
    """

    mode: str = "identity"
    flow: "np.ndarray | str | None" = None
    flow_estimator: Estimator | None = None
    ransac_seed: int = 0
    inlier_threshold: float = 2.0

    def __post_init__(self):
        if self.mode not in ("identity", "homography", "external_flow"):
            raise DataError(f"unknown alignment mode {self.mode!r}")


@dataclass
class PipelineResult:
    transmission: np.ndarray
    reflection: np.ndarray | None
    flash_only: np.ndarray | None
    flash_only_gray: np.ndarray | None
    aligned_flash: np.ndarray | None
    alignment_flow: np.ndarray | None
    validity: np.ndarray
    trace: list[dict] = field(default_factory=list)
    timing_s: dict[str, float] = field(default_factory=dict)


def l2_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean squared error over valid pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff2 = (pred - target) ** 2
    if mask is None:
        return float(diff2.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape[:2]:
        raise DataError(f"mask shape {mask.shape} != image shape {pred.shape[:2]}")
    if not mask.any():
        raise DataError("mask has no valid pixels")
    return float(diff2[mask].mean())


def align_preprocess(
    ambient: np.ndarray, flash: np.ndarray, spec: AlignSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warp the flash image into alignment with the ambient image.

    Returns (warped flash, flow actually applied, validity mask).
    """
    ambient = np.asarray(ambient, dtype=np.float32)
    flash = np.asarray(flash, dtype=np.float32)
    if ambient.shape != flash.shape:
        raise DataError(f"shape mismatch: {ambient.shape} vs {flash.shape}")
    h, w = ambient.shape[:2]
    if spec.mode == "identity":
        flow = np.zeros((h, w, 2), dtype=np.float32)
        return flash, flow, np.ones((h, w), dtype=bool)
    if spec.mode == "homography":
        pts_a, pts_b, _ = geometry.find_correspondences(ambient, flash)
        if pts_a.shape[0] < 4:
            raise DataError("too few correspondences for homography alignment")
        hom = geometry.estimate_homography(
            pts_a, pts_b, method="ransac_dlt",
            inlier_threshold=spec.inlier_threshold, seed=spec.ransac_seed)
        flow = geometry.homography_to_flow(hom, w, h)
    else:  # external_flow
        if spec.flow_estimator is not None:
            mis = invoke_estimator(spec.flow_estimator,
                                   {AMBIENT_RGB: ambient, FLASH_RGB: flash})
        elif isinstance(spec.flow, (str, Path)):
            mis = formats.read_lfr(spec.flow)
        elif spec.flow is not None:
            mis = np.asarray(spec.flow, dtype=np.float32)
        else:
            raise DataError("external_flow alignment needs a flow source")
        if mis.shape[:2] != (h, w):
            raise DataError(f"flow shape {mis.shape[:2]} != image shape {(h, w)}")
        flow = geometry.invert_flow(mis)
    warped, valid = geometry.warp_by_flow(flash, flow)
    return warped, flow, valid


def _linear_rgb(frame: RawFrame, wb_gains) -> np.ndarray:
    """Linearize + demosaic + white balance (common gains for subtraction)."""
    lin = isp.demosaic_bilinear(linearize(frame), frame.cfa)
    return isp.white_balance(lin, wb_gains)


def run_two_stage(
    ambient: RawFrame,
    flash: RawFrame,
    g_r: Estimator,
    g_t: Estimator,
    align: AlignSpec | None = None,
    signed: bool = False,
) -> PipelineResult:
    """The reflection-first pipeline on a raw ambient/flash pair.

    Stages: align flash to ambient, subtract with exposure compensation,
    grayscale the flash-only image, estimate the reflection from
    (ambient, flash-only gray), then the transmission from (ambient,
    reflection). The stage trace records the exact inputs of every stage.
    """
    validate_estimator(g_r)
    validate_estimator(g_t)
    if g_r.role != "reflection" or g_t.role != "transmission":
        raise ContractError("run_two_stage needs a reflection and a transmission estimator")
    if align is None:
        align = AlignSpec()
    trace: list[dict] = []
    timing: dict[str, float] = {}
    meta_a = ambient.meta

    t0 = time.perf_counter()
    # both frames get the ambient white balance so the subtraction is consistent
    lin_a = _linear_rgb(ambient, meta_a.wb_gains)
    lin_f = _linear_rgb(flash, meta_a.wb_gains)
    timing["preprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    aligned_flash, flow, valid = align_preprocess(lin_a, lin_f, align)
    trace.append({"stage": "align", "mode": align.mode,
                  "inputs": [AMBIENT_LINEAR, FLASH_LINEAR]})
    timing["align"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pair = flashcue.FlashPair(
        ambient=lin_a, flash=aligned_flash, space=flashcue.PairSpace.LINEAR_RGB,
        exposure_a_ms=meta_a.exposure_ms, exposure_f_ms=flash.meta.exposure_ms)
    fo = flashcue.compute_flash_only(pair, signed=signed)
    trace.append({"stage": "flash_only",
                  "inputs": [AMBIENT_LINEAR, "flash_aligned"],
                  "exposure_ratio": fo.exposure_ratio,
                  "clamped": fo.clamped})
    timing["flash_only"] = time.perf_counter() - t0

    cfg = isp.IspConfig.from_meta(meta_a)
    ambient_rgb = isp.run_isp_linear_rgb(lin_a, cfg)
    fo_rgb = isp.run_isp_linear_rgb(fo.image, cfg)
    fo_gray = isp.to_grayscale(fo_rgb)

    t0 = time.perf_counter()
    r_inputs = {AMBIENT_RGB: ambient_rgb, FLASH_ONLY_GRAY: fo_gray}
    r_hat = invoke_estimator(g_r, r_inputs)
    trace.append({"stage": "reflection", "estimator_inputs": sorted(r_inputs)})
    timing["reflection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    t_inputs = {AMBIENT_RGB: ambient_rgb, REFLECTION: r_hat}
    assert set(t_inputs) == {AMBIENT_RGB, REFLECTION}
    t_hat = invoke_estimator(g_t, t_inputs)
    trace.append({"stage": "transmission", "estimator_inputs": sorted(t_inputs)})
    timing["transmission"] = time.perf_counter() - t0

    if t_hat.shape[:2] != ambient_rgb.shape[:2]:
        raise DataError("transmission estimate does not match ambient dimensions")
    return PipelineResult(
        transmission=t_hat,
        reflection=r_hat,
        flash_only=fo.image,
        flash_only_gray=fo_gray,
        aligned_flash=aligned_flash,
        alignment_flow=flow,
        validity=valid & ~fo.mask,
        trace=trace,
        timing_s=timing,
    )


def run_base(
    ambient: RawFrame,
    flash: RawFrame,
    g_b: Estimator,
    variant: str = "flash_only_input",
) -> PipelineResult:
    """Single-stage baseline wirings used for ablations.

    variant "flash_only_input" feeds (ambient, flash-only) in sRGB;
    "flash_input" feeds (ambient, flash) and never computes a flash-only
    image; "linear_space" feeds the linear-ISP outputs of both frames.
    """
    if variant not in ("flash_only_input", "flash_input", "linear_space"):
        raise DataError(f"unknown base variant {variant!r}")
    if g_b.role != "base":
        raise ContractError("run_base needs a base estimator")
    validate_estimator(g_b)
    trace: list[dict] = []
    timing: dict[str, float] = {}
    meta_a = ambient.meta
    lin_a = _linear_rgb(ambient, meta_a.wb_gains)
    lin_f = _linear_rgb(flash, meta_a.wb_gains)
    cfg = isp.IspConfig.from_meta(meta_a)
    fo_img = None
    if variant == "linear_space":
        inputs = {AMBIENT_LINEAR: lin_a, FLASH_LINEAR: lin_f}
    elif variant == "flash_input":
        inputs = {AMBIENT_RGB: isp.run_isp_linear_rgb(lin_a, cfg),
                  FLASH_RGB: isp.run_isp_linear_rgb(lin_f, cfg)}
    else:
        pair = flashcue.FlashPair(
            ambient=lin_a, flash=lin_f, space=flashcue.PairSpace.LINEAR_RGB,
            exposure_a_ms=meta_a.exposure_ms, exposure_f_ms=flash.meta.exposure_ms)
        fo = flashcue.compute_flash_only(pair)
        fo_img = fo.image
        trace.append({"stage": "flash_only",
                      "inputs": [AMBIENT_LINEAR, FLASH_LINEAR]})
        inputs = {AMBIENT_RGB: isp.run_isp_linear_rgb(lin_a, cfg),
                  FLASH_ONLY_RGB: isp.run_isp_linear_rgb(fo.image, cfg)}
    t0 = time.perf_counter()
    t_hat = invoke_estimator(g_b, inputs)
    trace.append({"stage": "base", "variant": variant,
                  "estimator_inputs": sorted(inputs)})
    timing["base"] = time.perf_counter() - t0
    h, w = lin_a.shape[:2]
    return PipelineResult(
        transmission=t_hat,
        reflection=None,
        flash_only=fo_img,
        flash_only_gray=None,
        aligned_flash=None,
        alignment_flow=None,
        validity=np.ones((h, w), dtype=bool),
        trace=trace,
        timing_s=timing,
    )
