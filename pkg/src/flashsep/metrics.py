"""PSNR and SSIM plus batch evaluation over a dataset manifest.

SSIM follows the standard formulation: 11x11 Gaussian window with sigma 1.5,
K1 = 0.01, K2 = 0.03, dynamic range L. RGB inputs are reduced to luma first,
so alternates that match these choices reproduce the numbers exactly. PSNR of
identical images is reported with an exact flag; reports use a 99.0 dB
sentinel to stay numeric.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .errors import DataError
from . import formats
from .isp import to_grayscale

PSNR_EXACT_SENTINEL_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def psnr(
    pred: np.ndarray,
    target: np.ndarray,
    max_value: float = 1.0,
    mask: np.ndarray | None = None,
) -> float:
    """Peak signal-to-noise ratio in dB over valid pixels; inf when MSE is 0."""
    pred, target = _check_pair(pred, target)
    diff2 = (pred - target) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape[:2]:
            raise DataError(f"mask shape {mask.shape} != image shape {pred.shape[:2]}")
        if not mask.any():
            raise DataError("mask has no valid pixels")
        diff2 = diff2[mask]
    mse = float(diff2.mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(
    pred: np.ndarray,
    target: np.ndarray,
    max_value: float = 1.0,
    mask: np.ndarray | None = None,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Mean structural similarity over valid windows.

    RGB images are converted to luma first. With a mask, only windows fully
    inside the valid region contribute.
    """
    pred, target = _check_pair(pred, target)
    if pred.ndim == 3:
        pred = to_grayscale(pred).astype(np.float64)
        target = to_grayscale(target).astype(np.float64)
    if min(pred.shape) < window:
        raise DataError(f"image smaller than the {window}x{window} SSIM window")
    kernel = _gaussian_kernel(window, sigma)
    c1 = (SSIM_K1 * max_value) ** 2
    c2 = (SSIM_K2 * max_value) ** 2

    mu_x = convolve2d(pred, kernel, mode="valid")
    mu_y = convolve2d(target, kernel, mode="valid")
    xx = convolve2d(pred * pred, kernel, mode="valid")
    yy = convolve2d(target * target, kernel, mode="valid")
    xy = convolve2d(pred * target, kernel, mode="valid")
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    ssim_map = num / den
    if mask is None:
        return float(ssim_map.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != np.asarray(pred).shape:
        raise DataError("mask shape must match the image")
    full = convolve2d(mask.astype(np.float64), np.ones((window, window)),
                      mode="valid") >= window * window - 0.5
    if not full.any():
        raise DataError("no fully valid SSIM window under the mask")
    return float(ssim_map[full].mean())


@dataclass
class SampleScore:
    id: str
    psnr_db: float
    ssim: float
    valid_pixel_fraction: float
    exact: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "psnr_db": PSNR_EXACT_SENTINEL_DB if self.exact else self.psnr_db,
            "ssim": self.ssim,
            "valid_pixel_fraction": self.valid_pixel_fraction,
            "exact": self.exact,
        }


@dataclass
class EvalReport:
    samples: list[SampleScore]
    config: dict = field(default_factory=dict)

    @property
    def mean_psnr_db(self) -> float:
        vals = [PSNR_EXACT_SENTINEL_DB if s.exact else s.psnr_db for s in self.samples]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([s.ssim for s in self.samples])) if self.samples else float("nan")

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "samples": [s.to_dict() for s in self.samples],
                "aggregate": {
                    "mean_psnr_db": self.mean_psnr_db,
                    "mean_ssim": self.mean_ssim,
                    "count": len(self.samples),
                },
            },
            indent=2,
            sort_keys=True,
        )

    def format_table(self) -> str:
        lines = [f"{'id':<28} {'psnr_db':>9} {'ssim':>7} {'valid':>6}"]
        for s in self.samples:
            p = PSNR_EXACT_SENTINEL_DB if s.exact else s.psnr_db
            lines.append(
                f"{s.id:<28} {p:>9.3f} {s.ssim:>7.4f} {s.valid_pixel_fraction:>6.3f}"
                + ("  (exact)" if s.exact else ""))
        lines.append(
            f"{'mean':<28} {self.mean_psnr_db:>9.3f} {self.mean_ssim:>7.4f}")
        return "\n".join(lines)


def evaluate_manifest(
    manifest_path,
    predictions_dir,
    gt_role: str = "gt_transmission",
    max_value: float = 1.0,
    border_crop: int = 0,
) -> EvalReport:
    """Score predictions against a dataset manifest's ground truth.

    Predictions are LFR1 files named ``<sample id>.lfr`` in predictions_dir.
    A missing prediction is a hard error, not a skip.
    """
    manifest_path = Path(manifest_path)
    pred_dir = Path(predictions_dir)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    missing = [s["id"] for s in doc["samples"]
               if not (pred_dir / f"{s['id']}.lfr").exists()]
    if missing:
        raise DataError(f"missing predictions for samples: {missing}")
    scores = []
    for s in doc["samples"]:
        gt = formats.read_lfr(base / s["files"][gt_role])
        pred = formats.read_lfr(pred_dir / f"{s['id']}.lfr")
        valid_fraction = 1.0
        if "validity" in s["files"]:
            validity = formats.read_lfr(base / s["files"]["validity"]) > 0.5
            valid_fraction = float(validity.mean())
        else:
            validity = None
        if border_crop > 0:
            b = border_crop
            gt, pred = gt[b:-b, b:-b], pred[b:-b, b:-b]
            if validity is not None:
                validity = validity[b:-b, b:-b]
        p = psnr(pred, gt, max_value=max_value, mask=validity)
        s_val = ssim(pred, gt, max_value=max_value, mask=validity)
        scores.append(SampleScore(
            id=s["id"],
            psnr_db=p if math.isfinite(p) else PSNR_EXACT_SENTINEL_DB,
            ssim=s_val,
            valid_pixel_fraction=valid_fraction,
            exact=not math.isfinite(p),
        ))
    return EvalReport(
        samples=scores,
        config={
            "manifest": str(manifest_path),
            "predictions_dir": str(pred_dir),
            "gt_role": gt_role,
            "max_value": max_value,
            "border_crop": border_crop,
        },
    )
