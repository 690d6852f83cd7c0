"""Reference ISP: demosaic, white balance, color correction, gamma.

Two stage sets are supported:
  * full: linearize -> demosaic -> white balance -> color matrix -> sRGB gamma
  * linear_only: linearize -> demosaic -> white balance (everything linear,
    so the output scales with the input and flash subtraction stays valid)

Demosaicing is bilinear: deterministic, linear in the input, and good enough
for a reference pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .rawcore import CaptureMeta, CFAPattern, RawFrame, linearize

# Rec.709 luma weights, used for every RGB -> gray conversion in the toolkit
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float32)

_KERNEL_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float32)
_KERNEL_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float32)


class GammaMode(str, Enum):
    SRGB = "srgb"
    NONE = "none"


class StageSet(str, Enum):
    FULL = "full"
    LINEAR_ONLY = "linear_only"


@dataclass
class IspConfig:
    wb_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ccm: tuple[float, ...] = (1, 0, 0, 0, 1, 0, 0, 0, 1)
    gamma: GammaMode = GammaMode.SRGB
    stage_set: StageSet = StageSet.FULL

    def __post_init__(self):
        self.wb_gains = tuple(float(g) for g in self.wb_gains)
        self.ccm = tuple(float(c) for c in self.ccm)
        self.gamma = GammaMode(self.gamma)
        self.stage_set = StageSet(self.stage_set)
        if any(g <= 0 for g in self.wb_gains):
            raise ConfigError(f"wb_gains must be positive, got {self.wb_gains}")
        if len(self.ccm) != 9:
            raise ConfigError("ccm must have 9 entries (3x3 row-major)")

    @classmethod
    def from_meta(cls, meta: CaptureMeta, stage_set: StageSet = StageSet.FULL) -> "IspConfig":
        return cls(wb_gains=meta.wb_gains, ccm=meta.ccm, stage_set=stage_set)

    @property
    def ccm_matrix(self) -> np.ndarray:
        return np.asarray(self.ccm, dtype=np.float32).reshape(3, 3)

    def to_json(self) -> str:
        return json.dumps(
            {
                "wb_gains": list(self.wb_gains),
                "ccm": list(self.ccm),
                "gamma": self.gamma.value,
                "stage_set": self.stage_set.value,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text_or_path) -> "IspConfig":
        p = Path(str(text_or_path))
        doc = json.loads(p.read_text() if p.exists() else str(text_or_path))
        return cls(
            wb_gains=tuple(doc.get("wb_gains", (1, 1, 1))),
            ccm=tuple(doc.get("ccm", (1, 0, 0, 0, 1, 0, 0, 0, 1))),
            gamma=GammaMode(doc.get("gamma", "srgb")),
            stage_set=StageSet(doc.get("stage_set", "full")),
        )


def demosaic_bilinear(mosaic: np.ndarray, cfa: CFAPattern) -> np.ndarray:
    """Bilinear demosaic of a single-channel mosaic to (h, w, 3).

    Missing CFA sites are filled by normalized convolution; image borders use
    replicated edges. The operator is linear in the input.
    """
    mosaic = np.asarray(mosaic, dtype=np.float32)
    if mosaic.ndim != 2:
        raise DataError(f"mosaic must be 2-D, got shape {mosaic.shape}")
    h, w = mosaic.shape
    if h % 2 or w % 2:
        raise DataError(f"mosaic dimensions must be even, got {w}x{h}")
    layout = cfa.layout
    site = np.tile(layout, ((h + 1) // 2, (w + 1) // 2))[:h, :w]
    out = np.empty((h, w, 3), dtype=np.float32)
    for ch in range(3):
        mask = (site == ch).astype(np.float32)
        kernel = _KERNEL_G if ch == 1 else _KERNEL_RB
        num = ndimage.convolve(mosaic * mask, kernel, mode="nearest")
        den = ndimage.convolve(mask, kernel, mode="nearest")
        out[:, :, ch] = num / den
    return out


def white_balance(img: np.ndarray, gains) -> np.ndarray:
    """Per-channel multiply; no clamping (that is deferred to gamma encode)."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"white_balance expects (h, w, 3), got {img.shape}")
    return img * np.asarray(gains, dtype=np.float32)


def color_correct(img: np.ndarray, ccm) -> np.ndarray:
    """Apply a 3x3 color-correction matrix to every pixel."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"color_correct expects (h, w, 3), got {img.shape}")
    m = np.asarray(ccm, dtype=np.float32).reshape(3, 3)
    return img @ m.T


def gamma_encode(img: np.ndarray) -> np.ndarray:
    """sRGB transfer function; input is clamped to [0,1] first."""
    x = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    lo = x <= 0.0031308
    out = np.where(lo, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4, dtype=np.float32) - 0.055)
    return out.astype(np.float32)


def gamma_decode(img: np.ndarray) -> np.ndarray:
    """Inverse sRGB transfer function."""
    x = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    lo = x <= 0.04045
    out = np.where(lo, x / 12.92, np.power((x + 0.055) / 1.055, 2.4, dtype=np.float32))
    return out.astype(np.float32)


def run_isp(frame: RawFrame, cfg: IspConfig | None = None) -> np.ndarray:
    """Run the configured ISP stages on a raw frame.

    The config may come from a donor frame's metadata (flash-only frames carry
    the ambient frame's metadata). Returns gamma-encoded RGB for the full
    stage set, linear RGB for linear_only.
    """
    if cfg is None:
        cfg = IspConfig.from_meta(frame.meta)
    lin = linearize(frame)
    rgb = demosaic_bilinear(lin, frame.cfa)
    rgb = white_balance(rgb, cfg.wb_gains)
    if cfg.stage_set is StageSet.LINEAR_ONLY:
        return rgb
    rgb = color_correct(rgb, cfg.ccm)
    if cfg.gamma is GammaMode.SRGB:
        rgb = gamma_encode(rgb)
    else:
        rgb = np.clip(rgb, 0.0, 1.0)
    return rgb


def run_isp_linear_rgb(img: np.ndarray, cfg: IspConfig) -> np.ndarray:
    """Finish an already-linear RGB image: color matrix + gamma (full set)."""
    if cfg.stage_set is StageSet.LINEAR_ONLY:
        return np.asarray(img, dtype=np.float32)
    out = color_correct(img, cfg.ccm)
    return gamma_encode(out) if cfg.gamma is GammaMode.SRGB else np.clip(out, 0.0, 1.0)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.709 luma of an RGB image, computed in the image's own space."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"to_grayscale expects (h, w, 3), got {img.shape}")
    return img @ LUMA_WEIGHTS
