"""The reflection-free flash-only cue.

For a linear-response camera the flash image is the sum of the ambient image
and the flash-only image, so in linear space

    I_fo = I_f - (e_f / e_a) * I_a

where e_a and e_f are the ambient and flash exposure times. The flash-only
image is what a camera would see in a dark room lit only by the flash, and it
is visually free of the reflections present in the ambient image. The formula
breaks at saturated pixels, which are reported in a mask rather than patched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from . import isp
from .rawcore import (
    CaptureMeta,
    CFAPattern,
    RawFrame,
    delinearize,
    linearize,
    saturation_mask,
    saturation_mask_linear,
)


class PairSpace(str, Enum):
    RAW_MOSAIC = "raw_mosaic"
    LINEAR_RGB = "linear_rgb"


@dataclass
class FlashPair:
    """An ambient/flash capture pair in a common space.

    ambient and flash are either two RawFrames (raw_mosaic space) or two
    linear float arrays (linear_rgb space, exposures given explicitly).
    """

    ambient: RawFrame | np.ndarray
    flash: RawFrame | np.ndarray
    space: PairSpace = PairSpace.RAW_MOSAIC
    exposure_a_ms: float | None = None
    exposure_f_ms: float | None = None

    def __post_init__(self):
        self.space = PairSpace(self.space)
        if isinstance(self.ambient, RawFrame) and isinstance(self.flash, RawFrame):
            a, f = self.ambient, self.flash
            if a.data.shape != f.data.shape:
                raise DataError(
                    f"pair shapes differ: {a.data.shape} vs {f.data.shape}")
            if a.cfa != f.cfa:
                raise DataError(f"CFA patterns differ: {a.cfa} vs {f.cfa}")
            if self.exposure_a_ms is None:
                self.exposure_a_ms = a.meta.exposure_ms
            if self.exposure_f_ms is None:
                self.exposure_f_ms = f.meta.exposure_ms
        else:
            a = np.asarray(self.ambient, dtype=np.float32)
            f = np.asarray(self.flash, dtype=np.float32)
            if a.shape != f.shape:
                raise DataError(f"pair shapes differ: {a.shape} vs {f.shape}")
            self.ambient, self.flash = a, f
            if self.exposure_a_ms is None or self.exposure_f_ms is None:
                raise DataError("exposure times required for array pairs")
        if self.exposure_a_ms <= 0 or self.exposure_f_ms <= 0:
            raise DataError("exposure times must be positive")

    @property
    def exposure_ratio(self) -> float:
        return self.exposure_f_ms / self.exposure_a_ms


@dataclass
class FlashOnlyResult:
    """Flash-only image plus its saturation mask and clamping report."""

    image: np.ndarray
    mask: np.ndarray  # True where either input was saturated
    clamped: int  # negative residuals clamped to zero (0 in signed mode)
    exposure_ratio: float

    @property
    def clamped_fraction(self) -> float:
        return self.clamped / self.image[..., 0].size if self.image.ndim == 3 \
            else self.clamped / self.image.size


def compute_flash_only(
    pair: FlashPair, signed: bool = False, margin: float = 0.02
) -> FlashOnlyResult:
    """Compute the flash-only image with exposure compensation.

    Subtraction happens in [0,1] linear space. Negative residuals (sensor
    noise) are clamped at zero unless signed=True; the clamp count is
    reported, never silently dropped. In raw_mosaic space the Bayer layout is
    preserved.
    """
    ratio = np.float32(pair.exposure_ratio)
    if pair.space is PairSpace.RAW_MOSAIC:
        lin_a = linearize(pair.ambient)
        lin_f = linearize(pair.flash)
        mask = saturation_mask(pair.ambient, pair.flash, margin)
    else:
        lin_a, lin_f = pair.ambient, pair.flash
        mask = saturation_mask_linear(lin_a, lin_f, margin)
    fo = lin_f - ratio * lin_a
    if signed:
        clamped = 0
    else:
        clamped = int(np.count_nonzero(fo < 0))
        np.clip(fo, 0.0, None, out=fo)
    return FlashOnlyResult(
        image=fo.astype(np.float32),
        mask=mask,
        clamped=clamped,
        exposure_ratio=float(ratio),
    )


def reconstruct_flash(
    ambient: np.ndarray, flash_only: np.ndarray, exposure_ratio: float = 1.0
) -> tuple[np.ndarray, int]:
    """Invert the subtraction: I_f = ratio * I_a + I_fo, clamped to [0,1].

    Returns the flash image and the number of pixels clamped at the top.
    """
    ambient = np.asarray(ambient, dtype=np.float32)
    flash_only = np.asarray(flash_only, dtype=np.float32)
    if ambient.shape != flash_only.shape:
        raise DataError(
            f"shape mismatch: {ambient.shape} vs {flash_only.shape}")
    flash = np.float32(exposure_ratio) * ambient + flash_only
    overflow = int(np.count_nonzero(flash > 1.0))
    np.clip(flash, 0.0, 1.0, out=flash)
    return flash, overflow


def flash_only_to_rgb(
    flash_only_mosaic: np.ndarray,
    donor_meta: CaptureMeta,
    cfa: CFAPattern = CFAPattern.RGGB,
    cfg: "isp.IspConfig | None" = None,
) -> np.ndarray:
    """Render a flash-only mosaic to display RGB using donor metadata.

    The flash-only image has no metadata of its own, so the ambient frame's
    metadata drives the ISP (white balance is therefore approximate).
    """
    frame = delinearize(flash_only_mosaic, donor_meta, cfa=cfa)
    if cfg is None:
        cfg = isp.IspConfig.from_meta(donor_meta)
    return isp.run_isp(frame, cfg)
