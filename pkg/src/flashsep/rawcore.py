"""Raw frame data model and linearization.

A raw frame is a single-channel Bayer mosaic of unsigned 16-bit samples plus
capture metadata (black/white levels, exposure, white balance, color matrix).
Linearization maps samples to [0,1] floats proportional to scene radiance:

    linear = (sample - black) / (white - black)

with the black level resolved per CFA site (cameras commonly report four
values, one per 2x2 mosaic position).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError


class CFAPattern(str, Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    @property
    def layout(self) -> np.ndarray:
        """2x2 array of channel indices (0=R, 1=G, 2=B) for this pattern."""
        idx = {"R": 0, "G": 1, "B": 2}
        s = self.value
        return np.array([[idx[s[0]], idx[s[1]]], [idx[s[2]], idx[s[3]]]], dtype=np.int8)


class Illumination(str, Enum):
    AMBIENT = "ambient"
    FLASH = "flash"
    FLASH_ONLY = "flash_only"


@dataclass(frozen=True)
class CaptureMeta:
    """Per-capture metadata needed for linearization and ISP.

    black_level holds one value per CFA site in pattern order (top-left,
    top-right, bottom-left, bottom-right); a scalar is broadcast to all four.
    """

    black_level: tuple[float, float, float, float]
    white_level: float
    exposure_ms: float
    iso: float = 100.0
    wb_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ccm: tuple[float, ...] = (1, 0, 0, 0, 1, 0, 0, 0, 1)
    illumination: Illumination = Illumination.AMBIENT

    def __post_init__(self):
        bl = self.black_level
        if np.isscalar(bl):
            bl = (float(bl),) * 4
        else:
            bl = tuple(float(v) for v in bl)
            if len(bl) == 1:
                bl = bl * 4
            if len(bl) != 4:
                raise ConfigError(f"black_level needs 1 or 4 values, got {len(bl)}")
        object.__setattr__(self, "black_level", bl)
        object.__setattr__(self, "wb_gains", tuple(float(g) for g in self.wb_gains))
        object.__setattr__(self, "ccm", tuple(float(c) for c in self.ccm))
        if isinstance(self.illumination, str) and not isinstance(self.illumination, Illumination):
            object.__setattr__(self, "illumination", Illumination(self.illumination))
        if self.white_level <= max(self.black_level):
            raise ConfigError(
                f"white_level {self.white_level} must exceed black levels {self.black_level}"
            )
        if self.exposure_ms <= 0:
            raise ConfigError(f"exposure_ms must be positive, got {self.exposure_ms}")
        if any(g <= 0 for g in self.wb_gains):
            raise ConfigError(f"wb_gains must all be positive, got {self.wb_gains}")
        if len(self.ccm) != 9:
            raise ConfigError("ccm must have 9 entries (3x3 row-major)")

    @property
    def ccm_matrix(self) -> np.ndarray:
        return np.asarray(self.ccm, dtype=np.float32).reshape(3, 3)

    def black_level_map(self, height: int, width: int) -> np.ndarray:
        """Tile the per-site black levels over a full mosaic."""
        tile = np.asarray(self.black_level, dtype=np.float32).reshape(2, 2)
        reps = ((height + 1) // 2, (width + 1) // 2)
        return np.tile(tile, reps)[:height, :width]


@dataclass
class RawFrame:
    """Single-channel Bayer mosaic with metadata.

    data is a (height, width) uint16 array; every sample must be at or below
    the white level declared in meta.
    """

    data: np.ndarray
    cfa: CFAPattern
    meta: CaptureMeta

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise DataError(f"raw data must be 2-D, got shape {self.data.shape}")
        if self.data.dtype != np.uint16:
            if np.any(self.data < 0) or np.any(self.data > 65535):
                raise DataError("raw samples out of uint16 range")
            self.data = self.data.astype(np.uint16)
        if isinstance(self.cfa, str) and not isinstance(self.cfa, CFAPattern):
            self.cfa = CFAPattern(self.cfa)
        if np.any(self.data > self.meta.white_level):
            raise DataError("raw samples exceed the declared white level")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def linearize(frame: RawFrame, clamp: bool = True) -> np.ndarray:
    """Map raw samples to [0,1] linear floats, mosaic layout preserved.

    Each site uses its own black level: (s - black) / (white - black).
    With clamp=False, negative noise residuals below black are kept.
    """
    h, w = frame.data.shape
    black = frame.meta.black_level_map(h, w)
    denom = np.float32(frame.meta.white_level) - black
    if np.any(denom <= 0):
        raise ConfigError("white level must exceed every black level")
    out = (frame.data.astype(np.float32) - black) / denom
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out.astype(np.float32)


@dataclass
class DelinearizeStats:
    clipped_low: int = 0
    clipped_high: int = 0


def delinearize(
    img: np.ndarray,
    meta: CaptureMeta,
    cfa: CFAPattern = CFAPattern.RGGB,
    stats: DelinearizeStats | None = None,
) -> RawFrame:
    """Inverse of :func:`linearize` with round-to-nearest.

    Values outside [0,1] are clamped; the clamp counts are recorded in
    ``stats`` when provided. Round-trip error is at most one sample step.
    """
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2:
        raise DataError("delinearize expects a single-channel mosaic image")
    if stats is not None:
        stats.clipped_low = int(np.count_nonzero(img < 0.0))
        stats.clipped_high = int(np.count_nonzero(img > 1.0))
    x = np.clip(img, 0.0, 1.0)
    h, w = x.shape
    black = meta.black_level_map(h, w)
    samples = np.rint(x * (np.float32(meta.white_level) - black) + black)
    samples = np.clip(samples, 0, meta.white_level).astype(np.uint16)
    return RawFrame(data=samples, cfa=cfa, meta=meta)


def saturation_mask(a: RawFrame, b: RawFrame, margin: float = 0.02) -> np.ndarray:
    """Boolean mask of pixels saturated in either frame.

    A pixel is marked when its sample is at or above (1 - margin) times the
    frame's own white level.
    """
    if a.data.shape != b.data.shape:
        raise DataError(f"frame shapes differ: {a.data.shape} vs {b.data.shape}")
    mask_a = a.data >= (1.0 - margin) * a.meta.white_level
    mask_b = b.data >= (1.0 - margin) * b.meta.white_level
    return mask_a | mask_b


def saturation_mask_linear(a: np.ndarray, b: np.ndarray, margin: float = 0.02) -> np.ndarray:
    """Saturation mask for already-linearized [0,1] images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    mask = (a >= 1.0 - margin) | (b >= 1.0 - margin)
    if mask.ndim == 3:
        mask = mask.any(axis=2)
    return mask
