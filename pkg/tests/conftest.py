import numpy as np
import pytest
from scipy import ndimage

from flashsep import CaptureMeta, CFAPattern, RawFrame
from flashsep.rawcore import delinearize


def smooth_image(height, width, channels=3, seed=0, lo=0.05, hi=0.9):
    """Band-limited random image in [lo, hi]; deterministic per seed."""
    rng = np.random.default_rng(seed)
    base = rng.random((max(height // 8, 2), max(width // 8, 2), channels))
    img = ndimage.zoom(base, (height / base.shape[0], width / base.shape[1], 1), order=3)
    img = img[:height, :width]
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    out = (lo + (hi - lo) * img).astype(np.float32)
    return out[:, :, 0] if channels == 1 else out


def default_meta(exposure_ms=10.0, black=64, white=1023, **kw) -> CaptureMeta:
    return CaptureMeta(black_level=(black,) * 4, white_level=white,
                       exposure_ms=exposure_ms, **kw)


def frame_from_linear(mosaic, meta=None, cfa=CFAPattern.RGGB) -> RawFrame:
    """Quantize a [0,1] linear mosaic into a RawFrame."""
    if meta is None:
        meta = default_meta()
    return delinearize(np.asarray(mosaic, dtype=np.float32), meta, cfa=cfa)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
