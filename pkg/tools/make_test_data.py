"""Regenerate the frozen golden files in tests/data.

Run from the repository root:  python3 tools/make_test_data.py
The outputs are deterministic; committed goldens guard against regressions.
"""

import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from flashsep import CaptureMeta, CFAPattern, FlashPair, compute_flash_only, run_isp
from flashsep.formats import write_lfr, write_ppm, write_raw_frame
from flashsep.rawcore import delinearize

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def smooth(h, w, seed, lo=0.05, hi=0.9):
    rng = np.random.default_rng(seed)
    base = rng.random((h // 8, w // 8))
    img = ndimage.zoom(base, (h / base.shape[0], w / base.shape[1]), order=3)[:h, :w]
    img = (img - img.min()) / (img.max() - img.min())
    return (lo + (hi - lo) * img).astype(np.float32)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    meta = CaptureMeta(
        black_level=(64, 64, 64, 64), white_level=1023, exposure_ms=60.0,
        iso=100, wb_gains=(1.8, 1.0, 1.5),
        ccm=(1.6, -0.4, -0.2, -0.3, 1.5, -0.2, -0.1, -0.5, 1.6))

    # mosaic + its full-ISP rendering
    mosaic = smooth(64, 64, seed=11)
    frame = delinearize(mosaic, meta, cfa=CFAPattern.RGGB)
    write_raw_frame(DATA / "mosaic.pgm", frame)
    write_ppm(DATA / "isp_golden.ppm", run_isp(frame), depth=8)

    # ambient/flash pair (different exposures) + golden flash-only image
    ambient_lin = smooth(64, 64, seed=21, lo=0.05, hi=0.55)
    flash_layer = smooth(64, 64, seed=22, lo=0.0, hi=0.35)
    ambient = delinearize(ambient_lin, meta, cfa=CFAPattern.RGGB)
    meta_f = CaptureMeta(
        black_level=meta.black_level, white_level=meta.white_level,
        exposure_ms=40.0, iso=meta.iso, wb_gains=meta.wb_gains, ccm=meta.ccm,
        illumination="flash")
    ratio = meta_f.exposure_ms / meta.exposure_ms
    from flashsep.rawcore import linearize
    flash_lin = ratio * linearize(ambient) + flash_layer
    flash = delinearize(flash_lin, meta_f, cfa=CFAPattern.RGGB)
    write_raw_frame(DATA / "ambient.pgm", ambient)
    write_raw_frame(DATA / "flash.pgm", flash)
    result = compute_flash_only(FlashPair(ambient=ambient, flash=flash))
    write_lfr(DATA / "fo_golden.lfr", result.image)
    print("golden files written to", DATA)


if __name__ == "__main__":
    main()
