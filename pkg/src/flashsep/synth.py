"""Synthetic flash-reflection datasets with ground truth.

An ambient image is composed from a transmission and a reflection layer in
linear space, I_a = 0.61 * T + 0.22 * R, and the flash image adds the
(equally dimmed) flash-only layer, I_f = I_a + 0.61 * F. Misaligned variants
move only the flash side: the transmission and flash-only layers are warped
by one transform, the reflection layer by another, and the warped layers are
merged in linear space. The warping flows are emitted as ground truth.

All randomness is driven by explicit seeds; a sample is a pure function of
(sources, recipe, seed).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from . import formats, geometry, isp

TRANSMITTANCE_DEFAULT = 0.61
REFLECTANCE_DEFAULT = 0.22


@dataclass
class SynthRecipe:
    transmittance: float = TRANSMITTANCE_DEFAULT
    reflectance: float = REFLECTANCE_DEFAULT
    crop_scale: float = 0.8
    size_multiple: int = 32
    misalign_mode: str = "none"  # none | homography | depth
    homography_max_disp: float = 8.0
    max_translation_mm: float = 5.0
    max_rotation_deg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.transmittance <= 1 and 0 < self.reflectance <= 1):
            raise DataError("transmittance/reflectance must lie in (0, 1]")
        if self.size_multiple < 1:
            raise DataError("size_multiple must be >= 1")
        if self.misalign_mode not in ("none", "homography", "depth"):
            raise DataError(f"unknown misalign_mode {self.misalign_mode!r}")

    def to_dict(self) -> dict:
        return {
            "transmittance": self.transmittance,
            "reflectance": self.reflectance,
            "crop_scale": self.crop_scale,
            "size_multiple": self.size_multiple,
            "misalign_mode": self.misalign_mode,
            "homography_max_disp": self.homography_max_disp,
            "max_translation_mm": self.max_translation_mm,
            "max_rotation_deg": self.max_rotation_deg,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthRecipe":
        return cls(**{k: doc[k] for k in doc if k in cls.__dataclass_fields__})


@dataclass
class SynthSample:
    """One synthetic sample: images, ground truth, and provenance."""

    ambient: np.ndarray        # I_a, aligned composition
    flash: np.ndarray          # I_f (misaligned when mode != none)
    flash_only: np.ndarray     # flash-only layer actually present in I_f
    gt_transmission: np.ndarray  # T_a, aligned with I_a
    gt_reflection: np.ndarray    # R_a, aligned with I_a
    validity: np.ndarray
    seed: int
    recipe: SynthRecipe
    clamp_fraction: float
    flow_t: np.ndarray | None = None
    flow_r: np.ndarray | None = None


def prepare_source(img_rgb: np.ndarray, resize_half: bool = False) -> np.ndarray:
    """Undo gamma to mimic raw data; optionally halve size in linear space."""
    lin = isp.gamma_decode(img_rgb)
    if resize_half:
        h, w = lin.shape[:2]
        h2, w2 = (h // 2) * 2, (w // 2) * 2
        lin = lin[:h2, :w2]
        if lin.ndim == 3:
            lin = lin.reshape(h2 // 2, 2, w2 // 2, 2, lin.shape[2]).mean(axis=(1, 3))
        else:
            lin = lin.reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))
    return lin.astype(np.float32)


def _crop_window(rng: np.random.Generator, h: int, w: int, recipe: SynthRecipe):
    """Sample a random crop window at crop_scale, rounded down to multiples."""
    m = recipe.size_multiple
    ch = max(m, int(h * recipe.crop_scale) // m * m)
    cw = max(m, int(w * recipe.crop_scale) // m * m)
    if ch > h or cw > w:
        raise DataError(f"image {w}x{h} too small for crop multiple {m}")
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    return y0, x0, ch, cw


def _check_dims(t_src, r_src, f_src):
    if t_src.shape != r_src.shape or t_src.shape != f_src.shape:
        raise DataError(
            f"source layer shapes differ: T {t_src.shape}, R {r_src.shape}, "
            f"F {f_src.shape}")


def compose_aligned(
    t_src: np.ndarray,
    r_src: np.ndarray,
    f_src: np.ndarray,
    recipe: SynthRecipe,
    rng: np.random.Generator | None = None,
) -> SynthSample:
    """Compose an aligned sample from transmission/reflection/flash-only layers.

    The identical crop window is applied to all layers; values are kept
    unclamped so I_f - I_a equals the flash-only layer exactly in float, with
    the fraction of pixels exceeding 1 reported as clamp_fraction.
    """
    t_src = np.asarray(t_src, dtype=np.float32)
    r_src = np.asarray(r_src, dtype=np.float32)
    f_src = np.asarray(f_src, dtype=np.float32)
    _check_dims(t_src, r_src, f_src)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(recipe.seed))
    window = _crop_window(rng, *t_src.shape[:2], recipe)
    return _compose_with_window(t_src, r_src, f_src, recipe, window)


def _compose_with_window(t_src, r_src, f_src, recipe: SynthRecipe, window) -> SynthSample:
    y0, x0, ch, cw = window
    sl = np.s_[y0:y0 + ch, x0:x0 + cw]
    t_a = np.float32(recipe.transmittance) * t_src[sl]
    r_a = np.float32(recipe.reflectance) * r_src[sl]
    fo = np.float32(recipe.transmittance) * f_src[sl]
    ambient = t_a + r_a
    flash = ambient + fo
    # store layers as the realized differences so I_f - I_a and I_a - R_a
    # are exact in float
    fo = flash - ambient
    t_a = ambient - r_a
    clamp_fraction = float(np.count_nonzero(flash > 1.0)) / flash[..., 0].size \
        if flash.ndim == 3 else float(np.count_nonzero(flash > 1.0)) / flash.size
    return SynthSample(
        ambient=ambient,
        flash=flash,
        flash_only=fo,
        gt_transmission=t_a,
        gt_reflection=r_a,
        validity=np.ones((ch, cw), dtype=bool),
        seed=recipe.seed,
        recipe=recipe,
        clamp_fraction=clamp_fraction,
    )


def _random_corner_homography(
    rng: np.random.Generator, width: int, height: int, max_disp: float
) -> np.ndarray:
    """Homography fit to the 4 image corners perturbed uniformly in [-d, d]^2."""
    corners = np.array([
        [0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1],
    ], dtype=np.float64)
    if max_disp == 0:
        return np.eye(3)
    disp = rng.uniform(-max_disp, max_disp, size=(4, 2))
    return geometry.estimate_homography(corners, corners + disp, method="dlt")


def synth_misaligned_homography(
    t_src: np.ndarray,
    r_src: np.ndarray,
    f_src: np.ndarray,
    recipe: SynthRecipe,
    rng: np.random.Generator | None = None,
) -> SynthSample:
    """Misalign the flash side with two random corner-perturbation homographies.

    The transmission and flash-only layers move together (H_T); the
    reflection layer moves independently (H_R). The ambient composition stays
    fixed, so the ground truth remains aligned with I_a.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(recipe.seed))
    aligned = compose_aligned(t_src, r_src, f_src, recipe, rng=rng)
    ch, cw = aligned.ambient.shape[:2]
    h_t = _random_corner_homography(rng, cw, ch, recipe.homography_max_disp)
    h_r = _random_corner_homography(rng, cw, ch, recipe.homography_max_disp)
    flow_t = geometry.homography_to_flow(h_t, cw, ch)
    flow_r = geometry.homography_to_flow(h_r, cw, ch)
    return _merge_warped(aligned, flow_t, flow_r)


def synth_misaligned_depth(
    t_src: np.ndarray,
    r_src: np.ndarray,
    f_src: np.ndarray,
    depth_t: np.ndarray,
    depth_r: np.ndarray,
    recipe: SynthRecipe,
    rng: np.random.Generator | None = None,
    focal_px: float | None = None,
) -> SynthSample:
    """Misalign the flash side with depth-dependent reprojection flows.

    One rigid camera motion is sampled within the recipe bounds; the
    transmission/flash-only layers follow the transmission depth, the
    reflection layer follows the reflection depth.
    """
    depth_t = np.asarray(depth_t, dtype=np.float32)
    depth_r = np.asarray(depth_r, dtype=np.float32)
    if depth_t.shape != np.asarray(t_src).shape[:2] or depth_r.shape != depth_t.shape:
        raise DataError("depth maps must match the source image dimensions")
    if np.any(depth_t <= 0) or np.any(depth_r <= 0):
        raise DataError("depth values must be positive")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(recipe.seed))
    t_src = np.asarray(t_src, dtype=np.float32)
    r_src = np.asarray(r_src, dtype=np.float32)
    f_src = np.asarray(f_src, dtype=np.float32)
    _check_dims(t_src, r_src, f_src)
    # one crop window shared by the image layers and the depth maps
    window = _crop_window(rng, *t_src.shape[:2], recipe)
    aligned = _compose_with_window(t_src, r_src, f_src, recipe, window)
    y0, x0, ch, cw = window
    sl = np.s_[y0:y0 + ch, x0:x0 + cw]
    motion = geometry.CameraMotion(
        rotation_deg=tuple(rng.uniform(-recipe.max_rotation_deg,
                                       recipe.max_rotation_deg, size=3)),
        translation_mm=tuple(rng.uniform(-recipe.max_translation_mm,
                                         recipe.max_translation_mm, size=3)),
        focal_px=focal_px,
    )
    flow_t, valid_t = geometry.depth_reproject_flow(depth_t[sl], motion)
    flow_r, valid_r = geometry.depth_reproject_flow(depth_r[sl], motion)
    sample = _merge_warped(aligned, flow_t, flow_r)
    sample.validity &= valid_t & valid_r
    return sample


def _merge_warped(aligned: SynthSample, flow_t: np.ndarray, flow_r: np.ndarray) -> SynthSample:
    """Warp the flash-side layers and merge them into a misaligned flash image."""
    if not flow_t.any() and not flow_r.any():
        # zero flow is the identity warp; keep the aligned bytes
        return replace(aligned, flow_t=flow_t, flow_r=flow_r)
    warped_t, valid_t = geometry.warp_by_flow(aligned.gt_transmission, flow_t)
    warped_fo, _ = geometry.warp_by_flow(aligned.flash_only, flow_t)
    warped_r, valid_r = geometry.warp_by_flow(aligned.gt_reflection, flow_r)
    flash = warped_t + warped_fo + warped_r
    return SynthSample(
        ambient=aligned.ambient,
        flash=flash,
        flash_only=warped_fo,
        gt_transmission=aligned.gt_transmission,
        gt_reflection=aligned.gt_reflection,
        validity=aligned.validity & valid_t & valid_r,
        seed=aligned.seed,
        recipe=aligned.recipe,
        clamp_fraction=aligned.clamp_fraction,
        flow_t=flow_t,
        flow_r=flow_r,
    )


# ---------------------------------------------------------------------------
# Batch driver

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def sample_seed(master_seed: int, index: int) -> int:
    """Deterministic per-sample seed derived from (master seed, index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _load_linear(path: Path) -> np.ndarray:
    if path.suffix == ".lfr":
        return formats.read_lfr(path)
    if path.suffix == ".ppm":
        return prepare_source(formats.read_ppm(path))
    raise DataError(f"unsupported source format {path.suffix!r} for {path}")


def _generate_one(entry: dict, refl_path: str, index: int, recipe: SynthRecipe,
                  base_dir: Path, out_dir: Path) -> dict:
    seed = sample_seed(recipe.seed, index)
    rec = replace(recipe, seed=seed)
    t_src = _load_linear(base_dir / entry["transmission"])
    f_src = _load_linear(base_dir / entry["flash_only"])
    r_src = _load_linear(base_dir / refl_path)
    if rec.misalign_mode == "none":
        sample = compose_aligned(t_src, r_src, f_src, rec)
    elif rec.misalign_mode == "homography":
        sample = synth_misaligned_homography(t_src, r_src, f_src, rec)
    else:
        depth_t = formats.read_lfr(base_dir / entry["depth_transmission"])
        depth_r = formats.read_lfr(base_dir / entry["depth_reflection"])
        sample = synth_misaligned_depth(t_src, r_src, f_src, depth_t, depth_r, rec)
    sample_id = f"{entry['id']}_{index:04d}"
    files = {}
    for role, img in [
        ("ambient", sample.ambient),
        ("flash", sample.flash),
        ("flash_only", sample.flash_only),
        ("gt_transmission", sample.gt_transmission),
        ("gt_reflection", sample.gt_reflection),
    ]:
        name = f"{sample_id}_{role}.lfr"
        formats.write_lfr(out_dir / name, img)
        files[role] = name
    if sample.flow_t is not None:
        for role, arr in [("flow_t", sample.flow_t), ("flow_r", sample.flow_r)]:
            name = f"{sample_id}_{role}.lfr"
            formats.write_lfr(out_dir / name, arr)
            files[role] = name
        name = f"{sample_id}_validity.lfr"
        formats.write_lfr(out_dir / name, sample.validity.astype(np.float32))
        files["validity"] = name
    checksums = {role: _sha256(out_dir / name) for role, name in files.items()}
    return {
        "id": sample_id,
        "files": files,
        "seed": seed,
        "clamp_fraction": sample.clamp_fraction,
        "clamp_flagged": sample.clamp_fraction > 0.01,
        "checksums": checksums,
    }


def emit_dataset(
    manifest_in, recipe: SynthRecipe, out_dir, threads: int = 1
) -> dict:
    """Generate samples for every (source, reflection) pairing in a manifest.

    The input manifest is JSON: {"sources": [{"id", "transmission",
    "flash_only", "reflections": [...], ...}]} with paths relative to the
    manifest. Each source contributes one sample per listed reflection. The
    output manifest lists every file with checksums; per-sample seeds are
    derived from (recipe.seed, sample index), so the result is byte-identical
    across thread counts and re-runs.
    """
    manifest_path = Path(manifest_in)
    doc = json.loads(manifest_path.read_text())
    base_dir = manifest_path.parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    index = 0
    for entry in doc.get("sources", []):
        for refl in entry["reflections"]:
            jobs.append((entry, refl, index))
            index += 1
    if threads > 1 and jobs:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(
                lambda j: _generate_one(j[0], j[1], j[2], recipe, base_dir, out_dir),
                jobs))
    else:
        rows = [_generate_one(e, r, i, recipe, base_dir, out_dir) for e, r, i in jobs]
    manifest = {
        "version": 1,
        "recipe": recipe.to_dict(),
        "samples": rows,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
