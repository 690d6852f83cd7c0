"""Homographies, dense flow fields, warping, and depth reprojection.

Conventions:
  * Pixel coordinates are (x, y) with x along columns; the pixel center of
    column j, row i is (j, i).
  * A flow field is an (h, w, 2) float32 array of (u, v) displacements.
  * Warping is backward: out(p) = bilinear_sample(src, p + flow(p)). A flow
    produced by homography_to_flow(H) therefore warps an image *by* H in the
    sense out(p) = src(H p).
  * Homographies are 3x3 with h33 normalized to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale so h33 = 1 and verify invertibility."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise DataError(f"homography must be 3x3, got {h.shape}")
    if abs(h[2, 2]) < 1e-12:
        raise DataError("homography h33 is (near) zero, cannot normalize")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DataError("homography is singular")
    return h


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Project (n, 2) points through a homography."""
    pts = np.asarray(pts, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    ones = np.ones((pts.shape[0], 1))
    proj = np.hstack([pts, ones]) @ np.asarray(h, dtype=np.float64).T
    out = proj[:, :2] / proj[:, 2:3]
    return out[0] if single else out


def homography_to_flow(h: np.ndarray, width: int, height: int) -> np.ndarray:
    """Dense flow with flow(p) = H p - p at every pixel center."""
    h = np.asarray(h, dtype=np.float64)
    xx, yy = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    denom = h[2, 0] * xx + h[2, 1] * yy + h[2, 2]
    px = (h[0, 0] * xx + h[0, 1] * yy + h[0, 2]) / denom
    py = (h[1, 0] * xx + h[1, 1] * yy + h[1, 2]) / denom
    return np.stack([px - xx, py - yy], axis=2).astype(np.float32)


def warp_by_flow(
    src: np.ndarray, flow: np.ndarray, boundary: str = "zero"
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-warp src by a dense flow with bilinear sampling.

    Returns (warped, validity). Under the "zero" policy, samples whose
    bilinear footprint leaves the source are zero and flagged invalid; under
    "clamp" the source is edge-extended and everything is valid.
    """
    src = np.asarray(src, dtype=np.float32)
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DataError(f"flow must be (h, w, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    if src.shape[:2] != (h, w):
        raise DataError(f"src shape {src.shape[:2]} != flow shape {(h, w)}")
    if boundary not in ("zero", "clamp"):
        raise DataError(f"unknown boundary policy {boundary!r}")
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float32),
                         np.arange(h, dtype=np.float32))
    sx = xx + flow[:, :, 0]
    sy = yy + flow[:, :, 1]
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    coords = np.stack([sy.ravel(), sx.ravel()])
    mode = "constant" if boundary == "zero" else "nearest"

    def sample(plane: np.ndarray) -> np.ndarray:
        out = ndimage.map_coordinates(
            plane.astype(np.float64), coords, order=1, mode=mode, cval=0.0)
        return out.reshape(h, w).astype(np.float32)

    if src.ndim == 2:
        warped = sample(src)
    else:
        warped = np.stack([sample(src[:, :, c]) for c in range(src.shape[2])], axis=2)
    if boundary == "zero":
        if src.ndim == 3:
            warped *= valid[:, :, None]
        else:
            warped *= valid
        return warped, valid
    return warped, np.ones_like(valid)


def sample_flow(flow: np.ndarray, pts_xy: np.ndarray) -> np.ndarray:
    """Bilinearly sample a flow field at float (x, y) positions."""
    h, w = flow.shape[:2]
    pts = np.atleast_2d(np.asarray(pts_xy, dtype=np.float64))
    coords = np.stack([pts[:, 1], pts[:, 0]])
    u = ndimage.map_coordinates(flow[:, :, 0].astype(np.float64), coords, order=1, mode="nearest")
    v = ndimage.map_coordinates(flow[:, :, 1].astype(np.float64), coords, order=1, mode="nearest")
    return np.stack([u, v], axis=1)


def invert_flow(flow: np.ndarray, iterations: int = 10) -> np.ndarray:
    """Approximate inverse of a dense flow by fixed-point iteration.

    Solves g(p) + flow(p + g(p)) = 0, so that backward-warping by g undoes a
    backward warp by flow. Converges quickly for small, smooth flows.
    """
    h, w = flow.shape[:2]
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    g = -np.asarray(flow, dtype=np.float64).reshape(-1, 2)
    for _ in range(iterations):
        g = -sample_flow(flow, pts + g)
    return g.reshape(h, w, 2).astype(np.float32)


# ---------------------------------------------------------------------------
# Homography estimation

def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity transform mapping points to centroid 0, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 1e-12 else 1.0
    return np.array([
        [s, 0, -s * centroid[0]],
        [0, s, -s * centroid[1]],
        [0, 0, 1],
    ])


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT (least squares via SVD) for >= 4 correspondences."""
    t_src = _hartley_normalization(src)
    t_dst = _hartley_normalization(dst)
    ns = apply_homography(t_src, src)
    nd = apply_homography(t_dst, dst)
    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = ns[i]
        u, v = nd[i]
        a[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        a[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * max(sv[0], 1.0):
        raise DataError("degenerate correspondence configuration")
    h_norm = vt[-1].reshape(3, 3)
    return normalize_homography(np.linalg.inv(t_dst) @ h_norm @ t_src)


def reprojection_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    proj = apply_homography(h, src)
    return np.sqrt(((proj - dst) ** 2).sum(axis=1))


def estimate_homography(
    src: np.ndarray,
    dst: np.ndarray,
    method: str = "dlt",
    inlier_threshold: float = 2.0,
    iterations: int = 500,
    seed: int = 0,
) -> np.ndarray:
    """Estimate the homography mapping src points to dst points.

    method "dlt" fits all pairs; "ransac_dlt" runs seeded RANSAC over minimal
    4-point samples, then re-fits on the consensus set. Ties between equal
    consensus sizes are broken by lower total reprojection error. The sample
    sequence is drawn up front from a counter-based generator, so results do
    not depend on evaluation order.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise DataError("correspondence lists differ in length")
    n = src.shape[0]
    if n < 4:
        raise DataError(f"need at least 4 correspondences, got {n}")
    if method == "dlt":
        return _dlt(src, dst)
    if method != "ransac_dlt":
        raise DataError(f"unknown method {method!r}")

    rng = np.random.Generator(np.random.Philox(key=seed))
    samples = np.array([rng.choice(n, size=4, replace=False) for _ in range(iterations)])
    best = None  # (inlier_count, -total_error, inlier_mask)
    for idx in samples:
        try:
            h = _dlt(src[idx], dst[idx])
        except DataError:
            continue
        err = reprojection_errors(h, src, dst)
        inliers = err < inlier_threshold
        count = int(inliers.sum())
        if count < 4:
            continue
        score = (count, -float(err[inliers].sum()))
        if best is None or score > best[0]:
            best = (score, inliers)
    if best is None:
        raise DataError("RANSAC found no consensus set")
    return _dlt(src[best[1]], dst[best[1]])


def find_correspondences(
    a: np.ndarray,
    b: np.ndarray,
    grid_step: int = 16,
    patch: int = 11,
    search_radius: int = 10,
    min_score: float = 0.7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block-matching correspondences from image a to image b.

    Patches on a regular grid of a are matched against a search window in b by
    normalized cross-correlation. Textureless patches (NCC undefined) and
    matches below min_score are dropped. Returns (pts_a, pts_b, scores).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    if b.ndim == 3:
        b = b.mean(axis=2)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    half = patch // 2
    margin = half + search_radius
    pts_a, pts_b, scores = [], [], []
    for y in range(margin, h - margin, grid_step):
        for x in range(margin, w - margin, grid_step):
            ref = a[y - half:y + half + 1, x - half:x + half + 1]
            ref_c = ref - ref.mean()
            ref_norm = np.sqrt((ref_c ** 2).sum())
            if ref_norm < 1e-8:
                continue  # flat patch, NCC undefined
            best_score, best_dxy = -2.0, None
            for dy in range(-search_radius, search_radius + 1):
                for dx in range(-search_radius, search_radius + 1):
                    cand = b[y + dy - half:y + dy + half + 1,
                             x + dx - half:x + dx + half + 1]
                    cand_c = cand - cand.mean()
                    cand_norm = np.sqrt((cand_c ** 2).sum())
                    if cand_norm < 1e-8:
                        continue
                    score = float((ref_c * cand_c).sum() / (ref_norm * cand_norm))
                    if score > best_score:
                        best_score, best_dxy = score, (dx, dy)
            if best_dxy is not None and best_score >= min_score:
                pts_a.append((x, y))
                pts_b.append((x + best_dxy[0], y + best_dxy[1]))
                scores.append(best_score)
    return (np.asarray(pts_a, dtype=np.float64).reshape(-1, 2),
            np.asarray(pts_b, dtype=np.float64).reshape(-1, 2),
            np.asarray(scores, dtype=np.float64))


# ---------------------------------------------------------------------------
# Depth-based reprojection

@dataclass
class CameraMotion:
    """Rigid camera motion plus pinhole intrinsics.

    rotation_deg are ZYX Euler angles in degrees (applied as Rz @ Ry @ Rx);
    translation_mm is in millimeters while depth maps are in meters. When
    focal_px is None the convention focal = max(width, height) is used, with
    the principal point at the image center.
    """

    rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    focal_px: float | None = None
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        self.rotation_deg = tuple(float(r) for r in self.rotation_deg)
        self.translation_mm = tuple(float(t) for t in self.translation_mm)
        if max(abs(r) for r in self.rotation_deg) > 5.0:
            raise DataError(f"rotation angles limited to 5 degrees, got {self.rotation_deg}")

    @property
    def is_zero(self) -> bool:
        return all(r == 0 for r in self.rotation_deg) and \
            all(t == 0 for t in self.translation_mm)

    def rotation_matrix(self) -> np.ndarray:
        ax, ay, az = np.deg2rad(self.rotation_deg)
        cx, sx = np.cos(ax), np.sin(ax)
        cy, sy = np.cos(ay), np.sin(ay)
        cz, sz = np.cos(az), np.sin(az)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ ry @ rx

    def intrinsics(self, width: int, height: int) -> tuple[float, float, float]:
        f = self.focal_px if self.focal_px is not None else float(max(width, height))
        if self.principal_point is not None:
            cx, cy = self.principal_point
        else:
            cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
        return f, cx, cy


def depth_reproject_flow(
    depth: np.ndarray, motion: CameraMotion
) -> tuple[np.ndarray, np.ndarray]:
    """Flow induced by a rigid motion on a depth map (pinhole model).

    Each pixel is back-projected with its depth, moved by (R, t), and
    re-projected; flow = new - old pixel position. Points landing behind the
    camera are flagged invalid. Exactly zero motion yields an exactly zero
    flow. Returns (flow, validity).
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise DataError(f"depth must be 2-D, got shape {depth.shape}")
    if np.any(depth <= 0):
        raise DataError("depth values must be positive")
    h, w = depth.shape
    if motion.is_zero:
        return np.zeros((h, w, 2), dtype=np.float32), np.ones((h, w), dtype=bool)
    f, cx, cy = motion.intrinsics(w, h)
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    x3 = (xx - cx) * depth / f
    y3 = (yy - cy) * depth / f
    pts = np.stack([x3, y3, depth], axis=2)
    r = motion.rotation_matrix()
    t = np.asarray(motion.translation_mm, dtype=np.float64) / 1000.0
    moved = pts @ r.T + t
    z = moved[:, :, 2]
    valid = z > 1e-9
    z_safe = np.where(valid, z, 1.0)
    nx = f * moved[:, :, 0] / z_safe + cx
    ny = f * moved[:, :, 1] / z_safe + cy
    flow = np.stack([nx - xx, ny - yy], axis=2).astype(np.float32)
    flow[~valid] = 0.0
    return flow, valid
