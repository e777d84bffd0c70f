"""Planar homography estimation: normalized DLT plus seeded RANSAC."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import RansacFailedError
from .features import Match

RANSAC_SEED = 7
RANSAC_THRESHOLD_PX = 3.0
RANSAC_MAX_ITERS = 1000
RANSAC_MIN_INLIERS = 15
RANSAC_CONFIDENCE = 0.99


def _normalization(points: np.ndarray) -> np.ndarray:
    # Similarity that moves the centroid to the origin and the mean distance
    # to sqrt(2). Conditioning for the DLT system.
    centroid = points.mean(axis=0)
    d = np.hypot(*(points - centroid).T).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _is_degenerate(points: np.ndarray) -> bool:
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.allclose(points[i], points[j], atol=1e-9):
                return True
            for k in range(j + 1, n):
                ab = points[j] - points[i]
                ac = points[k] - points[i]
                if abs(ab[0] * ac[1] - ab[1] * ac[0]) < 1e-6:
                    return True
    return False


def homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares homography H with dst ~ H @ src, from >= 4 point pairs.

    Returns a 3x3 float array normalized so H[2, 2] == 1.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("expected matching (n, 2) arrays")
    if src.shape[0] < 4:
        raise ValueError("need at least 4 correspondences")
    ts = _normalization(src)
    td = _normalization(dst)
    sn = src @ ts[:2, :2].T + ts[:2, 2]
    dn = dst @ td[:2, :2].T + td[:2, 2]
    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = sn[:, 0]
    a[0::2, 1] = sn[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -dn[:, 0] * sn[:, 0]
    a[0::2, 7] = -dn[:, 0] * sn[:, 1]
    a[0::2, 8] = -dn[:, 0]
    a[1::2, 3] = sn[:, 0]
    a[1::2, 4] = sn[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -dn[:, 1] * sn[:, 0]
    a[1::2, 7] = -dn[:, 1] * sn[:, 1]
    a[1::2, 8] = -dn[:, 1]
    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-12:
        raise ValueError("degenerate solution")
    return h / h[2, 2]


def apply_homography(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    ones = np.ones((points.shape[0], 1))
    p = np.hstack([points, ones]) @ np.asarray(h, dtype=np.float64).T
    return p[:, :2] / p[:, 2:3]


def estimate_homography_ransac(
    matches: Sequence[Match],
    points_a: np.ndarray,
    points_b: np.ndarray,
    *,
    seed: int = RANSAC_SEED,
    threshold: float = RANSAC_THRESHOLD_PX,
    max_iters: int = RANSAC_MAX_ITERS,
    min_inliers: int = RANSAC_MIN_INLIERS,
    confidence: float = RANSAC_CONFIDENCE,
) -> tuple[np.ndarray, np.ndarray]:
    """Robustly fit H mapping points_b onto points_a over the given matches.

    Seeded minimal sampling with an adaptive trial count, then a final
    least-squares refit on the best consensus set. Returns (H, inlier_mask)
    with inlier_mask aligned to matches. Raises RansacFailedError when no
    model reaches min_inliers.
    """
    n = len(matches)
    if n < 4:
        raise RansacFailedError(f"need at least 4 matches, got {n}")
    src = np.asarray([points_b[m.index_b] for m in matches], dtype=np.float64)
    dst = np.asarray([points_a[m.index_a] for m in matches], dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_count = 0
    best_mask = None
    needed = max_iters
    trial = 0
    while trial < needed:
        idx = rng.choice(n, size=4, replace=False)
        sample_src = src[idx]
        sample_dst = dst[idx]
        trial += 1
        if _is_degenerate(sample_src) or _is_degenerate(sample_dst):
            continue
        try:
            h = homography_dlt(sample_src, sample_dst)
        except (ValueError, np.linalg.LinAlgError):
            continue
        err = np.hypot(*(apply_homography(h, src) - dst).T)
        mask = err < threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            w = count / n
            if w >= 1.0:
                break
            # Enough trials that a clean sample was drawn with the target
            # confidence, given the inlier rate seen so far.
            denom = math.log1p(-(w**4))
            if denom < 0:
                needed = min(max_iters, math.ceil(math.log(1.0 - confidence) / denom))
    if best_mask is None or best_count < min_inliers:
        raise RansacFailedError(
            f"best consensus {best_count} below minimum {min_inliers}"
        )
    h = homography_dlt(src[best_mask], dst[best_mask])
    return h, best_mask
