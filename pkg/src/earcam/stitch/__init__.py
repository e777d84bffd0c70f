"""Opportunistic panorama stitching for a binocular camera pair.

try_stitch runs the full chain: oriented corner features, cross-checked
binary matching, seeded robust homography, plausibility gates, and canvas
compositing. Any gate failure comes back as a structured FALLBACK result
rather than an exception, so callers can degrade to sending both views.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ImageTooSmallError, RansacFailedError
from ..imaging import GrayImage
from .compose import CompositeResult, composite
from .features import (
    Keypoint,
    Match,
    detect_orb,
    keypoint_full_xy,
    match_descriptors,
)
from .homography import (
    apply_homography,
    estimate_homography_ransac,
    homography_dlt,
)

__all__ = [
    "Keypoint",
    "Match",
    "StitchResult",
    "apply_homography",
    "composite",
    "CompositeResult",
    "detect_orb",
    "estimate_homography_ransac",
    "homography_dlt",
    "keypoint_full_xy",
    "match_descriptors",
    "try_stitch",
    "STATUS_STITCHED",
    "STATUS_FALLBACK",
    "MIN_FEATURES",
    "MIN_MATCHES",
]

STATUS_STITCHED = "STITCHED"
STATUS_FALLBACK = "FALLBACK"

REASON_INSUFFICIENT_FEATURES = "INSUFFICIENT_FEATURES"
REASON_INSUFFICIENT_MATCHES = "INSUFFICIENT_MATCHES"
REASON_RANSAC_FAILED = "RANSAC_FAILED"
REASON_SANITY_REJECTED = "SANITY_REJECTED"

MIN_FEATURES = 50
MIN_MATCHES = 15
MIN_INLIER_RATIO = 0.3
MIN_UPPER_DET = 0.1
MAX_PERSPECTIVE = 0.01


@dataclass(frozen=True, eq=False)
class StitchResult:
    status: str
    reason: str | None
    panorama: GrayImage | None
    homography: np.ndarray | None  # maps right-view pixels into left-view coords
    inliers: int
    inlier_ratio: float
    n_features: tuple[int, int] = (0, 0)
    n_matches: int = 0
    pixels_in: int = 0
    pixels_out: int = 0
    runtime_ms: float = field(default=0.0, compare=False)

    @property
    def stitched(self) -> bool:
        return self.status == STATUS_STITCHED


def _sanity_reason(h: np.ndarray, inlier_ratio: float) -> str | None:
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    if det <= MIN_UPPER_DET:
        return REASON_SANITY_REJECTED
    if abs(h[2, 0]) >= MAX_PERSPECTIVE or abs(h[2, 1]) >= MAX_PERSPECTIVE:
        return REASON_SANITY_REJECTED
    if inlier_ratio < MIN_INLIER_RATIO:
        return REASON_SANITY_REJECTED
    return None


def try_stitch(
    left: GrayImage, right: GrayImage, seed: int = 7, max_keypoints: int = 500
) -> StitchResult:
    """Attempt to merge a left/right pair into one panorama.

    Gates, in order: enough features in each view, enough cross-checked
    matches, a robust homography with enough consensus, and a plausibility
    check on that homography (orientation-preserving, near-affine, decent
    inlier share). Deterministic for a fixed pair and seed.
    """
    t0 = time.perf_counter()

    def fallback(
        reason: str,
        nf: tuple[int, int],
        nm: int = 0,
        inliers: int = 0,
        ratio: float = 0.0,
    ) -> StitchResult:
        return StitchResult(
            status=STATUS_FALLBACK,
            reason=reason,
            panorama=None,
            homography=None,
            inliers=inliers,
            inlier_ratio=ratio,
            n_features=nf,
            n_matches=nm,
            pixels_in=left.spec.width * left.spec.height
            + right.spec.width * right.spec.height,
            pixels_out=0,
            runtime_ms=(time.perf_counter() - t0) * 1000.0,
        )

    try:
        feats_l = detect_orb(left, max_keypoints)
        feats_r = detect_orb(right, max_keypoints)
    except ImageTooSmallError:
        return fallback(REASON_INSUFFICIENT_FEATURES, (0, 0))
    nf = (len(feats_l), len(feats_r))
    if nf[0] < MIN_FEATURES or nf[1] < MIN_FEATURES:
        return fallback(REASON_INSUFFICIENT_FEATURES, nf)

    matches = match_descriptors([d for _, d in feats_l], [d for _, d in feats_r])
    if len(matches) < MIN_MATCHES:
        return fallback(REASON_INSUFFICIENT_MATCHES, nf, len(matches))

    # Full-resolution coordinates so the homography applies to raw frames.
    pts_l = np.array(
        [keypoint_full_xy(kp, left.spec) for kp, _ in feats_l], dtype=np.float64
    )
    pts_r = np.array(
        [keypoint_full_xy(kp, right.spec) for kp, _ in feats_r], dtype=np.float64
    )
    try:
        h, mask = estimate_homography_ransac(matches, pts_l, pts_r, seed=seed)
    except RansacFailedError:
        return fallback(REASON_RANSAC_FAILED, nf, len(matches))

    inliers = int(mask.sum())
    ratio = inliers / len(matches)
    reason = _sanity_reason(h, ratio)
    if reason is not None:
        return fallback(reason, nf, len(matches), inliers, ratio)

    comp = composite(left, right, h)
    return StitchResult(
        status=STATUS_STITCHED,
        reason=None,
        panorama=comp.panorama,
        homography=h,
        inliers=inliers,
        inlier_ratio=ratio,
        n_features=nf,
        n_matches=len(matches),
        pixels_in=comp.pixels_in,
        pixels_out=comp.pixels_out,
        runtime_ms=(time.perf_counter() - t0) * 1000.0,
    )
