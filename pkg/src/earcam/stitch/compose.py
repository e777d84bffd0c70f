"""Panorama compositing: warp the right view into the left view's frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..imaging import FrameSpec, GrayImage
from .homography import apply_homography


@dataclass(frozen=True)
class CompositeResult:
    panorama: GrayImage
    offset: tuple[int, int]  # left image's top-left corner on the canvas
    pixels_in: int  # total source pixels across both views
    pixels_out: int  # canvas pixels receiving at least one source value


def composite(left: GrayImage, right: GrayImage, h: np.ndarray) -> CompositeResult:
    """Render both views on one canvas; h maps right pixels into left coords.

    The canvas hull comes from the left frame plus the projected corners of
    the right frame. The left image lands at an integer offset; the right is
    resampled nearest-neighbor through the inverse map. Where both cover a
    pixel the composite takes the rounded mean; uncovered canvas stays 0.
    """
    wl, hl = left.spec.width, left.spec.height
    wr, hr = right.spec.width, right.spec.height
    corners = np.array(
        [[0.0, 0.0], [wr, 0.0], [0.0, hr], [wr, hr]], dtype=np.float64
    )
    proj = apply_homography(h, corners)
    x0 = min(0, math.floor(proj[:, 0].min()))
    y0 = min(0, math.floor(proj[:, 1].min()))
    x1 = max(wl, math.ceil(proj[:, 0].max()))
    y1 = max(hl, math.ceil(proj[:, 1].max()))
    cw, ch = x1 - x0, y1 - y0
    ox, oy = -x0, -y0

    hinv = np.linalg.inv(np.asarray(h, dtype=np.float64))
    cx = np.arange(cw) - ox + 0.5
    cy = np.arange(ch) - oy + 0.5
    gx, gy = np.meshgrid(cx, cy)
    denom = hinv[2, 0] * gx + hinv[2, 1] * gy + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        qx = (hinv[0, 0] * gx + hinv[0, 1] * gy + hinv[0, 2]) / denom
        qy = (hinv[1, 0] * gx + hinv[1, 1] * gy + hinv[1, 2]) / denom
    right_ok = (
        np.isfinite(qx) & np.isfinite(qy)
        & (qx >= 0.0) & (qx < wr) & (qy >= 0.0) & (qy < hr)
        & (denom > 0)
    )
    sx = np.floor(np.where(right_ok, qx, 0.0)).astype(np.intp)
    sy = np.floor(np.where(right_ok, qy, 0.0)).astype(np.intp)
    right_vals = right.to_array()[sy, sx]

    canvas = np.zeros((ch, cw), dtype=np.int32)
    left_mask = np.zeros((ch, cw), dtype=bool)
    left_mask[oy : oy + hl, ox : ox + wl] = True
    canvas[oy : oy + hl, ox : ox + wl] = left.to_array()

    both = left_mask & right_ok
    only_right = right_ok & ~left_mask
    canvas[only_right] = right_vals[only_right]
    canvas[both] = (canvas[both] + right_vals[both] + 1) // 2

    covered = int((left_mask | right_ok).sum())
    pano = GrayImage(
        spec=FrameSpec(cw, ch), pixels=canvas.astype(np.uint8).tobytes()
    )
    return CompositeResult(
        panorama=pano,
        offset=(ox, oy),
        pixels_in=wl * hl + wr * hr,
        pixels_out=covered,
    )
