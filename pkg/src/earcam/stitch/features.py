"""Oriented corner detection and rotated binary descriptors, from scratch.

Per pyramid level: a 16-point segment test (circular run of 9) finds corner
candidates, a Harris response ranks them, 3x3 non-max suppression thins
them, an intensity centroid gives each survivor an orientation, and 256
rotated point-pair comparisons over a box-smoothed patch produce a 256-bit
descriptor. Levels are resampled from the full-resolution image with a 1.2
scale step. Everything is integer/float-deterministic: the same image and
parameters yield byte-identical descriptors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ImageTooSmallError
from ..imaging import FrameSpec, GrayImage
from .brief_pattern import PAIRS

FAST_THRESHOLD = 20
N_LEVELS = 4
LEVEL_SCALE = 1.2
CENTROID_RADIUS = 15
BORDER_MARGIN = 22  # covers the centroid patch and every rotated descriptor tap
HARRIS_K = 0.04
HARRIS_WINDOW = 7
MIN_IMAGE_SIDE = 32
MAX_HAMMING = 64

# Segment-test ring, radius 3, clockwise from straight up.
_FAST_RING = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)


def _build_run_lut() -> np.ndarray:
    # lut[code] is True when the 16-bit ring code contains a circular run of
    # at least 9 set bits: AND of the code with its 8 successive rotations is
    # nonzero exactly then.
    codes = np.arange(65536, dtype=np.uint32)
    acc = codes.copy()
    for k in range(1, 9):
        acc &= ((codes << k) | (codes >> (16 - k))) & 0xFFFF
    return acc != 0


_RUN_LUT = _build_run_lut()

_CENT_DY, _CENT_DX = np.nonzero(
    np.hypot(*np.mgrid[-CENTROID_RADIUS : CENTROID_RADIUS + 1,
                       -CENTROID_RADIUS : CENTROID_RADIUS + 1])
    <= CENTROID_RADIUS
)
_CENT_DY = _CENT_DY - CENTROID_RADIUS
_CENT_DX = _CENT_DX - CENTROID_RADIUS

_PATTERN = np.asarray(PAIRS, dtype=np.float64)  # (256, 4): x1, y1, x2, y2


@dataclass(frozen=True)
class Keypoint:
    x: float  # level coordinates
    y: float
    response: float
    orientation: float  # radians in [-pi, pi]
    octave: int


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    hamming: int


def level_dims(spec: FrameSpec, octave: int) -> tuple[int, int]:
    s = LEVEL_SCALE**octave
    return max(1, round(spec.width / s)), max(1, round(spec.height / s))


def keypoint_full_xy(kp: Keypoint, spec: FrameSpec) -> tuple[float, float]:
    """Map level coordinates back onto the full-resolution pixel grid."""
    lw, lh = level_dims(spec, kp.octave)
    return (
        (kp.x + 0.5) * (spec.width / lw) - 0.5,
        (kp.y + 0.5) * (spec.height / lh) - 0.5,
    )


def _resize_bilinear(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    h, w = src.shape
    a = src.astype(np.float64)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]
    top = a[np.ix_(y0, x0)] * (1.0 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1.0 - fx) + a[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.floor(out + 0.5).astype(np.uint8)


def _fast_corners(img: np.ndarray, threshold: int) -> np.ndarray:
    h, w = img.shape
    mask = np.zeros((h, w), dtype=bool)
    if h < 7 or w < 7:
        return mask
    a = img.astype(np.int16)
    center = a[3 : h - 3, 3 : w - 3]
    bright = np.zeros(center.shape, dtype=np.uint16)
    dark = np.zeros(center.shape, dtype=np.uint16)
    for k, (dx, dy) in enumerate(_FAST_RING):
        ring = a[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx]
        bright |= (ring >= center + threshold).astype(np.uint16) << k
        dark |= (ring <= center - threshold).astype(np.uint16) << k
    mask[3 : h - 3, 3 : w - 3] = _RUN_LUT[bright] | _RUN_LUT[dark]
    return mask


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    # (2r+1)^2 window sums with zero padding outside, via an integral image.
    h, w = a.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    return ii[np.ix_(y1, x1)] - ii[np.ix_(y0, x1)] - ii[np.ix_(y1, x0)] + ii[np.ix_(y0, x0)]


def _harris_response(img: np.ndarray) -> np.ndarray:
    a = img.astype(np.float64)
    p = np.pad(a, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    r = HARRIS_WINDOW // 2
    sxx = _box_sum(gx * gx, r)
    syy = _box_sum(gy * gy, r)
    sxy = _box_sum(gx * gy, r)
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


def _nms(corner: np.ndarray, score: np.ndarray) -> np.ndarray:
    masked = np.where(corner, score, -np.inf)
    padded = np.pad(masked, 1, mode="constant", constant_values=-np.inf)
    neighborhood = masked.copy()
    h, w = masked.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            np.maximum(
                neighborhood, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w],
                out=neighborhood,
            )
    return corner & (masked >= neighborhood)


_REFINE_RADIUS = 4
_REFINE_ITERS = 2


def _refine_corners(
    level: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    # Subpixel corner localization by gradient orthogonality: every pixel on
    # an edge through the corner has its gradient perpendicular to the
    # corner-to-pixel vector, so the corner solves a 2x2 least-squares
    # system. Unlike the Harris argmax this is not biased toward the
    # highest-contrast quadrant of the junction.
    a = level.astype(np.float64)
    h, w = a.shape
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, 1:-1] = 0.5 * (a[:, 2:] - a[:, :-2])
    gy[1:-1, :] = 0.5 * (a[2:, :] - a[:-2, :])
    r = _REFINE_RADIUS
    offs = np.arange(-r, r + 1)
    out_x = xs.astype(np.float64).copy()
    out_y = ys.astype(np.float64).copy()
    for i in range(xs.size):
        cx, cy = out_x[i], out_y[i]
        for _ in range(_REFINE_ITERS):
            ix, iy = int(round(cx)), int(round(cy))
            if not (r < ix < w - r - 1 and r < iy < h - r - 1):
                break
            wx = gx[iy - r : iy + r + 1, ix - r : ix + r + 1]
            wy = gy[iy - r : iy + r + 1, ix - r : ix + r + 1]
            pxx = (wx * wx).sum()
            pxy = (wx * wy).sum()
            pyy = (wy * wy).sum()
            det = pxx * pyy - pxy * pxy
            if det <= 1e-9:
                break
            px = ix + offs[None, :]
            py = iy + offs[:, None]
            bx = (wx * wx * px + wx * wy * py).sum()
            by = (wx * wy * px + wy * wy * py).sum()
            nx = (pyy * bx - pxy * by) / det
            ny = (pxx * by - pxy * bx) / det
            # A jump beyond the window means no corner structure here; keep
            # the detector position.
            if abs(nx - out_x[i]) > r or abs(ny - out_y[i]) > r:
                break
            cx, cy = nx, ny
        out_x[i], out_y[i] = cx, cy
    return out_x, out_y


def _orientations(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    a = img.astype(np.float64)
    patch = a[ys[:, None] + _CENT_DY[None, :], xs[:, None] + _CENT_DX[None, :]]
    m10 = patch @ _CENT_DX.astype(np.float64)
    m01 = patch @ _CENT_DY.astype(np.float64)
    return np.arctan2(m01, m10)


def _descriptors(
    smoothed: np.ndarray, xs: np.ndarray, ys: np.ndarray, angles: np.ndarray
) -> np.ndarray:
    cos = np.cos(angles)[:, None]
    sin = np.sin(angles)[:, None]
    x1, y1, x2, y2 = _PATTERN.T
    rx1 = np.round(cos * x1 - sin * y1).astype(np.intp) + xs[:, None]
    ry1 = np.round(sin * x1 + cos * y1).astype(np.intp) + ys[:, None]
    rx2 = np.round(cos * x2 - sin * y2).astype(np.intp) + xs[:, None]
    ry2 = np.round(sin * x2 + cos * y2).astype(np.intp) + ys[:, None]
    bits = smoothed[ry1, rx1] < smoothed[ry2, rx2]
    return np.packbits(bits, axis=1)


def detect_orb(
    img: GrayImage, max_keypoints: int = 500
) -> list[tuple[Keypoint, bytes]]:
    """Detect up to max_keypoints oriented corners with 32-byte descriptors.

    Output is Harris-ranked: response descending, ties by y then x (level
    coordinates) then octave, truncated to max_keypoints.
    """
    spec = img.spec
    if spec.width < MIN_IMAGE_SIDE or spec.height < MIN_IMAGE_SIDE:
        raise ImageTooSmallError(
            f"need at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got "
            f"{spec.width}x{spec.height}"
        )
    full = img.to_array()
    found: list[tuple[float, float, float, int, float, bytes]] = []
    for octave in range(N_LEVELS):
        lw, lh = level_dims(spec, octave)
        if lw <= 2 * BORDER_MARGIN or lh <= 2 * BORDER_MARGIN:
            continue
        level = full if octave == 0 else _resize_bilinear(full, lw, lh)
        corner = _fast_corners(level, FAST_THRESHOLD)
        if not corner.any():
            continue
        harris = _harris_response(level)
        keep = _nms(corner, harris)
        ys, xs = np.nonzero(keep)
        inb = (
            (xs >= BORDER_MARGIN)
            & (xs < lw - BORDER_MARGIN)
            & (ys >= BORDER_MARGIN)
            & (ys < lh - BORDER_MARGIN)
        )
        xs, ys = xs[inb], ys[inb]
        if xs.size == 0:
            continue
        angles = _orientations(level, xs, ys)
        smoothed = _box_sum(level.astype(np.float64), 2)
        descs = _descriptors(smoothed, xs, ys, angles)
        resp = harris[ys, xs]
        fx, fy = _refine_corners(level, xs, ys)
        for i in range(xs.size):
            found.append(
                (
                    float(resp[i]),
                    float(fy[i]),
                    float(fx[i]),
                    octave,
                    float(angles[i]),
                    descs[i].tobytes(),
                )
            )
    found.sort(key=lambda f: (-f[0], f[1], f[2], f[3]))
    out = []
    for resp, y, x, octave, angle, desc in found[:max_keypoints]:
        out.append(
            (Keypoint(x=x, y=y, response=resp, orientation=angle, octave=octave), desc)
        )
    return out


_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)


def _descriptor_matrix(descriptors: Sequence[bytes]) -> np.ndarray:
    if len(descriptors) == 0:
        return np.zeros((0, 32), dtype=np.uint8)
    return np.stack([np.frombuffer(d, dtype=np.uint8) for d in descriptors])


def match_descriptors(
    a: Sequence[bytes], b: Sequence[bytes], max_hamming: int = MAX_HAMMING
) -> list[Match]:
    """Mutual-nearest-neighbor matches under the Hamming ceiling.

    Cross-checked both ways, no ratio test; sorted ascending by distance,
    ties by the index pair.
    """
    ma = _descriptor_matrix(a)
    mb = _descriptor_matrix(b)
    if ma.shape[0] == 0 or mb.shape[0] == 0:
        return []
    dist = _POPCOUNT[ma[:, None, :] ^ mb[None, :, :]].sum(axis=2, dtype=np.int32)
    best_b = dist.argmin(axis=1)  # first minimum wins: deterministic
    best_a = dist.argmin(axis=0)
    out = []
    for ia in range(ma.shape[0]):
        ib = int(best_b[ia])
        d = int(dist[ia, ib])
        if int(best_a[ib]) == ia and d <= max_hamming:
            out.append(Match(ia, ib, d))
    out.sort(key=lambda m: (m.hamming, m.index_a, m.index_b))
    return out
