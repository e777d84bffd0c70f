"""Frame formats, synthetic pinhole rendering, and the bit-exact PGM codec.

World frame: x lateral, y down, z forward, origin at the eye midpoint. The
scene is a fronto-parallel plane z = depth_from_eye carrying a deterministic
procedural pattern. Cameras are ideal pinholes at (+-w_half_spacing, 0,
-b_posterior), yawed theta_yaw outward about the vertical axis; sampling is
nearest-neighbor with no anti-aliasing so identical inputs always render
identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import (
    BlindSpotNotFoundError,
    MalformedHeaderError,
    PlaneBehindCameraError,
    TruncatedPayloadError,
)
from .geometry import BlindSpotQuery, HeadCameraRig

LEFT = "left"
RIGHT = "right"
_SIDE_SIGN = {LEFT: -1.0, RIGHT: 1.0}


@dataclass(frozen=True)
class FrameSpec:
    """Monochrome frame geometry; 8 bits per pixel, row-major, top-left origin."""

    width: int
    height: int

    BIT_DEPTH = 8

    def __post_init__(self) -> None:
        if not (isinstance(self.width, int) and isinstance(self.height, int)):
            raise ValueError("frame dimensions must be integers")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height


QQVGA = FrameSpec(162, 119)
QVGA = FrameSpec(324, 239)
FRAME_PRESETS = {"qqvga": QQVGA, "qvga": QVGA}


@dataclass(frozen=True)
class GrayImage:
    spec: FrameSpec
    pixels: bytes

    def __post_init__(self) -> None:
        if len(self.pixels) != self.spec.payload_bytes:
            raise ValueError(
                f"payload is {len(self.pixels)} bytes, spec wants {self.spec.payload_bytes}"
            )

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.spec.height, self.spec.width
        )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GrayImage":
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise ValueError("expected a 2-D uint8 array")
        h, w = arr.shape
        return cls(FrameSpec(int(w), int(h)), arr.tobytes())


@dataclass(frozen=True)
class PlanarScene:
    """Fronto-parallel test plane.

    pattern is a compact string: "flat:VALUE", "checkerboard:CELL_CM",
    "stripes:CELL_CM" (text-like rows of ink segments) or "mosaic:CELL_CM"
    (aperiodic uniquely-shaded tiles, the stitch-friendly texture). The
    optional object is a full-height bright strip of the given width,
    centered on the midline unless object_center says otherwise; it is the
    instrument the blind-spot search looks for.
    """

    pattern: str
    depth_from_eye: float
    extent: tuple[float, float] = (400.0, 300.0)
    object_width: float | None = None
    object_center: float = 0.0

    def __post_init__(self) -> None:
        if self.depth_from_eye <= 0.0:
            raise ValueError("depth_from_eye must be positive")
        if self.extent[0] <= 0.0 or self.extent[1] <= 0.0:
            raise ValueError("extent must be positive")
        if self.object_width is not None and self.object_width <= 0.0:
            raise ValueError("object_width must be positive when present")
        _parse_pattern(self.pattern)  # validate eagerly


def _parse_pattern(pattern: str) -> tuple[str, float]:
    kind, _, arg = pattern.partition(":")
    kind = kind.strip().lower()
    if kind == "flat":
        value = float(arg) if arg else 128.0
        if not (0 <= value <= 255 and float(value).is_integer()):
            raise ValueError(f"flat value must be an integer in [0, 255], got {arg!r}")
        return kind, value
    if kind in ("checkerboard", "stripes", "mosaic"):
        cell = float(arg) if arg else 4.0
        if cell <= 0.0:
            raise ValueError(f"{kind} cell size must be positive, got {arg!r}")
        return kind, cell
    raise ValueError(f"unknown pattern {pattern!r}")


def scene_to_json(scene: PlanarScene) -> str:
    return json.dumps(
        {
            "pattern": scene.pattern,
            "depth_cm": scene.depth_from_eye,
            "extent_cm": list(scene.extent),
            "object_width_cm": scene.object_width,
            "object_center_cm": scene.object_center,
        },
        sort_keys=True,
    )


def scene_from_json(data: str | dict[str, Any]) -> PlanarScene:
    obj = json.loads(data) if isinstance(data, str) else data
    return PlanarScene(
        pattern=obj["pattern"],
        depth_from_eye=float(obj["depth_cm"]),
        extent=tuple(float(v) for v in obj.get("extent_cm", (400.0, 300.0))),
        object_width=None
        if obj.get("object_width_cm") is None
        else float(obj["object_width_cm"]),
        object_center=float(obj.get("object_center_cm", 0.0)),
    )


# Integer hash for per-cell shading. An ideal two-tone checkerboard has no
# 9-contiguous same-polarity arc at its X-junctions, so a segment-test corner
# detector cannot see them; jittering each cell's shade (light cells 195..250,
# dark cells 5..60) keeps the parity structure while making every junction a
# genuine corner.
_H_A = np.uint64(0x9E3779B97F4A7C15)
_H_B = np.uint64(0xC2B2AE3D27D4EB4F)
_H_C = np.uint64(0xBF58476D1CE4E5B9)


def _cell_hash(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    h = ix.astype(np.int64).astype(np.uint64) * _H_A + iy.astype(np.int64).astype(np.uint64) * _H_B
    h ^= h >> np.uint64(29)
    h *= _H_C
    h ^= h >> np.uint64(32)
    return h


def _pattern_values(scene: PlanarScene, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    kind, arg = _parse_pattern(scene.pattern)
    if kind == "flat":
        return np.full(px.shape, int(arg), dtype=np.uint8)
    if kind == "checkerboard":
        cell = arg
        ix = np.floor(px / cell).astype(np.int64)
        iy = np.floor(py / cell).astype(np.int64)
        jitter = (_cell_hash(ix, iy) % np.uint64(56)).astype(np.int64)
        light = ((ix + iy) & 1) == 0
        return np.where(light, 195 + jitter, 5 + jitter).astype(np.uint8)
    if kind == "mosaic":
        # Aperiodic tile mosaic: every cell gets its own shade across nearly
        # the full range. Locally unique, so feature matching between views
        # has no repeated-structure ambiguity; shade 0 stays reserved for
        # out-of-extent pixels.
        cell = arg
        ix = np.floor(px / cell).astype(np.int64)
        iy = np.floor(py / cell).astype(np.int64)
        return (np.uint64(8) + _cell_hash(ix, iy) % np.uint64(240)).astype(np.uint8)
    # text-like stripes: rows of dark ink segments on a light page
    cell = arg
    seg_w = 1.6 * cell
    iy = np.floor(py / cell).astype(np.int64)
    ix = np.floor(px / seg_w).astype(np.int64)
    fy = py / cell - iy
    fx = px / seg_w - ix
    h = _cell_hash(ix, iy)
    ink = ((h % np.uint64(10)) < np.uint64(6)) & (fy < 0.7) & (fx < 0.75)
    shade = ((h >> np.uint64(8)) % np.uint64(60)).astype(np.int64)
    return np.where(ink, 30 + shade, 235).astype(np.uint8)


def render_view(
    rig: HeadCameraRig, side: str, scene: PlanarScene, spec: FrameSpec = QVGA
) -> GrayImage:
    """Render one camera's view of the scene plane.

    Focal length in pixels is (width/2)/tan(phi_window/2); pixel centers sit
    at integer+0.5. Pixels whose rays miss the scene extent (or never reach
    the plane) render 0. The expression order below keeps left/right renders
    of a midline-symmetric scene exact horizontal mirrors of each other, down
    to the last bit.
    """
    try:
        sign = _SIDE_SIGN[side]
    except KeyError:
        raise ValueError(f"side must be {LEFT!r} or {RIGHT!r}, got {side!r}") from None
    depth_cam = scene.depth_from_eye + rig.b_posterior
    if depth_cam <= 0.0:
        raise PlaneBehindCameraError(
            f"scene plane at {scene.depth_from_eye} cm sits behind the camera plane"
        )
    w, h = spec.width, spec.height
    f = (w / 2.0) / math.tan(math.radians(rig.phi_window) / 2.0)
    yaw = math.radians(rig.theta_yaw)
    c = math.cos(yaw)
    s = sign * math.sin(yaw)

    dx = (np.arange(w, dtype=np.float64) + 0.5 - w / 2.0) / f
    dy = (np.arange(h, dtype=np.float64) + 0.5 - h / 2.0) / f
    dwx = dx * c + s
    dwz = c - dx * s
    with np.errstate(divide="ignore"):
        t = np.where(dwz > 0.0, depth_cam / dwz, np.inf)
    px = sign * rig.w_half_spacing + t * dwx  # (w,)
    py = np.outer(dy, t)  # (h, w); yaw does not touch the vertical axis

    px_grid = np.broadcast_to(px, (h, w))
    ex, ey = scene.extent
    inside = (
        np.isfinite(px_grid)
        & (np.abs(px_grid) <= ex / 2.0)
        & (np.abs(py) <= ey / 2.0)
    )
    out = np.zeros((h, w), dtype=np.uint8)
    if inside.any():
        pxm = px_grid[inside]
        pym = py[inside]
        values = _pattern_values(scene, pxm, pym)
        if scene.object_width is not None:
            on_object = np.abs(pxm - scene.object_center) <= scene.object_width / 2.0
            values = np.where(on_object, np.uint8(255), values)
        out[inside] = values
    return GrayImage.from_array(out)


def ground_truth_homography(
    rig: HeadCameraRig, scene_depth: float, spec: FrameSpec = QVGA
) -> np.ndarray:
    """Exact 3x3 map from right-view pixel coords to left-view pixel coords.

    Valid for the fronto-parallel plane z = scene_depth; normalized so the
    bottom-right entry is 1. Coordinates follow the renderer's convention
    (pixel centers at integer+0.5).
    """
    if scene_depth + rig.b_posterior <= 0.0:
        raise PlaneBehindCameraError("scene plane sits behind the camera plane")
    w, h = spec.width, spec.height
    f = (w / 2.0) / math.tan(math.radians(rig.phi_window) / 2.0)
    k = np.array([[f, 0.0, w / 2.0], [0.0, f, h / 2.0], [0.0, 0.0, 1.0]])

    def cam_to_world(sign: float) -> np.ndarray:
        a = sign * math.radians(rig.theta_yaw)
        ca, sa = math.cos(a), math.sin(a)
        return np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])

    r_l = cam_to_world(-1.0)
    r_r = cam_to_world(1.0)
    c_l = np.array([-rig.w_half_spacing, 0.0, -rig.b_posterior])
    c_r = np.array([rig.w_half_spacing, 0.0, -rig.b_posterior])

    r_rel = r_l.T @ r_r
    t = r_l.T @ (c_r - c_l)
    n_r = r_r.T @ np.array([0.0, 0.0, 1.0])
    d_r = scene_depth + rig.b_posterior
    hom = k @ (r_rel + np.outer(t, n_r) / d_r) @ np.linalg.inv(k)
    return hom / hom[2, 2]


def simulate_blind_spot(
    rig: HeadCameraRig,
    q: BlindSpotQuery = BlindSpotQuery(),
    step: float = 0.25,
    *,
    spec: FrameSpec = QVGA,
    max_distance: float = 500.0,
) -> float:
    """Search oracle: smallest plane distance with the object whole in both views.

    Walks the plane outward in fixed steps, rendering both views each time,
    until the bright object strip shows up clear of both image borders in the
    left and the right frame. Value is within one step of the true threshold.
    """
    if not 0.0 < step <= 0.5:
        raise ValueError("step must be in (0, 0.5] cm")
    n = int(math.floor(max_distance / step))
    for k in range(1, n + 1):
        d = k * step
        if d + rig.b_posterior <= 0.0:
            continue
        scene = PlanarScene(
            pattern="flat:128", depth_from_eye=d, object_width=q.object_width
        )
        if all(
            _object_clear_of_borders(render_view(rig, side, scene, spec))
            for side in (LEFT, RIGHT)
        ):
            return d
    raise BlindSpotNotFoundError(
        f"object never fully visible within {max_distance} cm"
    )


def _object_clear_of_borders(img: GrayImage) -> bool:
    arr = img.to_array()
    cols = np.flatnonzero((arr == 255).any(axis=0))
    if cols.size == 0:
        return False
    return cols[0] > 0 and cols[-1] < img.spec.width - 1


def encode_pgm(img: GrayImage) -> bytes:
    """Binary P5 with maxval 255; decode_pgm is its exact inverse."""
    return b"P5\n%d %d\n255\n" % (img.spec.width, img.spec.height) + img.pixels


def _next_token(data: bytes, i: int) -> tuple[bytes, int]:
    n = len(data)
    while i < n:
        if data[i : i + 1].isspace():
            i += 1
        elif data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
        else:
            break
    if i >= n:
        raise MalformedHeaderError("header ended early")
    start = i
    while i < n and not data[i : i + 1].isspace():
        i += 1
    return data[start:i], i


def decode_pgm(data: bytes) -> GrayImage:
    magic, i = _next_token(data, 0)
    if magic != b"P5":
        raise MalformedHeaderError(f"expected P5, got {magic!r}")
    fields = []
    for _ in range(3):
        token, i = _next_token(data, i)
        if not token.isdigit():
            raise MalformedHeaderError(f"expected integer header field, got {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise MalformedHeaderError(f"maxval {maxval} not in [1, 255]")
    if i >= len(data) or not data[i : i + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    i += 1  # exactly one whitespace byte separates header and payload
    payload = data[i : i + width * height]
    if len(payload) < width * height:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, need {width * height}"
        )
    return GrayImage(FrameSpec(width, height), bytes(payload))
