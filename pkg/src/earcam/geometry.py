"""Binocular field-of-view and blind-spot geometry for ear-mounted cameras.

The model is a top-down plan view. The origin sits midway between the eyes,
x is lateral, z points forward. The two cameras sit at (+-w_half_spacing,
-b_posterior), each yawed theta_yaw degrees outward, and each covers
phi_window degrees horizontally after windowed readout.

Angles are degrees at every public interface and radians internally; all
distances are centimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import NoConvergenceError

# Distinguished return values. A blind spot is INFINITE once the yaw consumes
# the whole inner half-FOV; overlap is ABSENT when the two coverage intervals
# are disjoint.
INFINITE = math.inf
ABSENT = None

# Measured lateral offset quoted for the physical rig. It is not consistent
# with any single parameter of this model (it is neither the half-spacing nor
# the posterior offset), so it is recorded here and never used in computation.
MEASURED_LATERAL_OFFSET_CM = 2.3

# Reference design table rows: (outward yaw, degrees; forward blind spot, cm).
# These are the default calibration targets; the CLI selects them with
# --calibrate reference (alias: paper).
REFERENCE_BLIND_SPOT_ROWS: tuple[tuple[float, float], ...] = (
    (0.0, 14.1),
    (5.0, 18.6),
    (10.0, 24.7),
    (15.0, 34.0),
    (20.0, 50.7),
)

CSV_HEADER = "theta_deg,blind_spot_cm,added_fov_deg,binocular_fov_deg,overlap_harmon_pct"


@dataclass(frozen=True)
class HeadCameraRig:
    """Parametric two-camera head geometry.

    w_half_spacing: half the lateral distance between the optical centers, cm.
    b_posterior: how far the camera plane sits behind the eye midpoint, cm
        (negative would place it in front).
    theta_yaw: outward yaw of each camera from straight ahead, degrees.
    phi_window: per-camera horizontal FOV after windowed readout, degrees.
    phi_sensor: full-sensor horizontal FOV, degrees.
    base_union: binocular FOV at zero yaw in the tabulated convention, degrees.
    """

    w_half_spacing: float
    b_posterior: float
    theta_yaw: float = 0.0
    phi_window: float = 65.0
    phi_sensor: float = 87.0
    base_union: float = 88.0

    def __post_init__(self) -> None:
        if not 0.0 < self.phi_window <= self.phi_sensor < 180.0:
            raise ValueError(
                "need 0 < phi_window <= phi_sensor < 180, got "
                f"{self.phi_window}/{self.phi_sensor}"
            )
        if self.theta_yaw < 0.0:
            raise ValueError(f"theta_yaw must be non-negative, got {self.theta_yaw}")
        # Zero is legal: coincident cameras are the degenerate reference case.
        if self.w_half_spacing < 0.0:
            raise ValueError(
                f"w_half_spacing must be non-negative, got {self.w_half_spacing}"
            )


@dataclass(frozen=True)
class BlindSpotQuery:
    """Test-object and reference-distance parameters for blind-spot queries."""

    object_width: float = 5.0
    harmon_distance: float = 36.8

    def __post_init__(self) -> None:
        if self.object_width <= 0.0:
            raise ValueError("object_width must be positive")
        if self.harmon_distance <= 0.0:
            raise ValueError("harmon_distance must be positive")


@dataclass(frozen=True)
class DesignSpaceRow:
    theta: float
    blind_spot: float  # cm; INFINITE once theta >= phi_window/2
    added_fov: float  # degrees, exactly 2*theta
    binocular_fov: float  # degrees, exactly base_union + 2*theta
    overlap_at_harmon: float | None  # fraction in [0, 1], or ABSENT


def blind_spot_length(rig: HeadCameraRig, q: BlindSpotQuery = BlindSpotQuery()) -> float:
    """Forward distance inside which the test object cannot appear in both views.

    The binding ray is each camera's inner FOV edge (half-angle phi_window/2
    about the axis yawed theta outward): the object's far-side edge must fall
    inside it. Clamped at 0; INFINITE when the yaw consumes the inner half-FOV.
    """
    half = 0.5 * rig.phi_window
    if rig.theta_yaw >= half:
        return INFINITE
    inner = math.radians(half - rig.theta_yaw)
    length = (rig.w_half_spacing + 0.5 * q.object_width) / math.tan(inner) - rig.b_posterior
    return max(0.0, length)


def binocular_fov(rig: HeadCameraRig) -> float:
    """Total binocular horizontal FOV in the tabulated convention (base + 2*theta)."""
    return rig.base_union + 2.0 * rig.theta_yaw


def model_union_fov(rig: HeadCameraRig) -> float:
    """Geometric union of the two windowed FOVs (phi_window + 2*theta).

    The tabulated convention and this one disagree at zero yaw (88 vs 65);
    both are exposed, binocular_fov being the primary.
    """
    return rig.phi_window + 2.0 * rig.theta_yaw


def _edge_tan(angle_deg: float) -> float:
    # Tangent that saturates at +-inf once a field edge reaches the frontal
    # plane, so interval arithmetic below stays well defined.
    if angle_deg >= 90.0:
        return math.inf
    if angle_deg <= -90.0:
        return -math.inf
    return math.tan(math.radians(angle_deg))


def overlap_at_distance(rig: HeadCameraRig, distance_from_eye: float) -> float | None:
    """Shared fraction of a single camera's coverage on the frontal plane.

    On the plane z = distance_from_eye each camera covers a lateral interval;
    the result is overlap width / single-camera width, ABSENT when disjoint.
    Normalization is per single image, which is what makes the tabulated
    percentages come out.
    """
    if distance_from_eye <= 0.0:
        raise ValueError("distance_from_eye must be positive")
    depth = distance_from_eye + rig.b_posterior
    if depth <= 0.0:
        raise ValueError("plane lies behind the camera baseline")
    half = 0.5 * rig.phi_window
    lo_r = rig.w_half_spacing + depth * _edge_tan(rig.theta_yaw - half)
    hi_r = rig.w_half_spacing + depth * _edge_tan(rig.theta_yaw + half)
    lo_l, hi_l = -hi_r, -lo_r
    common = min(hi_r, hi_l) - max(lo_r, lo_l)
    if common <= 0.0:
        return ABSENT
    width = hi_r - lo_r
    if math.isinf(width):
        return 0.0
    return min(1.0, common / width)


def calibrate_rig(
    target_rows: Iterable[tuple[float, float]],
    *,
    q: BlindSpotQuery = BlindSpotQuery(),
    phi_window: float = 65.0,
    phi_sensor: float = 87.0,
    base_union: float = 88.0,
    max_residual: float = 1.0,
) -> HeadCameraRig:
    """Fit (w_half_spacing, b_posterior) to measured (theta, blind_spot) rows.

    Coarse grid search over the two free parameters seeds a Gauss-Newton
    refinement; the blind-spot model is linear in both, so the refinement
    lands on the least-squares optimum in one step. Raises NoConvergenceError
    if any fitted row misses its target by more than max_residual cm.
    """
    rows = [(float(t), float(l)) for t, l in target_rows]
    if len(rows) < 2:
        raise ValueError("need at least 2 target rows")
    thetas = np.array([r[0] for r in rows])
    targets = np.array([r[1] for r in rows])
    if len(set(thetas.tolist())) != len(rows):
        raise ValueError("target thetas must be distinct")
    half = 0.5 * phi_window
    if np.any(thetas < 0.0) or np.any(thetas >= half):
        raise ValueError(f"target thetas must lie in [0, {half})")
    if np.any(~np.isfinite(targets)) or np.any(targets < 0.0):
        raise ValueError("target blind spots must be finite and non-negative")

    # Model: L = a / tan(half - theta) - b with a = w_half_spacing + ow/2.
    x = 1.0 / np.tan(np.radians(half - thetas))

    a_grid = np.arange(1.0, 40.0001, 0.5)
    b_grid = np.arange(-10.0, 20.0001, 0.5)
    model = a_grid[:, None, None] * x[None, None, :] - b_grid[None, :, None]
    sse = ((model - targets) ** 2).sum(axis=-1)
    i, j = np.unravel_index(int(np.argmin(sse)), sse.shape)
    a, b = float(a_grid[i]), float(b_grid[j])

    jac = np.stack([x, -np.ones_like(x)], axis=1)
    for _ in range(50):
        residual = a * x - b - targets
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        a += float(step[0])
        b += float(step[1])
        if float(np.max(np.abs(step))) < 1e-12:
            break

    residual = a * x - b - targets
    worst = float(np.max(np.abs(residual)))
    if worst > max_residual:
        raise NoConvergenceError(
            f"worst fit residual {worst:.3f} cm exceeds {max_residual} cm"
        )
    w = a - 0.5 * q.object_width
    if w <= 0.0:
        raise NoConvergenceError("fitted half-spacing is not positive")
    return HeadCameraRig(
        w_half_spacing=w,
        b_posterior=b,
        theta_yaw=0.0,
        phi_window=phi_window,
        phi_sensor=phi_sensor,
        base_union=base_union,
    )


def calibration_residuals(
    rig: HeadCameraRig,
    target_rows: Iterable[tuple[float, float]],
    q: BlindSpotQuery = BlindSpotQuery(),
) -> list[float]:
    """Fitted-minus-target blind spot per row, cm."""
    return [
        blind_spot_length(replace(rig, theta_yaw=float(t)), q) - float(l)
        for t, l in target_rows
    ]


def design_space_table(
    rig: HeadCameraRig,
    thetas: Sequence[float],
    q: BlindSpotQuery = BlindSpotQuery(),
) -> list[DesignSpaceRow]:
    """One row per requested yaw, composing the three closed-form queries."""
    rows = []
    for theta in thetas:
        r = replace(rig, theta_yaw=float(theta))
        rows.append(
            DesignSpaceRow(
                theta=float(theta),
                blind_spot=blind_spot_length(r, q),
                added_fov=2.0 * float(theta),
                binocular_fov=binocular_fov(r),
                overlap_at_harmon=overlap_at_distance(r, q.harmon_distance),
            )
        )
    return rows


def _csv_num(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return format(value, ".6g")


def design_space_csv(rows: Sequence[DesignSpaceRow]) -> str:
    """Serialize rows under the fixed header; ABSENT overlap is an empty field."""
    lines = [CSV_HEADER]
    for r in rows:
        overlap = "" if r.overlap_at_harmon is None else _csv_num(100.0 * r.overlap_at_harmon)
        lines.append(
            f"{_csv_num(r.theta)},{_csv_num(r.blind_spot)},"
            f"{_csv_num(r.added_fov)},{_csv_num(r.binocular_fov)},{overlap}"
        )
    return "\n".join(lines) + "\n"


def design_space_from_csv(text: str) -> list[DesignSpaceRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("missing or unexpected design-space CSV header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise ValueError(f"expected 5 fields, got {len(parts)}: {ln!r}")
        theta, blind, added, fov, pct = parts
        rows.append(
            DesignSpaceRow(
                theta=float(theta),
                blind_spot=float(blind),  # float('inf') parses back from 'inf'
                added_fov=float(added),
                binocular_fov=float(fov),
                overlap_at_harmon=None if pct == "" else float(pct) / 100.0,
            )
        )
    return rows
