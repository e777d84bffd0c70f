"""Layered run configuration: built-in defaults <- JSON file <- flag overrides.

Every report embeds the effective configuration, so a run can be replayed
from its own output.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .geometry import (
    BlindSpotQuery,
    HeadCameraRig,
    REFERENCE_BLIND_SPOT_ROWS,
    calibrate_rig,
)
from .imaging import FRAME_PRESETS, FrameSpec, PlanarScene
from .link import LinkConfig
from .pipeline import DEFAULT_WAKE_PHRASES, WakeWordConfig
from .power import BATTERY_PRESETS, BatteryModel, PowerProfile

_CALIBRATE_ALIASES = {"paper": "reference"}
_CALIBRATE_CHOICES = ("reference", "none")


@dataclass(frozen=True)
class RunConfig:
    # rig and design-space geometry
    theta_deg: float = 5.0
    phi_window_deg: float = 65.0
    phi_sensor_deg: float = 87.0
    base_union_deg: float = 88.0
    object_width_cm: float = 5.0
    harmon_distance_cm: float = 36.8
    calibrate: str = "reference"
    w_half_spacing_cm: float | None = None  # required when calibrate == "none"
    b_posterior_cm: float | None = None
    # frames and synthetic scene
    frame: str = "qvga"
    scene_pattern: str = "mosaic:3"
    scene_depth_cm: float = 36.8
    scene_extent_cm: tuple[float, float] = (400.0, 300.0)
    # radio link
    connection_interval_ms: float = 7.5
    packets_per_interval: int = 5
    packet_payload: int = 247
    goodput_bps: int = 992_000
    spi_clock_hz: float = 8_000_000.0
    dma_max_transfer: int = 65_536
    trigger_overhead_ms: float = 98.0
    contention_factor: float = 1.0
    # power
    battery: str = "sony"
    p_idle_mw: float = 3.8
    p_active_mw: float = 24.9
    active_secs_per_query: float = 3.0
    # stitching
    max_keypoints: int = 500
    # wake word
    wake_phrases: tuple[str, ...] = DEFAULT_WAKE_PHRASES
    wake_threshold: float = 0.8
    chunk_secs: float = 2.3
    # inference and pipeline timing
    ttft_dual_s: float = 2.15
    ttft_stitched_s: float = 1.14
    synthesis_s: float = 0.0
    speech_wps: float = 2.5
    wake_latency_s: float = 0.1
    stitch_cost_s: float = 0.123
    # global
    seed: int = 7

    def __post_init__(self) -> None:
        cal = _CALIBRATE_ALIASES.get(self.calibrate, self.calibrate)
        object.__setattr__(self, "calibrate", cal)
        if cal not in _CALIBRATE_CHOICES:
            raise ValueError(
                f"calibrate must be one of {_CALIBRATE_CHOICES}, got {cal!r}"
            )
        if self.frame not in FRAME_PRESETS:
            raise ValueError(
                f"frame must be one of {tuple(FRAME_PRESETS)}, got {self.frame!r}"
            )
        if self.battery not in BATTERY_PRESETS:
            raise ValueError(
                f"battery must be one of {tuple(BATTERY_PRESETS)}, got "
                f"{self.battery!r}"
            )
        object.__setattr__(self, "wake_phrases", tuple(self.wake_phrases))
        ext = self.scene_extent_cm
        if len(ext) != 2:
            raise ValueError("scene_extent_cm must be a (width, height) pair")
        object.__setattr__(
            self, "scene_extent_cm", (float(ext[0]), float(ext[1]))
        )

    # -- construction ------------------------------------------------------

    @classmethod
    def load(
        cls,
        path: str | Path | None = None,
        overrides: Mapping[str, Any] | None = None,
    ) -> "RunConfig":
        """Defaults, then the JSON file, then any non-None overrides."""
        merged: dict[str, Any] = {}
        valid = {f.name for f in dataclasses.fields(cls)}
        if path is not None:
            data = json.loads(Path(path).read_text())
            if not isinstance(data, dict):
                raise ValueError("config file must hold a JSON object")
            for key, value in data.items():
                if key not in valid:
                    raise ValueError(f"unknown config key {key!r}")
                merged[key] = value
        for key, value in (overrides or {}).items():
            if key not in valid:
                raise ValueError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = value
        return cls(**merged)

    def to_json(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["wake_phrases"] = list(self.wake_phrases)
        out["scene_extent_cm"] = list(self.scene_extent_cm)
        return out

    # -- typed builders ----------------------------------------------------

    def build_rig(self, theta_deg: float | None = None) -> HeadCameraRig:
        theta = self.theta_deg if theta_deg is None else theta_deg
        if self.calibrate == "reference":
            fitted = calibrate_rig(
                REFERENCE_BLIND_SPOT_ROWS,
                q=self.build_query(),
                phi_window=self.phi_window_deg,
                phi_sensor=self.phi_sensor_deg,
                base_union=self.base_union_deg,
            )
            return dataclasses.replace(fitted, theta_yaw=theta)
        if self.w_half_spacing_cm is None or self.b_posterior_cm is None:
            raise ValueError(
                "calibrate=none needs w_half_spacing_cm and b_posterior_cm"
            )
        return HeadCameraRig(
            w_half_spacing=self.w_half_spacing_cm,
            b_posterior=self.b_posterior_cm,
            theta_yaw=theta,
            phi_window=self.phi_window_deg,
            phi_sensor=self.phi_sensor_deg,
            base_union=self.base_union_deg,
        )

    def build_query(self) -> BlindSpotQuery:
        return BlindSpotQuery(
            object_width=self.object_width_cm,
            harmon_distance=self.harmon_distance_cm,
        )

    def build_spec(self) -> FrameSpec:
        return FRAME_PRESETS[self.frame]

    def build_scene(
        self, pattern: str | None = None, depth_cm: float | None = None
    ) -> PlanarScene:
        return PlanarScene(
            pattern=pattern or self.scene_pattern,
            depth_from_eye=self.scene_depth_cm if depth_cm is None else depth_cm,
            extent=self.scene_extent_cm,
        )

    def build_link(self) -> LinkConfig:
        return LinkConfig(
            connection_interval_ms=self.connection_interval_ms,
            packets_per_interval=self.packets_per_interval,
            packet_payload=self.packet_payload,
            goodput_bps=self.goodput_bps,
            spi_clock_hz=self.spi_clock_hz,
            dma_max_transfer=self.dma_max_transfer,
            trigger_overhead_ms=self.trigger_overhead_ms,
            contention_factor=self.contention_factor,
        )

    def build_profile(self) -> PowerProfile:
        return PowerProfile(
            p_idle_mw=self.p_idle_mw,
            p_active_mw=self.p_active_mw,
            active_secs_per_query=self.active_secs_per_query,
        )

    def build_battery(self) -> BatteryModel:
        return BATTERY_PRESETS[self.battery]

    def build_wake(self) -> WakeWordConfig:
        return WakeWordConfig(
            phrases=self.wake_phrases,
            threshold=self.wake_threshold,
            chunk_secs=self.chunk_secs,
        )
