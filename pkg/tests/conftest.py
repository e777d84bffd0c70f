"""Shared fixtures: one calibrated rig and one rendered stereo pair per run.

Rendering and stitching are the expensive steps, so anything derived from the
default scene at 5 degrees of yaw is session-scoped.
"""

from __future__ import annotations

import dataclasses

import pytest

from earcam.geometry import REFERENCE_BLIND_SPOT_ROWS, calibrate_rig
from earcam.imaging import QVGA, PlanarScene, render_view
from earcam.stitch import try_stitch


@pytest.fixture(scope="session")
def fitted_rig():
    return calibrate_rig(REFERENCE_BLIND_SPOT_ROWS)


@pytest.fixture(scope="session")
def rig5(fitted_rig):
    return dataclasses.replace(fitted_rig, theta_yaw=5.0)


@pytest.fixture(scope="session")
def mosaic_scene():
    return PlanarScene(pattern="mosaic:3", depth_from_eye=36.8)


@pytest.fixture(scope="session")
def stereo_pair(rig5, mosaic_scene):
    left = render_view(rig5, "left", mosaic_scene, QVGA)
    right = render_view(rig5, "right", mosaic_scene, QVGA)
    return left, right


@pytest.fixture(scope="session")
def stitched5(stereo_pair):
    return try_stitch(*stereo_pair)
