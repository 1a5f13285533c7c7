import math

import numpy as np
import pytest

from geodensity import kernels
from geodensity.geometry import CameraIntrinsics, DronePose

BACKENDS = sorted(kernels.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = kernels.available_backends()[request.param]
    for name in ("det3", "gaussian_raster", "scale_map", "warp_head_to_image", "splat_image_to_head"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def camera():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)


@pytest.fixture
def small_camera():
    return CameraIntrinsics(fx=400.0, fy=400.0, cx=160.0, cy=120.0, width=320, height=240)


@pytest.fixture
def nadir():
    return DronePose(altitude=10.0, pitch=-math.pi / 2)


@pytest.fixture
def oblique():
    return DronePose(altitude=20.0, pitch=-math.pi / 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
