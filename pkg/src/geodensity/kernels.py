"""Backend selection for the raster kernels.

The compiled extension is preferred. Set ``GEODENSITY_PURE_PYTHON=1`` to force
the numpy fallback (the extension is also skipped when it failed to build).
"""

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("GEODENSITY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    _active = compiled_backend
else:
    _active = python_backend

BACKEND = _active.BACKEND
det3 = _active.det3
gaussian_raster = _active.gaussian_raster
scale_map = _active.scale_map
warp_head_to_image = _active.warp_head_to_image
splat_image_to_head = _active.splat_image_to_head


def available_backends():
    backends = {"python": python_backend}
    if compiled_backend is not None:
        backends["cython"] = compiled_backend
    return backends
