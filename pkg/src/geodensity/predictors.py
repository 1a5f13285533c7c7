"""Stand-in density predictors.

A predictor maps a frame's ground-truth head-plane density (and optionally
its scale map) to a predicted head-plane density. Real networks plug in
behind the same call signature.
"""

import numpy as np

from .density import HEAD, DensityMap, _roi_mask
from .errors import InputError, PlaneMismatch


def _check(gt):
    if gt.plane != HEAD:
        raise PlaneMismatch("predictors consume head-plane maps")


def oracle(gt, scale=None):
    _check(gt)
    return DensityMap(gt.values.copy(), HEAD, gt.cell_size, gt.origin)


class NoisyOracle:
    """Ground truth plus seeded Gaussian noise (people/m^2), clipped at zero."""

    def __init__(self, std=0.01, seed=0):
        if std < 0:
            raise ValueError("noise std must be non-negative")
        self.std = float(std)
        self.seed = int(seed)

    def __call__(self, gt, scale=None):
        _check(gt)
        rng = np.random.default_rng(self.seed)
        noisy = gt.values + self.std * rng.standard_normal(gt.shape)
        return DensityMap(np.maximum(noisy, 0.0), HEAD, gt.cell_size, gt.origin)


class Uniform:
    """Total ground-truth mass spread evenly over the ROI (or the whole grid)."""

    def __init__(self, roi=None):
        self.roi = roi

    def __call__(self, gt, scale=None):
        _check(gt)
        mask = _roi_mask(gt, self.roi)
        if mask is None:
            mask = np.ones(gt.shape, dtype=bool)
        n = int(mask.sum())
        values = np.zeros(gt.shape)
        if n:
            values[mask] = gt.cell_masses().sum() / (n * gt.cell_area)
        return DensityMap(values, HEAD, gt.cell_size, gt.origin)


PREDICTORS = {
    "oracle": lambda **kw: oracle,
    "noisy-oracle": lambda std=0.01, seed=0, **kw: NoisyOracle(std, seed),
    "uniform": lambda roi=None, **kw: Uniform(roi),
}


def get_predictor(name, **params):
    try:
        factory = PREDICTORS[name]
    except KeyError:
        raise InputError(f"unknown predictor {name!r}; choose from {sorted(PREDICTORS)}") from None
    return factory(**params)
