"""Count and localisation metrics over a batch of frames."""

from dataclasses import dataclass
import math

import numpy as np

from .density import DensityMap, _roi_mask, total_count
from .errors import DimensionMismatch, EmptyBatch, PlaneMismatch


@dataclass(frozen=True, eq=False)
class FramePair:
    truth: DensityMap
    predicted: DensityMap
    roi: object = None

    def __post_init__(self):
        if self.truth.plane != self.predicted.plane:
            raise PlaneMismatch("truth and prediction live on different planes")
        if not self.truth.same_raster(self.predicted):
            raise DimensionMismatch(
                f"truth {self.truth.shape} and prediction {self.predicted.shape} rasters differ"
            )
        _roi_mask(self.truth, self.roi)

    def count_error(self):
        return total_count(self.predicted, self.roi) - total_count(self.truth, self.roi)

    def absolute_error_sum(self):
        """ROI-masked sum of per-cell absolute mass errors."""
        err = np.abs(self.truth.cell_masses() - self.predicted.cell_masses())
        mask = _roi_mask(self.truth, self.roi)
        if mask is not None:
            err = np.where(mask, err, 0.0)
        return float(err.sum())

    def roi_cells(self):
        mask = _roi_mask(self.truth, self.roi)
        return self.truth.values.size if mask is None else int(mask.sum())


class EvaluationBatch(list):
    """A list of FramePair objects."""

    @classmethod
    def from_maps(cls, truths, preds, rois=None):
        rois = [None] * len(truths) if rois is None else rois
        if not len(truths) == len(preds) == len(rois):
            raise DimensionMismatch("truth, prediction and ROI lists differ in length")
        return cls(FramePair(t, p, r) for t, p, r in zip(truths, preds, rois))


def _errors(batch):
    if len(batch) == 0:
        raise EmptyBatch("metrics need at least one frame")
    return np.array([pair.count_error() for pair in batch])


def mae(batch):
    return float(np.mean(np.abs(_errors(batch))))


def rmse(batch):
    e = _errors(batch)
    return float(math.sqrt(np.mean(e * e)))


def mpae(batch):
    """Per-frame ROI sum of absolute per-cell errors, averaged over frames only."""
    if len(batch) == 0:
        raise EmptyBatch("metrics need at least one frame")
    return float(np.mean([pair.absolute_error_sum() for pair in batch]))


def mpae_per_cell(batch):
    """MPAE with each frame's sum divided by its ROI cell count."""
    if len(batch) == 0:
        raise EmptyBatch("metrics need at least one frame")
    return float(np.mean([pair.absolute_error_sum() / max(pair.roi_cells(), 1) for pair in batch]))


def evaluate(batch):
    return {"mae": mae(batch), "rmse": rmse(batch), "mpae": mpae(batch), "n_frames": len(batch)}
