"""Head-plane ground truth and image/head-plane density conversion.

Head-plane maps are in people per m^2 on a metric raster; image-plane maps are
in people per px^2 on the pixel raster. The mass of a map is
``sum(values) * cell_area``.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from . import kernels
from .errors import DimensionMismatch, DomainError, HeadOutsideGrid, PlaneMismatch
from .geometry import ScaleMap, apply_homography, image_footprint

logger = logging.getLogger(__name__)

HEAD = "head"
IMAGE = "image"

DEFAULT_SIGMA = 0.5
DEFAULT_CELL = 0.1
TRUNCATE = 4.0
MAX_GRID_CELLS = 50_000_000


@dataclass(frozen=True)
class HeadPlaneGrid:
    """Metric raster on the head plane.

    ``origin`` is the corner of cell ``(0, 0)``; row ``i`` and column ``j``
    cover ``[x0 + j*cell, x0 + (j+1)*cell) x [y0 + i*cell, y0 + (i+1)*cell)``.
    """

    origin: tuple
    cell_size: float
    cols: int
    rows: int

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if not self.cell_size > 0:
            raise ValueError(f"cell size must be positive, got {self.cell_size}")
        if int(self.cols) <= 0 or int(self.rows) <= 0:
            raise ValueError(f"grid needs at least one cell, got {self.cols}x{self.rows}")
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def cell_area(self):
        return self.cell_size * self.cell_size

    @property
    def extent(self):
        """``(xmin, xmax, ymin, ymax)`` in metres."""
        x0, y0 = self.origin
        return (x0, x0 + self.cols * self.cell_size, y0, y0 + self.rows * self.cell_size)

    def cell_centers(self):
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.cols) + 0.5) * self.cell_size
        ys = y0 + (np.arange(self.rows) + 0.5) * self.cell_size
        return xs, ys

    def contains(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        xmin, xmax, ymin, ymax = self.extent
        return (pts[:, 0] >= xmin) & (pts[:, 0] < xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] < ymax)

    def cell_of(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        j = np.floor((pts[:, 0] - self.origin[0]) / self.cell_size).astype(np.int64)
        i = np.floor((pts[:, 1] - self.origin[1]) / self.cell_size).astype(np.int64)
        return i, j

    @classmethod
    def covering(cls, points, cell_size, margin=0.0):
        """Smallest grid, snapped to multiples of ``cell_size``, holding ``points`` plus ``margin``."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise DomainError("cannot build a grid around zero points")
        lo = pts.min(axis=0) - margin
        hi = pts.max(axis=0) + margin
        x0 = math.floor(lo[0] / cell_size) * cell_size
        y0 = math.floor(lo[1] / cell_size) * cell_size
        cols = max(1, math.ceil((hi[0] - x0) / cell_size))
        rows = max(1, math.ceil((hi[1] - y0) / cell_size))
        # floor/ceil on a float boundary can leave hi exactly on the open edge
        if x0 + cols * cell_size <= hi[0]:
            cols += 1
        if y0 + rows * cell_size <= hi[1]:
            rows += 1
        if rows * cols > MAX_GRID_CELLS:
            raise DomainError(
                f"grid of {cols}x{rows} cells is too large; the footprint is probably "
                "unbounded (horizon in view), pass a max_range"
            )
        return cls((x0, y0), cell_size, cols, rows)

    @classmethod
    def from_footprint(cls, h, K, cell_size=DEFAULT_CELL, margin=0.0, max_range=None):
        """Grid covering the valid-region footprint of an image."""
        pts = image_footprint(h, K, max_range=max_range)
        return cls.covering(pts, cell_size, margin)

    def expanded_to(self, points, margin=0.0):
        """Grid on the same lattice, grown to include ``points`` plus ``margin``."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        xmin, xmax, ymin, ymax = self.extent
        if len(pts):
            xmin = min(xmin, pts[:, 0].min() - margin)
            ymin = min(ymin, pts[:, 1].min() - margin)
            xmax = max(xmax, pts[:, 0].max() + margin)
            ymax = max(ymax, pts[:, 1].max() + margin)
        c = self.cell_size
        x0, y0 = self.origin
        left = math.ceil((x0 - xmin) / c - 1e-9)
        down = math.ceil((y0 - ymin) / c - 1e-9)
        nx0 = x0 - left * c
        ny0 = y0 - down * c
        cols = math.ceil((xmax - nx0) / c - 1e-9)
        rows = math.ceil((ymax - ny0) / c - 1e-9)
        if nx0 + cols * c <= xmax:
            cols += 1
        if ny0 + rows * c <= ymax:
            rows += 1
        return HeadPlaneGrid((nx0, ny0), c, max(cols, self.cols), max(rows, self.rows))

    def to_dict(self):
        return {
            "origin": list(self.origin),
            "cell": self.cell_size,
            "cols": self.cols,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["origin"]), float(d["cell"]), int(d["cols"]), int(d["rows"]))


@dataclass(frozen=True, eq=False)
class DensityMap:
    """Non-negative density raster tagged with its plane.

    Image-plane maps use ``cell_size = 1`` (one pixel) and origin ``(0, 0)``.
    """

    values: np.ndarray
    plane: str
    cell_size: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"density values must be 2D, got shape {v.shape}")
        if self.plane not in (HEAD, IMAGE):
            raise ValueError(f"unknown plane {self.plane!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @classmethod
    def on_grid(cls, values, grid):
        return cls(values, HEAD, grid.cell_size, grid.origin)

    @property
    def shape(self):
        return self.values.shape

    @property
    def cell_area(self):
        return self.cell_size * self.cell_size

    @property
    def grid(self):
        if self.plane != HEAD:
            raise PlaneMismatch("image-plane maps have no head-plane grid")
        return HeadPlaneGrid(self.origin, self.cell_size, self.shape[1], self.shape[0])

    def same_raster(self, other):
        return (
            self.plane == other.plane
            and self.shape == other.shape
            and self.cell_size == other.cell_size
            and self.origin == other.origin
        )

    def cell_masses(self):
        return self.values * self.cell_area


@dataclass(frozen=True, eq=False)
class AnnotationSet:
    """Head annotations (image pixels) for one frame."""

    frame: int
    heads: np.ndarray

    def __post_init__(self):
        heads = np.asarray(self.heads, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(heads)):
            raise ValueError("head annotations must be finite")
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "frame", int(self.frame))

    @property
    def count(self):
        return len(self.heads)

    def check_bounds(self, width, height):
        h = self.heads
        bad = ~((h[:, 0] >= 0) & (h[:, 0] < width) & (h[:, 1] >= 0) & (h[:, 1] < height))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainError(f"head {i} at {h[i].tolist()} lies outside the {width}x{height} image")

    def to_dict(self):
        return {"frame": self.frame, "heads": self.heads.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["frame"]), np.asarray(d.get("heads", []), dtype=np.float64).reshape(-1, 2))


def rasterize_points(points, sigma, grid, truncate=TRUNCATE):
    """Sum of fixed-``sigma`` Gaussians at head-plane ``points`` (metres).

    Raises HeadOutsideGrid for the first point outside the grid extent.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    inside = grid.contains(pts)
    if not np.all(inside):
        i = int(np.argmin(inside))
        raise HeadOutsideGrid(i, pts[i])
    values = kernels.gaussian_raster(
        pts, float(sigma), grid.origin[0], grid.origin[1], grid.cell_size, grid.rows, grid.cols, truncate
    )
    return DensityMap.on_grid(values, grid)


def map_heads(ann, h):
    """Head annotations mapped to head-plane metres."""
    if ann.count == 0:
        return np.empty((0, 2))
    return apply_homography(h.image_to_head(), ann.heads)


def head_plane_density(ann, h, sigma=DEFAULT_SIGMA, grid=None, *, expand_grid=False, cell_size=DEFAULT_CELL):
    """Ground-truth head-plane density of one annotated frame.

    Without ``grid`` the map covers the mapped heads plus a ``4 sigma``
    margin. ``expand_grid=True`` grows a given grid to cover outlying heads
    instead of raising HeadOutsideGrid.
    """
    pts = map_heads(ann, h)
    margin = TRUNCATE * sigma
    if grid is None:
        if len(pts) == 0:
            raise DomainError("an empty annotation set needs an explicit grid")
        grid = HeadPlaneGrid.covering(pts, cell_size, margin)
    elif expand_grid:
        outside = ~grid.contains(pts)
        if np.any(outside):
            logger.warning("expanding grid to cover %d outlying head(s)", int(outside.sum()))
            grid = grid.expanded_to(pts[outside], margin)
    return rasterize_points(pts, sigma, grid)


def _check_scale(m, shape=None):
    if not isinstance(m, ScaleMap):
        raise TypeError("expected a ScaleMap")
    if shape is not None and m.shape != shape:
        raise DimensionMismatch(f"scale map {m.shape} does not match raster {shape}")


def head_to_image_density(g, h, m):
    """Image-plane density ``F = M * G'(H p)`` with bilinear sampling of ``G'``."""
    if g.plane != HEAD:
        raise PlaneMismatch("head_to_image_density expects a head-plane map")
    _check_scale(m)
    h = h.image_to_head()
    values = kernels.warp_head_to_image(
        g.values, g.origin[0], g.origin[1], g.cell_size, h.matrix, m.values, m.valid
    )
    return DensityMap(np.maximum(values, 0.0), IMAGE)


def image_to_head_density(f, h, m, grid):
    """Head-plane density from an image-plane map.

    Each valid pixel carries mass ``F(p) * 1 px^2`` (equivalently the
    head-plane density ``F/M`` times the pixel's head-plane footprint ``M``);
    the mass is splatted at ``H p`` with bilinear weights and divided by the
    cell area.
    """
    if f.plane != IMAGE:
        raise PlaneMismatch("image_to_head_density expects an image-plane map")
    _check_scale(m, f.shape)
    h = h.image_to_head()
    mass = kernels.splat_image_to_head(
        f.values, m.valid, h.matrix, grid.origin[0], grid.origin[1], grid.cell_size,
        grid.rows, grid.cols, f.cell_area,
    )
    return DensityMap.on_grid(np.maximum(mass / grid.cell_area, 0.0), grid)


def _roi_mask(d, roi):
    if roi is None:
        return None
    mask = roi.values != 0 if isinstance(roi, DensityMap) else np.asarray(roi, dtype=bool)
    if mask.shape != d.shape:
        raise DimensionMismatch(f"ROI {mask.shape} does not match map {d.shape}")
    return mask


def total_count(d, roi=None):
    """Integrated people count, optionally restricted to ``roi``.

    ``roi`` is a boolean array or a DensityMap whose non-zero cells are inside.
    """
    mask = _roi_mask(d, roi)
    masses = d.cell_masses()
    if mask is not None:
        masses = np.where(mask, masses, 0.0)
    return float(masses.sum())
