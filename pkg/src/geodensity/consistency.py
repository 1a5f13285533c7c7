"""People-conservation constraints between frames and the training losses.

The head plane is tiled into square blocks. Between two instants nobody may
travel further than one block, so the count of an interior block at ``t1`` is
bounded by the count of its 3x3 neighbourhood (itself included) at ``t0`` and
at ``t2``. Boundary blocks and blocks marked as entrances/exits are exempt.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .density import HEAD, DensityMap, HeadPlaneGrid, _roi_mask
from .errors import GridMismatch, IndexOutOfRange, PlaneMismatch, TilingMismatch

PAPER_BLOCK_PX = 30


@dataclass(frozen=True, eq=False)
class BlockGrid:
    """Square blocks of ``block_cells x block_cells`` raster cells."""

    grid: HeadPlaneGrid
    block_cells: int
    exempt: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        b = int(self.block_cells)
        if b <= 0:
            raise TilingMismatch(f"block size must be positive, got {self.block_cells}")
        if self.grid.rows % b or self.grid.cols % b:
            raise TilingMismatch(
                f"{self.grid.cols}x{self.grid.rows} cells cannot be tiled by {b}x{b} blocks"
            )
        object.__setattr__(self, "block_cells", b)
        ex = frozenset((int(i), int(j)) for i, j in self.exempt)
        for i, j in ex:
            if not (0 <= i < self.grid.rows // b and 0 <= j < self.grid.cols // b):
                raise IndexOutOfRange(f"exempt block ({i}, {j}) is outside the block grid")
        object.__setattr__(self, "exempt", ex)

    @classmethod
    def from_metres(cls, grid, block_m, exempt=()):
        ratio = block_m / grid.cell_size
        cells = round(ratio)
        if cells < 1 or abs(ratio - cells) > 1e-6 * max(1.0, ratio):
            raise TilingMismatch(
                f"block side {block_m} m is not a whole number of {grid.cell_size} m cells"
            )
        return cls(grid, cells, frozenset(map(tuple, exempt)))

    @classmethod
    def from_pixel_blocks(cls, grid, metres_per_pixel, block_px=PAPER_BLOCK_PX, exempt=()):
        """Blocks of ``block_px`` pixels for a raster built at image-equivalent resolution."""
        return cls.from_metres(grid, block_px * metres_per_pixel, exempt)

    @classmethod
    def from_config(cls, grid, config):
        """From ``{"block_m": float, "exempt": [[bi, bj], ...]}``."""
        return cls.from_metres(grid, float(config["block_m"]), config.get("exempt", ()))

    def to_config(self):
        return {"block_m": self.block_m, "exempt": sorted([list(k) for k in self.exempt])}

    @property
    def block_m(self):
        return self.block_cells * self.grid.cell_size

    @property
    def shape(self):
        return (self.grid.rows // self.block_cells, self.grid.cols // self.block_cells)

    @property
    def n_blocks(self):
        r, c = self.shape
        return r * c

    @property
    def interior(self):
        r, c = self.shape
        mask = np.zeros((r, c), dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    @property
    def constrained(self):
        mask = self.interior
        for i, j in self.exempt:
            mask[i, j] = False
        return mask

    def block_index(self, k):
        """Normalise ``k`` (flat int or ``(bi, bj)``) to ``(bi, bj)``."""
        r, c = self.shape
        if isinstance(k, (tuple, list, np.ndarray)):
            bi, bj = int(k[0]), int(k[1])
        else:
            k = int(k)
            if not 0 <= k < r * c:
                raise IndexOutOfRange(f"block {k} outside 0..{r * c - 1}")
            bi, bj = divmod(k, c)
        if not (0 <= bi < r and 0 <= bj < c):
            raise IndexOutOfRange(f"block ({bi}, {bj}) outside {r}x{c} blocks")
        return bi, bj

    def block_of(self, points):
        """Block indices ``(bi, bj)`` of head-plane points; ``-1`` when outside."""
        i, j = self.grid.cell_of(points)
        bi = np.floor_divide(i, self.block_cells)
        bj = np.floor_divide(j, self.block_cells)
        r, c = self.shape
        out = (bi < 0) | (bi >= r) | (bj < 0) | (bj >= c)
        bi[out] = -1
        bj[out] = -1
        return bi, bj

    def same_layout(self, other):
        return (
            self.grid == other.grid
            and self.block_cells == other.block_cells
            and self.exempt == other.exempt
        )


@dataclass(frozen=True, eq=False)
class BlockCounts:
    counts: np.ndarray
    time: float = None

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError("block counts must be 2D")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("block counts must be finite and non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self):
        return math.fsum(self.counts.ravel())


def block_counts(d, blocks, time=None):
    """Per-block people counts ``m_k = sum(value * cell_area)`` over the block's cells."""
    if d.plane != HEAD:
        raise PlaneMismatch("block counts need a head-plane map")
    if d.grid != blocks.grid:
        raise TilingMismatch("density map raster does not match the block grid")
    r, c = blocks.shape
    b = blocks.block_cells
    masses = d.cell_masses().reshape(r, b, c, b)
    return BlockCounts(masses.sum(axis=(1, 3)), time)


def count_points(points, blocks, time=None):
    """Exact per-block counts of point positions; points outside the grid are ignored."""
    bi, bj = blocks.block_of(points)
    keep = bi >= 0
    counts = np.zeros(blocks.shape)
    np.add.at(counts, (bi[keep], bj[keep]), 1.0)
    return BlockCounts(counts, time)


def neighborhood_sums(counts):
    """``U_k``: sum over the 3x3 neighbourhood of every block, clipped at the border."""
    c = counts.counts if isinstance(counts, BlockCounts) else np.asarray(counts, dtype=np.float64)
    p = np.pad(c, 1)
    r, w = c.shape
    u = np.zeros_like(c)
    for di in range(3):
        for dj in range(3):
            u += p[di : di + r, dj : dj + w]
    return u


def neighborhood_sum(counts, blocks, k):
    bi, bj = blocks.block_index(k)
    _check_counts(blocks, counts)
    c = counts.counts
    return float(c[max(bi - 1, 0) : bi + 2, max(bj - 1, 0) : bj + 2].sum())


def _check_counts(blocks, *counts):
    for c in counts:
        if c.counts.shape != blocks.shape:
            raise GridMismatch(f"block counts {c.counts.shape} do not match block grid {blocks.shape}")


@dataclass(frozen=True)
class Violation:
    block: tuple
    excess_prev: float
    excess_next: float

    def to_dict(self):
        return {
            "block": [int(self.block[0]), int(self.block[1])],
            "excess_prev": self.excess_prev,
            "excess_next": self.excess_next,
        }


def conservation_check(c0, c1, c2, blocks, slack=None):
    """Constrained blocks whose ``t1`` count exceeds a neighbourhood sum by more than ``slack``.

    Default slack is ``1e-6`` times the total count at ``t1``. Excesses are
    reported clipped at zero.
    """
    _check_counts(blocks, c0, c1, c2)
    if slack is None:
        slack = 1e-6 * c1.total
    m = c1.counts
    e0 = m - neighborhood_sums(c0)
    e2 = m - neighborhood_sums(c2)
    bad = blocks.constrained & ((e0 > slack) | (e2 > slack))
    return [
        Violation((int(i), int(j)), max(0.0, float(e0[i, j])), max(0.0, float(e2[i, j])))
        for i, j in zip(*np.nonzero(bad))
    ]


def temporal_loss_from_counts(c0, c1, c2, blocks):
    """Squared-hinge conservation penalty averaged over ``2K`` constrained terms."""
    _check_counts(blocks, c0, c1, c2)
    mask = blocks.constrained
    k = int(mask.sum())
    if k == 0:
        return 0.0
    m = c1.counts[mask]
    h0 = np.maximum(0.0, m - neighborhood_sums(c0)[mask])
    h2 = np.maximum(0.0, m - neighborhood_sums(c2)[mask])
    # fsum: exact, so the value does not depend on block order or on t0/t2 order
    loss = math.fsum(np.concatenate([h0 * h0, h2 * h2])) / (2 * k)
    if loss == 0.0 and (h0.any() or h2.any()):
        # squares of tiny excesses underflow; keep loss > 0 iff a constraint is violated
        return math.ulp(0.0)
    return loss


def temporal_loss(g0, g1, g2, blocks):
    for g in (g0, g1, g2):
        if g.plane != HEAD:
            raise PlaneMismatch("temporal loss needs head-plane maps")
        if g.grid != blocks.grid:
            raise GridMismatch("density maps do not share the block grid raster")
    return temporal_loss_from_counts(
        block_counts(g0, blocks), block_counts(g1, blocks), block_counts(g2, blocks), blocks
    )


def head_plane_loss(predicted, truth, roi=None):
    """Mean squared density error over the (ROI-selected) cells."""
    if not predicted.same_raster(truth):
        raise GridMismatch("predicted and ground-truth maps are on different rasters")
    diff = predicted.values - truth.values
    mask = _roi_mask(truth, roi)
    sq = diff * diff if mask is None else (diff * diff)[mask]
    if sq.size == 0:
        return 0.0
    return float(sq.mean())


def composite_loss(predicted, truth, blocks, roi=None):
    """``head_plane_loss`` on the middle frame plus ``temporal_loss`` on the triplet."""
    p0, p1, p2 = predicted
    return head_plane_loss(p1, truth, roi) + temporal_loss(p0, p1, p2, blocks)


def density_from_counts(counts, blocks):
    """Head-plane map spreading each block count uniformly over its cells.

    Handy for building fixtures with exact block counts.
    """
    b = blocks.block_cells
    per_cell = np.repeat(np.repeat(counts.counts, b, axis=0), b, axis=1) / (b * b)
    return DensityMap.on_grid(per_cell / blocks.grid.cell_area, blocks.grid)
