"""Exception hierarchy.

Each family carries the CLI exit code it maps to, so the command layer can
translate any library failure without a lookup table.
"""


class GeoDensityError(Exception):
    exit_code = 1


class InputError(GeoDensityError):
    """Missing file, malformed JSON, unknown frame, invalid config."""

    exit_code = 2


class GeometryError(GeoDensityError):
    exit_code = 3


class SingularProjection(GeometryError):
    pass


class AtInfinity(GeometryError):
    """A point maps onto the line at infinity (the horizon)."""


class DomainError(GeoDensityError):
    exit_code = 4


class HeadOutsideGrid(DomainError):
    def __init__(self, index, point, message=None):
        self.index = index
        self.point = tuple(float(v) for v in point)
        super().__init__(
            message
            or f"head {index} maps to ({self.point[0]:.3f}, {self.point[1]:.3f}) m, outside the grid"
        )


class DimensionMismatch(DomainError):
    pass


class TilingMismatch(DomainError):
    pass


class GridMismatch(DomainError):
    pass


class IndexOutOfRange(DomainError, IndexError):
    pass


class EmptyBatch(DomainError):
    pass


class ConfigInvalid(InputError):
    pass


class FormatError(GeoDensityError):
    exit_code = 5


class PlaneMismatch(FormatError):
    pass


class DmapFormatError(FormatError):
    pass
