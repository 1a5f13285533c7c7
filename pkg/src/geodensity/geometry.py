"""Camera model, telemetry homographies and perspective scale maps.

Conventions
-----------
World frame: the head plane is ``Z = 0`` and the origin lies directly below
the drone. ``Z`` grows away from the camera, so the camera centre sits at
``(0, 0, -altitude)``.

Camera frame: standard pinhole, ``x`` right, ``y`` down, ``z`` along the
optical axis. The rotation is ``R_y(pi/2 + pitch)``, so ``pitch = -pi/2`` is a
nadir view and ``pitch -> 0`` approaches a horizontal view. Because the tilt
axis is the camera ``y`` axis, the horizon (when visible) is a line of
constant ``u``.

Pixel centres are at ``(x + 0.5, y + 0.5)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import AtInfinity, SingularProjection

IMAGE_TO_HEAD = "image_to_head"
HEAD_TO_IMAGE = "head_to_image"

AT_INFINITY_EPS = 1e-12
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_dict(cls, d):
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )

    def to_dict(self):
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True)
class DronePose:
    """Altitude above the head plane (m) and camera pitch (rad)."""

    altitude: float
    pitch: float

    def __post_init__(self):
        if not self.altitude > 0:
            raise ValueError(f"altitude must be positive, got {self.altitude}")
        if not (-math.pi / 2 - 1e-12 <= self.pitch < 0.0):
            raise ValueError(f"pitch must lie in [-pi/2, 0), got {self.pitch}")


def rotation_from_pitch(pitch):
    """World-to-camera rotation ``R_y(pi/2 + pitch)``."""
    a = math.pi / 2 + pitch
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def camera_extrinsics(pose):
    """Return ``(R, t)`` with ``X_cam = R @ X_world + t``.

    ``t = altitude * R[:, 2]`` keeps the camera centre at ``(0, 0, -altitude)``
    for every pitch; at nadir this is ``t = (0, 0, altitude)``.
    """
    r = rotation_from_pitch(pose.pitch)
    return r, pose.altitude * r[:, 2]


def _normalize(m):
    scale = np.max(np.abs(m))
    if not np.isfinite(scale) or scale == 0.0:
        raise SingularProjection("homography matrix is zero or non-finite")
    return m / scale


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, stored with max-abs entry equal to 1.

    Normalisation uses a positive factor, so for pose-derived homographies the
    sign of the third homogeneous coordinate still tells front from back.
    """

    matrix: np.ndarray
    direction: str = IMAGE_TO_HEAD

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if self.direction not in (IMAGE_TO_HEAD, HEAD_TO_IMAGE):
            raise ValueError(f"unknown direction {self.direction!r}")
        m = _normalize(m)
        if abs(kernels.det3(m)) <= 1e-12:
            raise SingularProjection("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def inverse(self):
        other = HEAD_TO_IMAGE if self.direction == IMAGE_TO_HEAD else IMAGE_TO_HEAD
        return Homography(np.linalg.inv(self.matrix), other)

    def image_to_head(self):
        return self if self.direction == IMAGE_TO_HEAD else self.inverse()

    def head_to_image(self):
        return self if self.direction == HEAD_TO_IMAGE else self.inverse()

    def __repr__(self):
        return f"Homography({self.direction}, {self.matrix.tolist()!r})"


def head_to_image_matrix(K, pose):
    """``K [R1 | R2 | t]``: maps head-plane ``(x, y, 1)`` to image pixels."""
    r, t = camera_extrinsics(pose)
    return K.matrix @ np.column_stack([r[:, 0], r[:, 1], t])


def homography_image_to_head(K, pose):
    m = head_to_image_matrix(K, pose)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularProjection(f"projection is numerically singular (condition {cond:.3g})")
    return Homography(np.linalg.inv(m), IMAGE_TO_HEAD)


def project_points(K, pose, points):
    """Project head-plane points (metres) through the full 3x4 camera.

    Returns ``(uv, depth)``; ``uv`` is NaN where depth is not positive.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    r, t = camera_extrinsics(pose)
    world = np.column_stack([pts, np.zeros(len(pts))])
    cam = world @ r.T + t
    depth = cam[:, 2]
    uvw = cam @ K.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = uvw[:, :2] / uvw[:, 2:3]
    uv[depth <= 0] = np.nan
    return uv, depth


def _homogeneous(h, p):
    m = h.matrix if isinstance(h, Homography) else np.asarray(h, dtype=np.float64)
    pts = np.asarray(p, dtype=np.float64)
    flat = pts.reshape(-1, 2)
    a = m[0, 0] * flat[:, 0] + m[0, 1] * flat[:, 1] + m[0, 2]
    b = m[1, 0] * flat[:, 0] + m[1, 1] * flat[:, 1] + m[1, 2]
    w = m[2, 0] * flat[:, 0] + m[2, 1] * flat[:, 1] + m[2, 2]
    return m, pts.shape, flat, a, b, w


def _check_finite_w(a, b, w):
    bad = np.abs(w) < AT_INFINITY_EPS * np.sqrt(a * a + b * b + w * w)
    if np.any(bad):
        raise AtInfinity(f"{int(bad.sum())} point(s) map to the line at infinity")


def apply_homography(h, p):
    """Apply ``h`` to one point ``(2,)`` or an array of points ``(..., 2)``."""
    _, shape, _, a, b, w = _homogeneous(h, p)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("points must be finite")
    _check_finite_w(a, b, w)
    return np.column_stack([a / w, b / w]).reshape(shape)


def in_front(h, p):
    """Mask of image points whose back-projected ray hits the plane in front of the camera."""
    _, shape, _, a, b, w = _homogeneous(h, p)
    ok = w > AT_INFINITY_EPS * np.sqrt(a * a + b * b + w * w)
    return ok.reshape(shape[:-1])


def jacobian(h, p):
    """Analytic 2x2 Jacobian of the dehomogenised map at ``p``.

    For ``x' = a / w`` and ``y' = b / w``::

        dx'/dx = (h11 w - a h31) / w^2    dx'/dy = (h12 w - a h32) / w^2
        dy'/dx = (h21 w - b h31) / w^2    dy'/dy = (h22 w - b h32) / w^2
    """
    m, shape, _, a, b, w = _homogeneous(h, p)
    _check_finite_w(a, b, w)
    w2 = w * w
    j = np.empty((len(w), 2, 2))
    j[:, 0, 0] = (m[0, 0] * w - a * m[2, 0]) / w2
    j[:, 0, 1] = (m[0, 1] * w - a * m[2, 1]) / w2
    j[:, 1, 0] = (m[1, 0] * w - b * m[2, 0]) / w2
    j[:, 1, 1] = (m[1, 1] * w - b * m[2, 1]) / w2
    return j.reshape(shape[:-1] + (2, 2))


def local_scale(h, p):
    """Area magnification ``|det J|`` (head-plane m^2 per image px^2) at ``p``."""
    j = jacobian(h, p)
    det = j[..., 0, 0] * j[..., 1, 1] - j[..., 0, 1] * j[..., 1, 0]
    out = np.abs(det)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ScaleMap:
    """Per-pixel local scale; ``valid`` is False at or beyond the horizon."""

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("scale map must be 2D")
        ok = v > 0 if self.valid is None else np.asarray(self.valid, dtype=bool)
        if ok.shape != v.shape:
            raise ValueError("valid mask shape does not match values")
        if np.any(v[ok] <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("valid scale values must be positive and finite")
        v = np.where(ok, v, 0.0)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", ok)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


def scale_map(h, K):
    """Evaluate ``local_scale`` at every pixel centre of a ``K``-sized image."""
    h = h.image_to_head() if isinstance(h, Homography) else Homography(h)
    values, valid = kernels.scale_map(h.matrix, K.width, K.height, AT_INFINITY_EPS)
    return ScaleMap(values, valid)


def image_footprint(h, K, max_range=None, samples=65):
    """Head-plane points covering the valid image region.

    Samples a lattice over the full image rectangle (corners included), keeps
    points in front of the camera and, if ``max_range`` is given, within that
    distance of the origin. Returns an ``(n, 2)`` array.
    """
    h = h.image_to_head()
    us = np.linspace(0.0, K.width, samples)
    vs = np.linspace(0.0, K.height, samples)
    grid = np.stack(np.meshgrid(us, vs), axis=-1).reshape(-1, 2)
    ok = in_front(h, grid)
    pts = apply_homography(h, grid[ok]) if np.any(ok) else np.empty((0, 2))
    if max_range is not None:
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= max_range]
    return pts
