"""Random-waypoint crowd simulator observed by a hovering drone camera.

People walk on the head plane towards uniformly drawn waypoints at a speed
never above ``v_max``; a person reaching their waypoint stops there for the
rest of the step and draws a new one. Per-step displacement is therefore
bounded by ``v_max * dt``, which is the only motion assumption the
conservation constraints rely on.
"""

from dataclasses import dataclass, field, replace
import copy
import math

import numpy as np

from .consistency import BlockGrid, count_points
from .density import AnnotationSet, HeadPlaneGrid
from .errors import ConfigInvalid
from .geometry import CameraIntrinsics, DronePose, homography_image_to_head, project_points

DEFAULT_INTRINSICS = {"fx": 1000.0, "fy": 1000.0, "cx": 640.0, "cy": 360.0, "width": 1280, "height": 720}


@dataclass(frozen=True, eq=False)
class CrowdState:
    time: float
    positions: np.ndarray
    velocities: np.ndarray
    waypoints: np.ndarray
    speeds: np.ndarray
    bounds: tuple
    v_max: float
    speed_range: tuple = (0.5, 1.0)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def n_persons(self):
        return len(self.positions)


def _draw_points(rng, bounds, n):
    xmin, xmax, ymin, ymax = bounds
    return np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])


def _draw_speeds(rng, v_max, speed_range, n):
    lo, hi = speed_range
    return np.minimum(rng.uniform(lo * v_max, hi * v_max, n), v_max)


def initial_state(n_persons, bounds, v_max, seed=0, speed_range=(0.5, 1.0)):
    rng = np.random.default_rng(seed)
    pos = _draw_points(rng, bounds, n_persons)
    wp = _draw_points(rng, bounds, n_persons)
    speeds = _draw_speeds(rng, v_max, speed_range, n_persons)
    return CrowdState(
        0.0, pos, np.zeros((n_persons, 2)), wp, speeds, tuple(bounds), float(v_max),
        tuple(speed_range), rng,
    )


def step(state, dt):
    """Advance every person by ``dt`` seconds; returns a new state."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = copy.deepcopy(state.rng)
    pos = state.positions
    delta = state.waypoints - pos
    dist = np.hypot(delta[:, 0], delta[:, 1])
    travel = state.speeds * dt
    arrive = (travel > 0) & (dist <= travel)
    moving = (travel > 0) & ~arrive
    new_pos = pos.copy()
    new_pos[arrive] = state.waypoints[arrive]
    frac = np.zeros_like(dist)
    frac[moving] = travel[moving] / dist[moving]
    new_pos[moving] = pos[moving] + delta[moving] * frac[moving, None]
    xmin, xmax, ymin, ymax = state.bounds
    new_pos[:, 0] = np.clip(new_pos[:, 0], xmin, xmax)
    new_pos[:, 1] = np.clip(new_pos[:, 1], ymin, ymax)
    velocities = (new_pos - pos) / dt
    waypoints = state.waypoints.copy()
    speeds = state.speeds.copy()
    n_arrived = int(arrive.sum())
    if n_arrived:
        waypoints[arrive] = _draw_points(rng, state.bounds, n_arrived)
        speeds[arrive] = _draw_speeds(rng, state.v_max, state.speed_range, n_arrived)
    return replace(
        state, time=state.time + dt, positions=new_pos, velocities=velocities,
        waypoints=waypoints, speeds=speeds, rng=rng,
    )


def visible(state, pose, K):
    """Mask of people in front of the camera and inside the image."""
    uv, depth = project_points(K, pose, state.positions)
    with np.errstate(invalid="ignore"):
        return (
            (depth > 0)
            & (uv[:, 0] >= 0) & (uv[:, 0] < K.width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)
        )


def telemetry_record(frame, pose, K):
    return {
        "frame": int(frame),
        "altitude_m": float(pose.altitude),
        "pitch_rad": float(pose.pitch),
        "intrinsics": K.to_dict(),
    }


def render_frame(state, pose, K, frame=0, altitude_std=0.0, pitch_std=0.0, rng=None):
    """Head annotations of the visible people plus the (optionally noisy) telemetry."""
    uv, _ = project_points(K, pose, state.positions)
    ann = AnnotationSet(frame, uv[visible(state, pose, K)])
    reported = pose
    if altitude_std > 0 or pitch_std > 0:
        if rng is None:
            raise ValueError("telemetry noise needs an rng")
        alt = pose.altitude + rng.normal(0.0, altitude_std) if altitude_std > 0 else pose.altitude
        pitch = pose.pitch + rng.normal(0.0, pitch_std) if pitch_std > 0 else pose.pitch
        reported = DronePose(max(alt, 1e-3), float(np.clip(pitch, -math.pi / 2, -1e-6)))
    return ann, telemetry_record(frame, reported, K)


def _keyframes(value, name):
    if isinstance(value, (int, float)):
        return np.array([[0.0, float(value)]])
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
        raise ConfigInvalid(f"{name} must be a number or a list of [time_s, value] pairs")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ConfigInvalid(f"{name} keyframe times must increase")
    return arr


@dataclass(frozen=True, eq=False)
class SimConfig:
    n_persons: int = 100
    v_max: float = 1.5
    fps: float = 25.0
    duration: float = 4.0
    seed: int = 0
    world: tuple = (-30.0, 30.0, -30.0, 30.0)
    speed_range: tuple = (0.5, 1.0)
    altitude: object = 30.0
    pitch: object = -math.pi / 2
    altitude_std: float = 0.0
    pitch_std: float = 0.0
    intrinsics: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics.from_dict(DEFAULT_INTRINSICS))
    block_m: float = 2.0
    cell_size: float = 0.1
    sigma: float = 0.5

    def __post_init__(self):
        if int(self.n_persons) < 0:
            raise ConfigInvalid("n_persons must be non-negative")
        if not self.v_max > 0:
            raise ConfigInvalid("v_max must be positive")
        if not self.fps > 0:
            raise ConfigInvalid("fps must be positive")
        if not self.duration > 0:
            raise ConfigInvalid("duration must be positive")
        lo, hi = self.speed_range
        if not (0 <= lo <= hi <= 1):
            raise ConfigInvalid("speed_range must satisfy 0 <= lo <= hi <= 1 (fractions of v_max)")
        xmin, xmax, ymin, ymax = self.world
        if not (xmin < xmax and ymin < ymax):
            raise ConfigInvalid("world bounds must be (xmin, xmax, ymin, ymax) with positive extent")
        if not (self.block_m > 0 and self.cell_size > 0 and self.sigma > 0):
            raise ConfigInvalid("block_m, cell_size and sigma must be positive")
        for extent in (xmax - xmin, ymax - ymin):
            if abs(extent / self.block_m - round(extent / self.block_m)) > 1e-9:
                raise ConfigInvalid("world extents must be whole multiples of block_m")
        if abs(self.block_m / self.cell_size - round(self.block_m / self.cell_size)) > 1e-9:
            raise ConfigInvalid("block_m must be a whole multiple of cell_size")
        if self.altitude_std < 0 or self.pitch_std < 0:
            raise ConfigInvalid("noise std must be non-negative")
        object.__setattr__(self, "altitude", _keyframes(self.altitude, "altitude"))
        object.__setattr__(self, "pitch", _keyframes(self.pitch, "pitch"))
        try:
            for t in np.concatenate([self.altitude[:, 0], self.pitch[:, 0], [0.0, self.duration]]):
                self.pose_at(t)
        except ValueError as exc:
            raise ConfigInvalid(f"invalid flight path: {exc}") from None

    @property
    def n_frames(self):
        return int(round(self.duration * self.fps))

    @property
    def dt(self):
        return 1.0 / self.fps

    def pose_at(self, t):
        alt = float(np.interp(t, self.altitude[:, 0], self.altitude[:, 1]))
        pitch = float(np.interp(t, self.pitch[:, 0], self.pitch[:, 1]))
        return DronePose(alt, pitch)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "intrinsics" in kw:
                kw["intrinsics"] = CameraIntrinsics.from_dict(kw["intrinsics"])
            for key in ("world", "speed_range"):
                if key in kw:
                    kw[key] = tuple(float(v) for v in kw[key])
            return cls(**kw)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"invalid simulation config: {exc}") from None

    def to_dict(self):
        return {
            "n_persons": int(self.n_persons),
            "v_max": self.v_max,
            "fps": self.fps,
            "duration": self.duration,
            "seed": int(self.seed),
            "world": list(self.world),
            "speed_range": list(self.speed_range),
            "altitude": self.altitude.tolist(),
            "pitch": self.pitch.tolist(),
            "altitude_std": self.altitude_std,
            "pitch_std": self.pitch_std,
            "intrinsics": self.intrinsics.to_dict(),
            "block_m": self.block_m,
            "cell_size": self.cell_size,
            "sigma": self.sigma,
        }


def world_grid(config):
    """Head-plane raster over the world, padded by whole blocks covering ``4 sigma``."""
    pad = math.ceil(4.0 * config.sigma / config.block_m) * config.block_m
    xmin, xmax, ymin, ymax = config.world
    cols = int(round((xmax - xmin + 2 * pad) / config.cell_size))
    rows = int(round((ymax - ymin + 2 * pad) / config.cell_size))
    return HeadPlaneGrid((xmin - pad, ymin - pad), config.cell_size, cols, rows)


def world_blocks(config, exempt=()):
    return BlockGrid.from_metres(world_grid(config), config.block_m, exempt)


def blocks_outside_view(blocks, K, poses):
    """Blocks not entirely inside the camera footprint for every pose."""
    r, c = blocks.shape
    b = blocks.block_m
    x0, y0 = blocks.grid.origin
    bi, bj = np.mgrid[0:r, 0:c]
    inside = np.ones((r, c), dtype=bool)
    for pose in poses:
        for di in (0, 1):
            for dj in (0, 1):
                corners = np.column_stack([(x0 + (bj + dj) * b).ravel(), (y0 + (bi + di) * b).ravel()])
                uv, depth = project_points(K, pose, corners)
                with np.errstate(invalid="ignore"):
                    ok = (depth > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= K.width) & (uv[:, 1] >= 0) & (uv[:, 1] <= K.height)
                inside &= ok.reshape(r, c)
    return sorted((int(i), int(j)) for i, j in zip(*np.nonzero(~inside)))


@dataclass(frozen=True, eq=False)
class SimFrame:
    frame: int
    time: float
    pose: DronePose
    annotations: AnnotationSet
    telemetry: dict
    true_counts: object
    positions: np.ndarray


def trajectory(config):
    """Crowd states for every frame; frame ``i`` is ``i`` steps from the start."""
    state = initial_state(config.n_persons, config.world, config.v_max, config.seed, config.speed_range)
    states = [state]
    for _ in range(config.n_frames - 1):
        state = step(state, config.dt)
        states.append(state)
    return states


def simulate(config):
    """Full deterministic sequence of annotations, telemetry and exact block counts."""
    if not isinstance(config, SimConfig):
        raise ConfigInvalid("simulate expects a SimConfig")
    blocks = world_blocks(config)
    noise_rng = np.random.default_rng([int(config.seed), 1])
    frames = []
    for i, state in enumerate(trajectory(config)):
        pose = config.pose_at(state.time)
        ann, record = render_frame(
            state, pose, config.intrinsics, i, config.altitude_std, config.pitch_std, noise_rng
        )
        frames.append(
            SimFrame(i, state.time, pose, ann, record, count_points(state.positions, blocks, state.time), state.positions)
        )
    return frames


def frame_homography(record):
    """Image-to-head homography from a telemetry record."""
    K = CameraIntrinsics.from_dict(record["intrinsics"])
    pose = DronePose(float(record["altitude_m"]), float(record["pitch_rad"]))
    return homography_image_to_head(K, pose), K, pose
