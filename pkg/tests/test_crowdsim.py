import math

import numpy as np
import pytest

from geodensity.consistency import BlockGrid, block_counts, conservation_check, count_points
from geodensity.crowdsim import (
    CrowdState,
    SimConfig,
    blocks_outside_view,
    frame_homography,
    initial_state,
    render_frame,
    simulate,
    step,
    trajectory,
    visible,
    world_blocks,
    world_grid,
)
from geodensity.density import HeadPlaneGrid, rasterize_points
from geodensity.errors import ConfigInvalid
from geodensity.geometry import DronePose, apply_homography, project_points

from oracles import forward, projection_3x4

WORLD = (-20.0, 20.0, -20.0, 20.0)


def single_person(pos, waypoint, speed, v_max):
    return CrowdState(
        0.0, np.array([pos], float), np.zeros((1, 2)), np.array([waypoint], float),
        np.array([speed], float), WORLD, v_max, (0.5, 1.0), np.random.default_rng(0),
    )


def test_zero_speed_state_unchanged():
    s = initial_state(20, WORLD, v_max=0.0, seed=1)
    s2 = step(s, 0.5)
    assert s2.time == 0.5
    np.testing.assert_array_equal(s2.positions, s.positions)
    np.testing.assert_array_equal(s2.waypoints, s.waypoints)
    assert not s2.velocities.any()


def test_clamped_step_arrives_without_overshoot():
    s = single_person((1.0, 2.0), (2.0, 2.0), speed=2.0, v_max=2.0)
    s2 = step(s, 1.0)
    assert s2.positions[0].tolist() == [2.0, 2.0]
    assert not np.array_equal(s2.waypoints[0], [2.0, 2.0])


def test_partial_step_moves_towards_waypoint():
    s = single_person((0.0, 0.0), (3.0, 4.0), speed=1.0, v_max=2.0)
    s2 = step(s, 1.0)
    np.testing.assert_allclose(s2.positions[0], [0.6, 0.8], rtol=1e-15)
    np.testing.assert_allclose(np.hypot(*s2.velocities[0]), 1.0, rtol=1e-15)


def test_step_rejects_bad_dt():
    s = initial_state(2, WORLD, 1.0)
    for dt in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            step(s, dt)


def test_displacement_bound_over_long_run():
    v_max, dt = 1.5, 0.04
    s = initial_state(200, WORLD, v_max, seed=9, speed_range=(0.0, 1.0))
    worst = 0.0
    for _ in range(1000):
        s2 = step(s, dt)
        worst = max(worst, float(np.max(np.hypot(*(s2.positions - s.positions).T))))
        assert np.all(np.hypot(*s2.velocities.T) <= v_max * (1 + 1e-12))
        lo = np.array([WORLD[0], WORLD[2]])
        hi = np.array([WORLD[1], WORLD[3]])
        assert np.all((s2.positions >= lo) & (s2.positions <= hi))
        s = s2
    assert worst <= v_max * dt + 1e-12


def test_step_is_deterministic_and_pure():
    s = initial_state(50, WORLD, 1.5, seed=4)
    a = step(step(s, 0.1), 0.1)
    b = step(step(s, 0.1), 0.1)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.waypoints.tobytes() == b.waypoints.tobytes()


# -- rendering -----------------------------------------------------------------

def test_nadir_origin_hits_principal_point(camera):
    s = single_person((0.0, 0.0), (5.0, 5.0), 1.0, 1.5)
    ann, rec = render_frame(s, DronePose(25.0, -math.pi / 2), camera, frame=7)
    assert ann.frame == 7 and ann.count == 1
    np.testing.assert_allclose(ann.heads[0], [camera.cx, camera.cy], atol=1e-9)
    assert rec == {
        "frame": 7, "altitude_m": 25.0, "pitch_rad": -math.pi / 2, "intrinsics": camera.to_dict(),
    }


def test_people_behind_camera_are_absent(camera):
    pose = DronePose(10.0, -0.2)
    ring = 500.0 * np.column_stack([np.cos(np.linspace(0, 2 * math.pi, 73)), np.sin(np.linspace(0, 2 * math.pi, 73))])
    P = projection_3x4(camera.fx, camera.fy, camera.cx, camera.cy, pose.altitude, pose.pitch)
    _, depth = forward(P, ring)
    behind = depth <= 0
    assert behind.any()
    s = CrowdState(0.0, ring, np.zeros_like(ring), ring, np.zeros(len(ring)), (-600, 600, -600, 600), 1.0)
    assert not visible(s, pose, camera)[behind].any()
    _, lib_depth = project_points(camera, pose, ring)
    np.testing.assert_array_equal(lib_depth <= 0, behind)


def test_render_matches_independent_projection(camera, rng):
    pose = DronePose(18.0, -1.0)
    s = initial_state(300, WORLD, 1.5, seed=2)
    ann, _ = render_frame(s, pose, camera)
    P = projection_3x4(camera.fx, camera.fy, camera.cx, camera.cy, pose.altitude, pose.pitch)
    uv, depth = forward(P, s.positions)
    inside = (depth > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < camera.width) & (uv[:, 1] >= 0) & (uv[:, 1] < camera.height)
    np.testing.assert_allclose(ann.heads, uv[inside], rtol=1e-10, atol=1e-8)


@pytest.mark.parametrize("pitch", [-math.pi / 2, -1.2, -0.7])
def test_render_roundtrip_through_homography(camera, pitch):
    pose = DronePose(22.0, pitch)
    s = initial_state(400, WORLD, 1.5, seed=3)
    ann, rec = render_frame(s, pose, camera)
    h, _, _ = frame_homography(rec)
    back = apply_homography(h, ann.heads)
    truth = s.positions[visible(s, pose, camera)]
    assert ann.count > 0
    assert np.max(np.hypot(*(back - truth).T)) < 1e-6


def test_telemetry_noise(camera):
    s = initial_state(5, WORLD, 1.5)
    pose = DronePose(30.0, -1.0)
    _, rec = render_frame(s, pose, camera, altitude_std=0.5, pitch_std=0.01, rng=np.random.default_rng(0))
    assert rec["altitude_m"] != 30.0 and rec["pitch_rad"] != -1.0
    with pytest.raises(ValueError):
        render_frame(s, pose, camera, altitude_std=0.5)


# -- config and sequences ------------------------------------------------------------

def test_config_validation():
    for bad in (
        {"v_max": 0.0}, {"fps": -1.0}, {"duration": 0.0}, {"n_persons": -1},
        {"world": (0.0, 0.0, 0.0, 1.0)}, {"world": (0.0, 3.0, 0.0, 4.0)},
        {"block_m": 0.25, "cell_size": 0.1}, {"speed_range": (0.8, 0.2)},
        {"altitude": [[0.0, 10.0], [0.0, 20.0]]}, {"pitch": 0.5}, {"altitude": -3.0},
    ):
        with pytest.raises(ConfigInvalid):
            SimConfig(**bad)
    with pytest.raises(ConfigInvalid):
        SimConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigInvalid):
        simulate({"n_persons": 3})


def test_config_dict_roundtrip():
    c = SimConfig(n_persons=7, altitude=[[0.0, 20.0], [2.0, 40.0]], pitch=-1.0, seed=5)
    back = SimConfig.from_dict(c.to_dict())
    assert back.to_dict() == c.to_dict()
    assert c.pose_at(1.0).altitude == pytest.approx(30.0)
    assert c.n_frames == 100


def test_zero_persons_gives_empty_frames():
    frames = simulate(SimConfig(n_persons=0, duration=0.4))
    assert len(frames) == 10
    assert all(f.annotations.count == 0 for f in frames)
    assert all(f.true_counts.total == 0 for f in frames)


def test_simulation_is_deterministic():
    cfg = SimConfig(n_persons=50, duration=1.0, seed=11, altitude_std=0.2, pitch_std=0.005)
    a, b = simulate(cfg), simulate(cfg)
    for fa, fb in zip(a, b):
        assert fa.annotations.heads.tobytes() == fb.annotations.heads.tobytes()
        assert fa.telemetry == fb.telemetry
        assert fa.true_counts.counts.tobytes() == fb.true_counts.counts.tobytes()
    c = simulate(SimConfig(n_persons=50, duration=1.0, seed=12))
    assert a[0].positions.tobytes() != c[0].positions.tobytes()


def test_visible_count_regime(camera):
    # 60 m x 60 m world, nadir at 30 m sees ~38 m x 22 m, so ~23% of the crowd
    cfg = SimConfig(n_persons=600, duration=2.0, seed=0)
    counts = [f.annotations.count for f in simulate(cfg)]
    assert 54 <= min(counts) and max(counts) <= 301


def test_world_grid_padding_is_whole_blocks():
    cfg = SimConfig(sigma=0.5, block_m=2.0)
    g = world_grid(cfg)
    assert g.origin == (-32.0, -32.0)
    assert (g.cols, g.rows) == (640, 640)
    assert world_blocks(cfg).shape == (32, 32)


@pytest.mark.parametrize("delta", [1, 5, 10])
def test_true_counts_satisfy_conservation(delta):
    cfg = SimConfig(n_persons=100, duration=8.0, seed=21)
    blocks = world_blocks(cfg)
    assert blocks.block_m >= cfg.v_max * delta / cfg.fps
    frames = simulate(cfg)
    for i in range(delta, len(frames) - delta):
        c0, c1, c2 = (frames[j].true_counts for j in (i - delta, i, i + delta))
        assert conservation_check(c0, c1, c2, blocks, slack=0.0) == []


def test_small_blocks_do_get_violations():
    # sanity check of the oracle: blocks far smaller than the step distance break the bound
    cfg = SimConfig(n_persons=300, duration=4.0, seed=21, v_max=1.5, block_m=0.2, sigma=0.05)
    blocks = world_blocks(cfg)
    frames = simulate(cfg)
    found = any(
        conservation_check(frames[i - 10].true_counts, frames[i].true_counts, frames[i + 10].true_counts, blocks, 0.0)
        for i in range(10, len(frames) - 10, 5)
    )
    assert found


def test_rasterized_counts_match_true_counts(rng):
    # persons kept >= 4 sigma from block borders
    grid = HeadPlaneGrid((0.0, 0.0), 0.1, 300, 300)
    blocks = BlockGrid.from_metres(grid, 5.0)
    per_block = rng.integers(0, 6, blocks.shape)
    pts = []
    for (i, j), n in np.ndenumerate(per_block):
        pts.extend(rng.uniform([j * 5 + 2.0, i * 5 + 2.0], [j * 5 + 3.0, i * 5 + 3.0], (n, 2)))
    pts = np.array(pts)
    true = count_points(pts, blocks).counts
    raster = block_counts(rasterize_points(pts, 0.5, grid), blocks).counts
    np.testing.assert_array_equal(true, per_block)
    assert np.all(np.abs(raster - true) <= 1e-2 * (true + 1))
    assert np.abs(raster - true).sum() <= 0.05 * true.sum()


def test_blocks_outside_view(camera):
    cfg = SimConfig(world=(-10.0, 10.0, -10.0, 10.0), altitude=10.0)
    blocks = world_blocks(cfg)
    out = set(blocks_outside_view(blocks, camera, [cfg.pose_at(0.0)]))
    # footprint at 10 m nadir is 12.8 m x 7.2 m around the origin
    r, c = blocks.shape
    assert (r // 2, c // 2) not in out
    assert (0, 0) in out and (r - 1, c - 1) in out


def test_trajectory_length_and_times():
    cfg = SimConfig(n_persons=3, duration=1.0, fps=10.0)
    states = trajectory(cfg)
    assert len(states) == 10
    assert states[-1].time == pytest.approx(0.9)
