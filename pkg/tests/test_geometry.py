import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geodensity.errors import AtInfinity, SingularProjection
from geodensity.geometry import (
    HEAD_TO_IMAGE,
    IMAGE_TO_HEAD,
    CameraIntrinsics,
    DronePose,
    Homography,
    apply_homography,
    camera_extrinsics,
    head_to_image_matrix,
    homography_image_to_head,
    in_front,
    jacobian,
    local_scale,
    project_points,
    rotation_from_pitch,
    scale_map,
)

from oracles import backproject, fd_scale, forward, projection_3x4, random_homography

SQ2 = math.sqrt(2) / 2


# -- rotation ---------------------------------------------------------------

def test_rotation_nadir_is_identity():
    np.testing.assert_allclose(rotation_from_pitch(-math.pi / 2), np.eye(3), atol=1e-15)


def test_rotation_horizontal():
    expected = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], dtype=float)
    np.testing.assert_allclose(rotation_from_pitch(0.0), expected, atol=1e-15)


def test_rotation_quarter_pitch():
    r = rotation_from_pitch(-math.pi / 4)
    np.testing.assert_allclose(r[[0, 0, 2, 2], [0, 2, 0, 2]], [SQ2, SQ2, -SQ2, SQ2], atol=1e-15)
    assert r[1, 1] == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-10.0, 10.0, allow_nan=False))
def test_rotation_orthonormal(pitch):
    r = rotation_from_pitch(pitch)
    assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(r) - 1.0) < 1e-12


# -- domain types -----------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(fx=0, fy=1, cx=0, cy=0, width=10, height=10),
    dict(fx=1, fy=-1, cx=0, cy=0, width=10, height=10),
    dict(fx=1, fy=1, cx=0, cy=0, width=0, height=10),
])
def test_intrinsics_invariants(kwargs):
    with pytest.raises(ValueError):
        CameraIntrinsics(**kwargs)


@pytest.mark.parametrize("altitude,pitch", [(0.0, -1.0), (-1.0, -1.0), (10.0, 0.0), (10.0, 0.3), (10.0, -2.0)])
def test_pose_invariants(altitude, pitch):
    with pytest.raises(ValueError):
        DronePose(altitude, pitch)


def test_camera_centre_above_origin():
    for pitch in np.linspace(-math.pi / 2, -0.05, 9):
        r, t = camera_extrinsics(DronePose(12.0, pitch))
        np.testing.assert_allclose(-r.T @ t, [0.0, 0.0, -12.0], atol=1e-12)


def test_nadir_translation_matches_altitude_vector():
    _, t = camera_extrinsics(DronePose(7.0, -math.pi / 2))
    np.testing.assert_allclose(t, [0.0, 0.0, 7.0], atol=1e-15)


def test_homography_normalised_and_invertible(camera, oblique):
    h = homography_image_to_head(camera, oblique)
    assert np.max(np.abs(h.matrix)) == pytest.approx(1.0)
    back = h.inverse().inverse()
    np.testing.assert_allclose(back.matrix, h.matrix, atol=1e-12)
    assert h.inverse().direction == HEAD_TO_IMAGE
    assert h.image_to_head() is h


def test_singular_homography_rejected():
    with pytest.raises(SingularProjection):
        Homography(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(SingularProjection):
        Homography(np.zeros((3, 3)))


def test_singular_projection_from_degenerate_camera(monkeypatch):
    import geodensity.geometry as g

    monkeypatch.setattr(g, "head_to_image_matrix", lambda K, pose: np.diag([1.0, 1.0, 1e-14]))
    with pytest.raises(SingularProjection):
        g.homography_image_to_head(CameraIntrinsics(1, 1, 0, 0, 2, 2), DronePose(1.0, -1.0))


# -- homography from telemetry ------------------------------------------------

def test_nadir_principal_point_maps_to_origin():
    K = CameraIntrinsics(1000, 1000, 0, 0, 640, 480)
    h = homography_image_to_head(K, DronePose(10.0, -math.pi / 2))
    np.testing.assert_allclose(apply_homography(h, (0.0, 0.0)), [0.0, 0.0], atol=1e-12)


def test_nadir_offset_pixel_distance_matches_linear_solve():
    K = CameraIntrinsics(1000, 1000, 0, 0, 640, 480)
    h = homography_image_to_head(K, DronePose(10.0, -math.pi / 2))
    # oracle: back-project through an independently built 3x4 camera
    expected = backproject(projection_3x4(1000, 1000, 0, 0, 10.0, -math.pi / 2), 100.0, 0.0)
    np.testing.assert_allclose(expected, [1.0, 0.0], atol=1e-12)
    got = apply_homography(h, (100.0, 0.0))
    np.testing.assert_allclose(got, expected, atol=1e-12)
    assert math.hypot(*got) == pytest.approx(100 * 10.0 / 1000, abs=1e-12)


def test_homography_matches_independent_camera(camera, rng):
    for _ in range(20):
        pose = DronePose(rng.uniform(5, 80), rng.uniform(-math.pi / 2, -0.2))
        h = homography_image_to_head(camera, pose)
        P = projection_3x4(camera.fx, camera.fy, camera.cx, camera.cy, pose.altitude, pose.pitch)
        np.testing.assert_allclose(head_to_image_matrix(camera, pose), P[:, [0, 1, 3]], rtol=1e-12, atol=1e-9)
        for u, v in rng.uniform([0, 0], [camera.width, camera.height], (10, 2)):
            if in_front(h, (u, v)):
                q = apply_homography(h, (u, v))
                np.testing.assert_allclose(q, backproject(P, u, v), rtol=1e-9, atol=1e-9)


def test_roundtrip_head_image_head(camera, oblique, rng):
    h = homography_image_to_head(camera, oblique)
    P = projection_3x4(camera.fx, camera.fy, camera.cx, camera.cy, oblique.altitude, oblique.pitch)
    uv = rng.uniform([0, 0], [camera.width, camera.height], (100, 2))
    pts = apply_homography(h, uv)
    image, depth = forward(P, pts)
    assert np.all(depth > 0)
    back = apply_homography(h, image)
    assert np.max(np.abs(back - pts)) < 1e-9


def test_project_points_depth_sign(camera):
    pose = DronePose(10.0, -math.pi / 4)
    # the principal ray hits the plane at x = -h tan(pi/4) = -10
    uv, depth = project_points(camera, pose, [(-10.0, 0.0), (20.0, 0.0)])
    np.testing.assert_allclose(uv[0], [camera.cx, camera.cy], atol=1e-9)
    assert depth[0] > 0 and depth[1] < 0
    assert np.all(np.isnan(uv[1]))


# -- apply_homography -----------------------------------------------------------

def test_apply_identity():
    np.testing.assert_array_equal(apply_homography(Homography(np.eye(3)), (3.5, -2.0)), [3.5, -2.0])


def test_apply_pure_scaling():
    np.testing.assert_allclose(apply_homography(Homography(np.diag([2.0, 2.0, 1.0])), (1.0, 1.0)), [2.0, 2.0])


def test_apply_perspective_row():
    # H (0, 10, 1)^T = (0, 10, 2)^T -> (0, 5)
    h = Homography(np.array([[1, 0, 0], [0, 1, 0], [0, 0.1, 1.0]]))
    np.testing.assert_allclose(apply_homography(h, (0.0, 10.0)), [0.0, 5.0], atol=1e-15)


def test_apply_vectorised_shape():
    h = Homography(np.diag([2.0, 3.0, 1.0]))
    out = apply_homography(h, np.ones((4, 5, 2)))
    assert out.shape == (4, 5, 2)
    np.testing.assert_allclose(out[..., 0], 2.0)
    np.testing.assert_allclose(out[..., 1], 3.0)


def test_apply_at_infinity():
    h = Homography(np.array([[1, 0, 0], [0, 1, 0], [0, 0.1, 1.0]]))
    with pytest.raises(AtInfinity):
        apply_homography(h, (0.0, -10.0))


def test_apply_rejects_non_finite():
    with pytest.raises(ValueError):
        apply_homography(Homography(np.eye(3)), (np.nan, 0.0))


# -- Jacobian / local scale ------------------------------------------------------

def test_local_scale_identity():
    h = Homography(np.eye(3))
    assert local_scale(h, (10.0, -4.0)) == 1.0


def test_local_scale_uniform_scaling():
    h = Homography(np.diag([3.0, 3.0, 1.0]))
    for p in [(0, 0), (5, 7), (-100, 3)]:
        assert local_scale(h, p) == pytest.approx(9.0, rel=1e-14)


def test_local_scale_matches_finite_differences(rng):
    m = random_homography(rng)
    h = Homography(m)
    p = (10.0, 20.0)
    expected = fd_scale(lambda q: apply_homography(h, q), p, step=1e-4)
    assert local_scale(h, p) == pytest.approx(expected, rel=1e-6)


def test_local_scale_equals_det_over_w_cubed(rng):
    h = Homography(random_homography(rng))
    pts = rng.uniform(-50, 50, (30, 2))
    w = pts @ h.matrix[2, :2] + h.matrix[2, 2]
    closed = abs(np.linalg.det(h.matrix)) / np.abs(w) ** 3
    np.testing.assert_allclose(local_scale(h, pts), closed, rtol=1e-10)


def test_jacobian_matches_finite_differences(rng):
    h = Homography(random_homography(rng))
    p = np.array([3.0, -7.0])
    j = jacobian(h, p)
    step = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        col = (apply_homography(h, p + e) - apply_homography(h, p - e)) / (2 * step)
        np.testing.assert_allclose(j[:, k], col, rtol=1e-7, atol=1e-10)


# -- scale maps -----------------------------------------------------------------

def test_scale_map_nadir_constant(backend):
    K = CameraIntrinsics(1000, 1000, 320, 240, 640, 480)
    m = scale_map(homography_image_to_head(K, DronePose(10.0, -math.pi / 2)), K)
    assert m.valid.all()
    spread = (m.values.max() - m.values.min()) / m.values.mean()
    assert spread < 1e-12
    assert m.values.mean() == pytest.approx((10.0 / 1000) ** 2, rel=1e-12)


def test_scale_map_nadir_finite_difference_oracle(backend):
    K = CameraIntrinsics(1000, 1000, 320, 240, 64, 48)
    P = projection_3x4(1000, 1000, 320, 240, 10.0, -math.pi / 2)
    m = scale_map(homography_image_to_head(K, DronePose(10.0, -math.pi / 2)), K)
    fd = fd_scale(lambda q: backproject(P, *q), (10.5, 20.5), step=1e-3)
    assert m.values[20, 10] == pytest.approx(fd, rel=1e-6)


def test_scale_map_identity(backend):
    K = CameraIntrinsics(1, 1, 0, 0, 17, 9)
    m = scale_map(Homography(np.eye(3)), K)
    np.testing.assert_array_equal(m.values, np.ones((9, 17)))


def test_scale_map_oblique_monotone_towards_horizon(backend, camera):
    pose = DronePose(20.0, -math.pi / 4)
    h = homography_image_to_head(camera, pose)
    m = scale_map(h, camera)
    assert m.valid.all()
    # tilt is about the camera y axis, so the horizon lies towards u -> -inf
    row = m.values[360]
    assert np.all(np.diff(row) < 0)
    # constant along v for a pure pitch
    np.testing.assert_allclose(m.values[:, 100], m.values[0, 100], rtol=1e-12)
    # spot-check against finite differences of the full projection
    P = projection_3x4(camera.fx, camera.fy, camera.cx, camera.cy, 20.0, -math.pi / 4)
    for i, j in [(0, 0), (360, 640), (719, 1279)]:
        fd = fd_scale(lambda q: backproject(P, *q), (j + 0.5, i + 0.5), step=1e-3)
        assert m.values[i, j] == pytest.approx(fd, rel=1e-6)


def test_scale_map_flags_horizon(backend, camera):
    pose = DronePose(20.0, -0.2)
    h = homography_image_to_head(camera, pose)
    m = scale_map(h, camera)
    assert m.valid.any() and not m.valid.all()
    assert np.all(m.values[~m.valid] == 0)
    assert np.all(m.values[m.valid] > 0)
    horizon_u = camera.cx - camera.fx / math.tan(math.pi / 2 - 0.2)
    cols = np.arange(camera.width) + 0.5
    np.testing.assert_array_equal(m.valid[0], cols > horizon_u)


def test_in_front_matches_scale_map_validity(camera):
    h = homography_image_to_head(camera, DronePose(20.0, -0.2))
    m = scale_map(h, camera)
    ys, xs = np.mgrid[0:camera.height:37, 0:camera.width:41]
    pts = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    np.testing.assert_array_equal(in_front(h, pts), m.valid[ys.ravel(), xs.ravel()])


def test_direction_tags():
    h = Homography(np.eye(3), IMAGE_TO_HEAD)
    assert h.head_to_image().direction == HEAD_TO_IMAGE
    with pytest.raises(ValueError):
        Homography(np.eye(3), "sideways")
