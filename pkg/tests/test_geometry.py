import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from occu_forge.geometry import (CameraModel, LidarRig, LidarSensor, OrientedBox, PointCloud, RigidTransform,
                                 direction_from_angles, project, rays_world, to_box_frame, transform_points)
from oracles import distort_project

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
points_st = arrays(np.float64, st.tuples(st.integers(0, 20), st.just(3)), elements=finite)
rotvec_st = arrays(np.float64, (3,), elements=st.floats(-3, 3))
trans_st = arrays(np.float64, (3,), elements=finite)


def transforms():
    return st.builds(RigidTransform.from_rotvec, rotvec_st, trans_st)


# -- rigid transforms ---------------------------------------------------------

def test_identity_transform_leaves_cloud_unchanged():
    cloud = PointCloud(np.random.default_rng(0).normal(size=(10, 3)), intensity=np.linspace(0, 1, 10))
    out = transform_points(cloud, RigidTransform.identity())
    np.testing.assert_array_equal(out.xyz, cloud.xyz)
    np.testing.assert_array_equal(out.intensity, cloud.intensity)


def test_pure_translation():
    out = transform_points(PointCloud(np.zeros((1, 3))), RigidTransform(np.eye(3), (1.0, 0.0, 0.0)))
    np.testing.assert_array_equal(out.xyz, [[1.0, 0.0, 0.0]])


def test_rotation_about_z_by_90_degrees():
    # Rz(90) = [[0,-1,0],[1,0,0],[0,0,1]] maps x onto y
    out = transform_points(PointCloud([[1.0, 0.0, 0.0]]), RigidTransform.from_yaw(np.pi / 2))
    np.testing.assert_allclose(out.xyz, [[0.0, 1.0, 0.0]], atol=1e-9)


def test_attributes_carried_through():
    cloud = PointCloud(np.ones((3, 3)), labels=np.array([1, 2, 3]), attrs={"ray_id": np.arange(3)})
    out = transform_points(cloud, RigidTransform.from_yaw(0.3, (1, 2, 3)))
    np.testing.assert_array_equal(out.labels, cloud.labels)
    np.testing.assert_array_equal(out.attrs["ray_id"], np.arange(3))


def test_empty_cloud():
    out = transform_points(PointCloud(np.zeros((0, 3))), RigidTransform.from_yaw(1.0))
    assert len(out) == 0


def test_non_orthonormal_rotation_rejected():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))


@given(transforms())
def test_rotation_is_orthonormal(T):
    np.testing.assert_allclose(T.rotation @ T.rotation.T, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(T.rotation) - 1) < 1e-9


@given(transforms())
def test_inverse_composes_to_identity(T):
    I = T @ T.inverse()
    np.testing.assert_allclose(I.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(I.translation, 0, atol=1e-9)


@given(points_st, transforms(), transforms())
def test_transform_is_group_action(pts, T1, T2):
    cloud = PointCloud(pts)
    twice = transform_points(transform_points(cloud, T1), T2)
    once = transform_points(cloud, T2 @ T1)
    np.testing.assert_allclose(twice.xyz, once.xyz, atol=1e-9)


@given(transforms())
def test_quaternion_round_trip(T):
    back = RigidTransform.from_dict(T.to_dict())
    np.testing.assert_allclose(back.rotation, T.rotation, atol=1e-12)
    np.testing.assert_allclose(back.translation, T.translation, atol=0)
    q = T.as_quaternion()
    assert abs(np.linalg.norm(q) - 1) < 1e-12


# -- boxes --------------------------------------------------------------------

def test_box_center_maps_to_origin():
    box = OrientedBox((1.0, 2.0, 3.0), RigidTransform.from_yaw(0.7).rotation, (1.0, 2.0, 0.5))
    out = to_box_frame(PointCloud([[1.0, 2.0, 3.0]]), box)
    np.testing.assert_allclose(out.xyz, 0, atol=1e-12)


def test_box_frame_translation_only():
    box = OrientedBox((2.0, 0.0, 0.0), np.eye(3), (1.0, 1.0, 1.0))
    np.testing.assert_allclose(to_box_frame(PointCloud([[3.0, 0.0, 0.0]]), box).xyz, [[1.0, 0.0, 0.0]])


@given(points_st, rotvec_st, trans_st)
def test_box_frame_round_trip(pts, rv, c):
    box = OrientedBox(c, RigidTransform.from_rotvec(rv).rotation, (1.0, 2.0, 3.0))
    local = to_box_frame(PointCloud(pts), box)
    back = transform_points(local, box.pose)
    np.testing.assert_allclose(back.xyz, pts, atol=1e-9)


def test_box_requires_positive_extents_and_contains_centre():
    with pytest.raises(ValueError):
        OrientedBox((0, 0, 0), np.eye(3), (1.0, 0.0, 1.0))
    box = OrientedBox((5, 5, 5), RigidTransform.from_yaw(1.0).rotation, (0.1, 0.2, 0.3))
    assert box.contains(box.center)


def test_box_containment_is_inclusive():
    box = OrientedBox((0, 0, 0), np.eye(3), (1.0, 1.0, 1.0))
    assert box.contains([1.0, 1.0, 1.0])
    assert not box.contains([1.0 + 1e-6, 0.0, 0.0])


# -- cameras ------------------------------------------------------------------

def test_projection_on_optical_axis():
    cam = CameraModel(100, 100, 0, 0, 64, 64)
    uv, z = project(cam, [0.0, 0.0, 5.0])
    np.testing.assert_array_equal(uv, [0.0, 0.0])
    assert z == 5.0


def test_projection_off_axis():
    cam = CameraModel(100, 100, 0, 0, 64, 64)
    uv, _ = project(cam, [1.0, 0.0, 5.0])
    np.testing.assert_allclose(uv, [20.0, 0.0], atol=1e-12)


def test_behind_camera_is_flagged():
    cam = CameraModel(100, 100, 0, 0, 64, 64)
    assert project(cam, [0.0, 0.0, -1.0]) is None
    assert project(cam, [0.0, 0.0, 5e-5]) is None


def test_invalid_intrinsics_rejected():
    with pytest.raises(ValueError):
        CameraModel(0, 100, 0, 0, 64, 64)
    with pytest.raises(ValueError):
        CameraModel(100, 100, 0, 0, 0, 64)


@given(arrays(np.float64, (8, 3), elements=st.floats(-5, 5)), transforms())
def test_zero_distortion_matches_pinhole(pts, pose):
    cam = CameraModel(320.0, 300.0, 100.0, 80.0, 200, 160, pose=pose)
    pc = pose.apply(pts)
    uv, z, valid = cam.project_points(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        expect = np.stack([320.0 * pc[:, 0] / pc[:, 2] + 100.0, 300.0 * pc[:, 1] / pc[:, 2] + 80.0], axis=1)
    np.testing.assert_array_equal(valid, pc[:, 2] > cam.z_near)
    np.testing.assert_allclose(uv[valid], expect[valid], rtol=1e-12, atol=1e-9)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1),
       st.floats(0.1, 100))
def test_distortion_identity_on_axis(k1, k2, k3, p1, p2, depth):
    cam = CameraModel(200, 200, 31.5, 23.5, 64, 48, k1, k2, k3, p1, p2)
    uv, z = project(cam, [0.0, 0.0, depth])
    np.testing.assert_array_equal(uv, [31.5, 23.5])


def test_distortion_matches_reference_formula(rng):
    cam = CameraModel(400, 380, 320, 240, 640, 480, -0.3, 0.05, 0.01, 0.002, -0.001,
                      pose=RigidTransform.from_rotvec([0.1, -0.2, 0.05], (0.3, -0.1, 0.2)))
    pts = rng.uniform([-3, -2, 3], [3, 2, 20], (200, 3))
    uv, z, valid = cam.project_points(pts)
    ref_uv, ref_z = distort_project(cam, pts)
    np.testing.assert_allclose(uv, ref_uv, rtol=1e-12)
    np.testing.assert_allclose(z, ref_z, rtol=1e-12)


def test_jacobian_matches_finite_differences(rng):
    cam = CameraModel(400, 380, 320, 240, 640, 480, -0.3, 0.05, 0.01, 0.002, -0.001,
                      pose=RigidTransform.from_rotvec([0.1, -0.2, 0.05], (0.3, -0.1, 0.2)))
    pts = rng.uniform([-3, -2, 3], [3, 2, 20], (20, 3))
    J = cam.jacobian(pts)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (cam.project_points(pts + e)[0] - cam.project_points(pts - e)[0]) / (2 * h)
        np.testing.assert_allclose(J[:, :, k], fd, rtol=1e-5, atol=1e-4)


def test_camera_dict_round_trip():
    cam = CameraModel(400, 380, 320, 240, 640, 480, -0.3, 0.05, 0.01, 0.002, -0.001,
                      pose=RigidTransform.from_yaw(0.4, (1, 2, 3)))
    back = CameraModel.from_dict(cam.to_dict())
    for name in ("fx", "fy", "cx", "cy", "width", "height", "k1", "k2", "k3", "p1", "p2"):
        assert getattr(back, name) == getattr(cam, name)
    np.testing.assert_allclose(back.pose.rotation, cam.pose.rotation, atol=1e-12)
    np.testing.assert_array_equal(back.pose.translation, cam.pose.translation)


# -- LiDAR rays ---------------------------------------------------------------

def _sensor(origin=(0.0, 0.0, 0.0), pattern=((0.0, 0.0),), name=""):
    return LidarSensor(RigidTransform(np.eye(3), origin), np.array(pattern), 50.0, name)


def test_forward_axis_convention():
    rig = LidarRig((_sensor((1.0, 2.0, 3.0)),))
    rays = rays_world(rig, RigidTransform.identity())
    np.testing.assert_array_equal(rays.origins, [[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(rays.directions, [[1.0, 0.0, 0.0]], atol=1e-15)


def test_direction_convention():
    np.testing.assert_allclose(direction_from_angles(np.pi / 2, 0.0), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(direction_from_angles(0.0, np.pi / 2), [0, 0, 1], atol=1e-15)


def test_mask_selects_one_sensor():
    pattern = LidarSensor.grid_pattern([-5.0, 5.0], 8)
    rig = LidarRig((_sensor(pattern=pattern), _sensor((0, 1, 0), pattern)))
    rays = rays_world(rig, RigidTransform.identity(), [1])
    assert len(rays) == 16
    assert set(rays.sensor_ids) == {1}
    np.testing.assert_array_equal(rays.ray_ids, np.arange(16))


def test_empty_mask_rejected():
    rig = LidarRig((_sensor(),))
    with pytest.raises(ValueError, match="no sensor selected"):
        rays_world(rig, RigidTransform.identity(), [])


def test_rig_needs_a_sensor():
    with pytest.raises(ValueError):
        LidarRig(())


@given(rotvec_st, trans_st)
def test_rays_equivariant_under_ego_pose(rv, t):
    pattern = LidarSensor.grid_pattern(np.linspace(-20, 10, 5), 12)
    rig = LidarRig((LidarSensor(RigidTransform.from_yaw(0.3, (0.5, -0.2, 1.8)), pattern),))
    ego = RigidTransform.from_rotvec(rv, t)
    base = rays_world(rig, RigidTransform.identity())
    moved = rays_world(rig, ego)
    np.testing.assert_allclose(np.linalg.norm(moved.directions, axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(moved.directions, base.directions @ ego.rotation.T, atol=1e-9)
    np.testing.assert_allclose(moved.origins - ego.translation, base.origins @ ego.rotation.T, atol=1e-9)


def test_ego_yaw_rotates_directions():
    rig = LidarRig((_sensor(),))
    rays = rays_world(rig, RigidTransform.from_yaw(np.pi / 2))
    np.testing.assert_allclose(rays.directions, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_rig_dict_round_trip():
    pattern = LidarSensor.grid_pattern([-5.0, 0.0, 5.0], 4)
    rig = LidarRig((LidarSensor(RigidTransform.from_yaw(0.2, (1, 0, 2)), pattern, 70.0, "front"),))
    back = LidarRig.from_dict(rig.to_dict())
    np.testing.assert_allclose(back.sensors[0].pattern, pattern, atol=1e-15)
    assert back.sensors[0].max_range == 70.0 and back.sensors[0].name == "front"
