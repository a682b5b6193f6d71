"""Pinhole camera math against a scipy rotation oracle."""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from eznav.geometry import (
    CameraModel,
    DirectionSource,
    OutOfBoundsError,
    Pose,
    ProjectionFailure,
    camera_from_hfov,
    pixel_to_ray,
    project_point,
    ray_to_world,
    wrap_angle,
)


def simple_cam():
    return CameraModel(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=200, height=200)


def random_pose(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(position=rng.normal(size=3) * 10.0, orientation=q)


class TestCameraModel:
    def test_hfov_matches_definition(self):
        cam = camera_from_hfov(960, 480, math.radians(90.0))
        assert cam.hfov == pytest.approx(math.radians(90.0), abs=1e-12)
        assert cam.fx == pytest.approx(480.0, abs=1e-9)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            CameraModel(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(ValueError):
            CameraModel(fx=1, fy=1, cx=20, cy=0, width=10, height=10)


class TestPixelToRay:
    def test_principal_point_gives_optical_axis(self):
        ray = pixel_to_ray(simple_cam(), (50.0, 50.0))
        assert np.allclose(ray, [0.0, 0.0, 1.0], atol=1e-12)

    def test_right_offset(self):
        ray = pixel_to_ray(simple_cam(), (150.0, 50.0))
        assert np.allclose(ray, [0.7071068, 0.0, 0.7071068], atol=1e-7)

    def test_down_offset_symmetry(self):
        ray = pixel_to_ray(simple_cam(), (50.0, 150.0))
        assert np.allclose(ray, [0.0, 0.7071068, 0.7071068], atol=1e-7)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            pixel_to_ray(simple_cam(), (250.0, 50.0))

    def test_unit_norm_everywhere(self):
        rng = np.random.default_rng(0)
        cam = simple_cam()
        for _ in range(200):
            u = rng.uniform(0, cam.width - 1e-9)
            v = rng.uniform(0, cam.height - 1e-9)
            assert np.linalg.norm(pixel_to_ray(cam, (u, v))) == pytest.approx(1.0, abs=1e-12)


class TestRayToWorld:
    def test_identity_orientation(self):
        pose = Pose.identity()
        est = ray_to_world(pose, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(est.direction, [0.0, 0.0, 1.0], atol=1e-12)
        assert est.source is DirectionSource.LIVE

    def test_matches_scipy_rotation(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            pose = random_pose(rng)
            ray = rng.normal(size=3)
            ray /= np.linalg.norm(ray)
            est = ray_to_world(pose, ray)
            w, x, y, z = pose.orientation
            want = Rotation.from_quat([x, y, z, w]).apply(ray)
            assert np.allclose(est.direction, want, atol=1e-9)
            assert np.linalg.norm(est.direction) == pytest.approx(1.0, abs=1e-9)

    def test_rotation_preserves_angles(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            pose = random_pose(rng)
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            wa = ray_to_world(pose, a).direction
            wb = ray_to_world(pose, b).direction
            assert float(np.dot(wa, wb)) == pytest.approx(float(np.dot(a, b)), abs=1e-9)

    def test_level_camera_yaw(self):
        pose = Pose.level_camera(0.0, 0.0, 1.0, math.pi / 2.0)
        est = ray_to_world(pose, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(est.direction, [0.0, 1.0, 0.0], atol=1e-9)
        # camera "down" maps to world -z for a level mount
        down = ray_to_world(pose, np.array([0.0, 1.0, 0.0]))
        assert np.allclose(down.direction, [0.0, 0.0, -1.0], atol=1e-9)


class TestProjectPoint:
    def test_point_on_axis(self):
        cam = simple_cam()
        pose = Pose.identity()
        assert project_point(cam, pose, np.array([0.0, 0.0, 10.0])) == \
            pytest.approx((50.0, 50.0))

    def test_behind(self):
        cam = simple_cam()
        pose = Pose.identity()
        assert project_point(cam, pose, np.array([0.0, 0.0, -5.0])) is ProjectionFailure.BEHIND

    def test_out_of_view(self):
        cam = simple_cam()
        pose = Pose.identity()
        assert project_point(cam, pose, np.array([50.0, 0.0, 1.0])) is \
            ProjectionFailure.OUT_OF_VIEW

    def test_round_trip_parallelism(self):
        rng = np.random.default_rng(3)
        cam = simple_cam()
        done = 0
        while done < 1000:
            pose = random_pose(rng)
            p_cam = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 1.0])
            p_cam *= rng.uniform(1.0, 50.0)
            world = pose.rotation_matrix @ p_cam + pose.position
            res = project_point(cam, pose, world)
            if not isinstance(res, tuple):
                continue
            ray = pixel_to_ray(cam, res)
            cos = float(np.dot(ray, p_cam) / np.linalg.norm(p_cam))
            assert cos == pytest.approx(1.0, abs=1e-9)
            done += 1


class TestWrapAngle:
    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            a = rng.uniform(-50, 50)
            w = wrap_angle(a)
            assert -math.pi < w <= math.pi
            assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
            assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


class TestPoseValidation:
    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(ValueError):
            Pose(position=np.zeros(3), orientation=np.array([1.0, 0.1, 0.0, 0.0]))
