import json

import numpy as np
import pytest

from groundtrack.geometry import (
    CameraCalibration,
    GroundGrid,
    Homography,
    ground_to_image,
    homography_from_calibration,
    image_to_ground,
    load_calibration,
    load_rig,
    look_at_calibration,
    project_ground_points,
    save_calibration,
)


def random_calibration(rng, elevation_range=(20.0, 80.0)):
    """Random but physically sensible camera looking into the grid area."""
    az = rng.uniform(0, 2 * np.pi)
    dist = rng.uniform(4.0, 10.0)
    elev = np.deg2rad(rng.uniform(*elevation_range))
    height = dist * np.tan(elev)
    pos = np.array([5.0 + dist * np.cos(az), 5.0 + dist * np.sin(az), height])
    target = np.array([5.0 + rng.uniform(-1, 1), 5.0 + rng.uniform(-1, 1), 0.0])
    return look_at_calibration(pos, target, focal=rng.uniform(400, 700))


class TestCameraCalibration:
    def test_invariants_enforced(self):
        K = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
        with pytest.raises(ValueError):
            CameraCalibration(K, np.eye(3) * 1.001, np.zeros(3), (640, 480))
        bad_K = K.copy()
        bad_K[1, 0] = 2.0
        with pytest.raises(ValueError):
            CameraCalibration(bad_K, np.eye(3), np.zeros(3), (640, 480))

    def test_center_round_trip(self):
        rng = np.random.default_rng(0)
        calib = random_calibration(rng)
        # the camera center projects to depth 0
        _, depth = calib.project_points(calib.center[None, :])
        assert abs(depth[0]) < 1e-9

    def test_arrays_immutable(self):
        calib = look_at_calibration([0, 0, 3], [1, 1, 0])
        with pytest.raises(ValueError):
            calib.rotation[0, 0] = 5.0


class TestHomography:
    def test_identity_maps_points_through(self):
        h = Homography(np.eye(3))
        assert np.allclose(ground_to_image(h, (0.0, 0.0)), (0.0, 0.0))
        assert np.allclose(image_to_ground(h, (5.0, 7.0)), (5.0, 7.0))

    def test_singular_rejected(self):
        m = np.eye(3)
        m[2] = 0.0
        with pytest.raises(ValueError):
            Homography(m)

    def test_inverse_cached_and_consistent(self):
        rng = np.random.default_rng(1)
        h = homography_from_calibration(random_calibration(rng))
        assert np.abs(h.matrix @ h.inverse - np.eye(3)).max() < 1e-9


class TestProjections:
    def test_straight_down_camera_hits_principal_point(self):
        calib = look_at_calibration([2.0, 3.0, 4.0], [2.0, 3.0, 0.0],
                                    principal=(320.0, 240.0))
        h = homography_from_calibration(calib)
        pix = ground_to_image(h, (2.0, 3.0))
        assert np.allclose(pix, (320.0, 240.0), atol=1e-9)

    def test_camera_on_ground_plane_is_singular(self):
        calib = look_at_calibration([0.0, -5.0, 0.0], [0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            homography_from_calibration(calib)

    def test_homography_agrees_with_full_projection(self):
        # oracle: the full 3x4 pinhole projection restricted to z=0
        rng = np.random.default_rng(2)
        for _ in range(20):
            calib = random_calibration(rng)
            h = homography_from_calibration(calib)
            pts = rng.uniform(0, 10, size=(100, 2))
            world = np.column_stack([pts, np.zeros(len(pts))])
            expected, depth = calib.project_points(world)
            got, valid = project_ground_points(h, pts)
            assert np.array_equal(valid, depth > 0)
            err = np.abs(got[valid] - expected[depth > 0])
            scale = np.maximum(1.0, np.abs(expected[depth > 0]))
            assert (err / scale).max() < 1e-9

    def test_round_trip_1000_random_points(self):
        rng = np.random.default_rng(3)
        calib = random_calibration(rng)
        h = homography_from_calibration(calib)
        pts = rng.uniform(0, 10, size=(1000, 2))
        for p in pts:
            pix = ground_to_image(h, p)
            if pix is None:
                continue
            back = image_to_ground(h, pix)
            assert back is not None
            assert np.abs(back - p).max() < 1e-6
            fwd = ground_to_image(h, back)
            assert np.abs(fwd - pix).max() < 1e-6

    def test_point_behind_camera_is_out_of_view(self):
        # camera at (0, -5, 3) looking at the origin: ground points far
        # behind it project with negative depth
        calib = look_at_calibration([0.0, -5.0, 3.0], [0.0, 0.0, 0.0])
        h = homography_from_calibration(calib)
        assert ground_to_image(h, (0.0, -20.0)) is None

    def test_horizon_pixel_is_invalid(self):
        # an oblique camera's horizon row maps to w ~ 0 / negative depth
        calib = look_at_calibration([0.0, -6.0, 2.0], [0.0, 0.0, 0.0],
                                    image_size=(640, 480), focal=500.0)
        h = homography_from_calibration(calib)
        # walk a pixel column upward until back-projection becomes invalid
        col = 320.0
        statuses = [image_to_ground(h, (col, v)) is None for v in range(480)]
        assert statuses[0] and not statuses[-1]  # sky is invalid, floor is valid
        # locate the horizon transition and check w is tiny there
        flip = next(v for v in range(479) if statuses[v] and not statuses[v + 1])
        r = h.inverse @ np.array([col, flip + 0.5, 1.0])
        assert abs(r[2]) < 2e-3

    def test_bounds_checking(self):
        calib = look_at_calibration([5.0, -4.0, 3.0], [5.0, 5.0, 0.0],
                                    image_size=(640, 480))
        h = homography_from_calibration(calib)
        assert ground_to_image(h, (5.0, 5.0), image_size=(640, 480)) is not None
        # a point far to the side projects outside the image
        assert ground_to_image(h, (80.0, 5.0), image_size=(640, 480)) is None


class TestGroundGrid:
    def test_defaults_and_validation(self):
        g = GroundGrid(origin=(0.0, 0.0))
        assert g.cell_size == 0.025
        with pytest.raises(ValueError):
            GroundGrid(origin=(0, 0), cell_size=-1.0)
        with pytest.raises(ValueError):
            GroundGrid(origin=(0, 0), rows=0)

    def test_cell_center_and_lookup(self):
        g = GroundGrid(origin=(1.0, 2.0), cell_size=0.5, rows=10, cols=20)
        c = g.cell_center(0, 0)
        assert np.allclose(c, (1.25, 2.25))
        assert g.point_to_cell(c) == (0, 0)
        assert g.point_to_cell((1.0, 2.0)) == (0, 0)
        assert g.contains((10.9, 6.9))
        assert not g.contains((11.1, 3.0))
        centers = g.cell_centers()
        assert centers.shape == (10, 20, 2)
        assert np.allclose(centers[3, 7], g.cell_center(3, 7))


class TestCalibrationFiles:
    def test_save_load_round_trip(self, tmp_path):
        calib = look_at_calibration([1.0, 2.0, 3.0], [4.0, 5.0, 0.0])
        p = tmp_path / "cam.json"
        save_calibration(p, calib)
        loaded = load_calibration(p)
        assert np.allclose(loaded.intrinsic_matrix, calib.intrinsic_matrix)
        assert np.allclose(loaded.rotation, calib.rotation)
        assert np.allclose(loaded.translation, calib.translation)
        assert loaded.image_size == calib.image_size

    def test_rig_file_with_paths_and_inline(self, tmp_path):
        c0 = look_at_calibration([0, -5, 3], [0, 0, 0])
        c1 = look_at_calibration([5, 0, 3], [0, 0, 0])
        save_calibration(tmp_path / "cam0.json", c0)
        rig = {
            "cameras": [
                {"id": "cam0", "path": "cam0.json"},
                {"id": "cam1", **json.loads((tmp_path / "cam0.json").read_text())},
            ]
        }
        rig["cameras"][1].update(
            {"K": [float(v) for v in c1.intrinsic_matrix.ravel()],
             "R": [float(v) for v in c1.rotation.ravel()],
             "t": [float(v) for v in c1.translation]}
        )
        (tmp_path / "rig.json").write_text(json.dumps(rig))
        cams = load_rig(tmp_path / "rig.json")
        assert [cid for cid, _ in cams] == ["cam0", "cam1"]
        assert np.allclose(cams[1][1].rotation, c1.rotation)
