import numpy as np
import pytest

from oracles import mean_binned_brute

from ocumesh.errors import ParameterError
from ocumesh.gaze import (
    angular_error,
    fit_sphere_center,
    fuse_gaze,
    gaze_from_mesh,
    yaw_binned_report,
)
from ocumesh.geometry import angle_between_stable_deg, random_rotation
from ocumesh.labeling import EyeMesh
from ocumesh.losses import gaze_loss


def _mesh(template, rotation=None, center=(0.0, 0.0, 0.0), scale=1.0):
    return EyeMesh(
        template=template,
        side=template.side,
        center=np.asarray(center, dtype=float),
        scale=scale,
        rotation=np.eye(3) if rotation is None else rotation,
    )


class TestGazeFromMesh:
    def test_canonical_template_points_down_z(self, left_template):
        g = gaze_from_mesh(_mesh(left_template))
        assert np.allclose(g, [0.0, 0.0, -1.0], atol=1e-12)

    def test_rotation_equivariance(self, left_template):
        rng = np.random.default_rng(4)
        for _ in range(25):
            R = random_rotation(rng)
            g = gaze_from_mesh(_mesh(left_template, rotation=R, center=(4.0, 1.0, -2.0), scale=13.0))
            assert angle_between_stable_deg(g, R @ [0.0, 0.0, -1.0]) < 1e-9

    def test_unit_norm(self, right_template):
        g = gaze_from_mesh(_mesh(right_template, scale=250.0))
        assert abs(np.linalg.norm(g) - 1.0) < 1e-12


def test_fit_sphere_center_recovers_posed_center(left_template):
    mesh = _mesh(left_template, center=(5.0, -3.0, 8.0), scale=17.0)
    c = fit_sphere_center(mesh.vertices)
    assert np.max(np.abs(c - mesh.center)) < 1e-9


class TestFuseGaze:
    def test_equal_eyes(self):
        g = fuse_gaze([0, 0, -1.0], [0, 0, -1.0])
        assert np.allclose(g, [0, 0, -1.0])

    def test_two_eye_sum(self):
        g = fuse_gaze([1.0, 0, 0], [0, 0, -1.0])
        assert np.allclose(g, np.array([1.0, 0, -1.0]) / np.sqrt(2.0))

    def test_direct_agreement_is_identity(self):
        v = np.array([0.3, -0.2, -0.9])
        v /= np.linalg.norm(v)
        assert np.allclose(fuse_gaze(v, v, v), v, atol=1e-12)

    def test_always_unit(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a, b, c = (rng.normal(size=3) for _ in range(3))
            a, b, c = (v / np.linalg.norm(v) for v in (a, b, c))
            out = fuse_gaze(a, b, c if rng.uniform() < 0.5 else None)
            assert abs(np.linalg.norm(out) - 1.0) < 1e-12

    def test_opposing_inputs_rejected(self):
        with pytest.raises(ParameterError):
            fuse_gaze([0, 0, 1.0], [0, 0, -1.0])


class TestAngularError:
    def test_basic_values(self):
        assert angular_error([0, 0, -1.0], [0, 0, -1.0]) == 0.0
        assert angular_error([1.0, 0, 0], [0, 1.0, 0]) == pytest.approx(90.0)
        assert angular_error([0, 0, 1.0], [0, 0, -1.0]) == pytest.approx(180.0)

    def test_bit_identical_to_gaze_loss(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            b = rng.normal(size=3)
            b /= np.linalg.norm(b)
            assert angular_error(a, b) == gaze_loss(a, b).value

    def test_triangle_inequality(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            a, b, c = (rng.normal(size=3) for _ in range(3))
            a, b, c = (v / np.linalg.norm(v) for v in (a, b, c))
            assert angular_error(a, c) <= angular_error(a, b) + angular_error(b, c) + 1e-9


class TestYawBinnedReport:
    def test_single_sample(self):
        rows = yaw_binned_report([(3.0, 10.0)], [5.0, 20.0])
        assert [(r.mean_error_deg, r.count) for r in rows] == [(10.0, 1), (10.0, 1)]

    def test_two_samples(self):
        rows = yaw_binned_report([(10.0, 4.0), (30.0, 8.0)], [20.0, 40.0])
        assert rows[0].mean_error_deg == pytest.approx(4.0)
        assert rows[0].count == 1
        assert rows[1].mean_error_deg == pytest.approx(6.0)
        assert rows[1].count == 2

    def test_empty_bin_reported_absent(self):
        rows = yaw_binned_report([(50.0, 1.0)], [5.0, 90.0])
        assert rows[0].mean_error_deg is None
        assert rows[0].count == 0
        assert rows[1].count == 1

    def test_negative_yaw_uses_magnitude(self):
        rows = yaw_binned_report([(-3.0, 2.0)], [5.0])
        assert rows[0].count == 1

    def test_matches_brute_force_on_random_data(self):
        rng = np.random.default_rng(31)
        pairs = [(rng.uniform(-90, 90), rng.uniform(0, 40)) for _ in range(1000)]
        bins = [5.0, 20.0, 40.0, 90.0]
        rows = yaw_binned_report(pairs, bins)
        for row, b in zip(rows, bins):
            mean, count = mean_binned_brute(pairs, b)
            assert row.count == count
            assert row.mean_error_deg == pytest.approx(mean)

    def test_non_increasing_bins_rejected(self):
        with pytest.raises(ParameterError):
            yaw_binned_report([(0.0, 1.0)], [20.0, 20.0])
