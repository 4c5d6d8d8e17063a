"""Unit tests for the synthetic scene generator"""
import numpy as np
import pytest

from app.core.errors import InvalidSpec, NoFrontierPoints
from app.models.schemas import NoiseSpec
from app.services.geometry import symmetric_epipolar_distances
from app.services.silhouette import Mask, convex_hull
from app.services.synth import (
    Camera, analytic_frontier_points, apply_noise, frustum_fraction, ground_truth_frontier_points, make_scene,
    render_silhouette, tangent_within,
)
from tests.conftest import small_scene_spec


@pytest.mark.unit
@pytest.mark.synth
class TestCamera:

    def test_target_projects_to_principal_point(self):
        cam = Camera.looking_at([6.0, 2.0, 1.0], [0.0, 0.0, 0.0], 500.0, (320, 240))
        np.testing.assert_allclose(cam.project([[0.0, 0.0, 0.0]])[0], [159.5, 119.5], atol=1e-9)

    def test_world_up_is_image_up(self):
        cam = Camera.looking_at([6.0, 0.0, 0.0], [0.0, 0.0, 0.0], 500.0, (320, 240))
        above = cam.project([[0.0, 0.0, 1.0]])[0]
        assert above[1] < 119.5

    def test_center_and_depth(self):
        cam = Camera.looking_at([0.0, -5.0, 0.0], [0.0, 0.0, 0.0], 400.0, (100, 100))
        np.testing.assert_allclose(cam.center, [0.0, -5.0, 0.0], atol=1e-12)
        assert cam.depth([[0.0, 0.0, 0.0]])[0] == pytest.approx(5.0)

    def test_vertical_view_rejected(self):
        with pytest.raises(InvalidSpec):
            Camera.looking_at([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], 400.0, (100, 100))


@pytest.mark.unit
@pytest.mark.synth
class TestRendering:

    def test_centred_sphere_is_a_disc_of_the_expected_radius(self):
        cam = Camera.looking_at([6.0, 0.0, 0.0], [0.0, 0.0, 0.0], 600.0, (320, 240))
        mask = render_silhouette(cam, [[0.0, 0.0, 0.0]], [0.5], (320, 240))
        radius = 600.0 * 0.5 / np.sqrt(36.0 - 0.25)
        assert mask.bits.sum() == pytest.approx(np.pi * radius ** 2, rel=0.02)
        np.testing.assert_allclose(mask.foreground().mean(axis=0), [159.5, 119.5], atol=0.05)

    def test_sphere_behind_the_camera_is_invisible(self):
        cam = Camera.looking_at([6.0, 0.0, 0.0], [0.0, 0.0, 0.0], 600.0, (160, 120))
        mask = render_silhouette(cam, [[10.0, 0.0, 0.0]], [1.0], (160, 120))
        assert mask.is_empty

    def test_union_of_spheres(self):
        cam = Camera.looking_at([6.0, 0.0, 0.0], [0.0, 0.0, 0.0], 300.0, (160, 120))
        one = render_silhouette(cam, [[0.0, -1.0, 0.0]], [0.3], (160, 120))
        two = render_silhouette(cam, [[0.0, 1.0, 0.0]], [0.3], (160, 120))
        both = render_silhouette(cam, [[0.0, -1.0, 0.0], [0.0, 1.0, 0.0]], [0.3, 0.3], (160, 120))
        assert np.array_equal(both.bits, one.bits | two.bits)

    def test_rendering_is_deterministic(self, small_scene):
        again = make_scene(small_scene_spec()).render_all()
        first = small_scene.render_all()
        assert all(a == b for cam_a, cam_b in zip(first, again) for a, b in zip(cam_a, cam_b))

    def test_frame_indices(self, small_masks):
        assert [m.frame_index for m in small_masks[0]] == list(range(40))


@pytest.mark.unit
@pytest.mark.synth
class TestSceneSpecs:

    def test_ground_truth_annihilates_sphere_centres(self, small_scene):
        f = small_scene.fundamental(0, 1)
        centers = small_scene.centers.reshape(-1, 3)
        xa = small_scene.cameras[0].project(centers)
        xb = small_scene.cameras[1].project(centers)
        assert symmetric_epipolar_distances(f.m, xa, xb).max() < 1e-6

    def test_spheres_stay_in_view(self, small_scene):
        assert frustum_fraction(small_scene) >= 0.95

    @pytest.mark.parametrize("bad", [
        {"frames": 5},
        {"spheres": []},
        {"spheres": [{"radius": 0.0}]},
        {"azimuths_deg": [0.0]},
        {"frame_count": 10},
    ])
    def test_invalid_specs(self, bad):
        with pytest.raises(InvalidSpec):
            make_scene(bad)

    def test_spheres_outside_the_view(self):
        with pytest.raises(InvalidSpec):
            make_scene(small_scene_spec(focal_px=5000.0))

    def test_dict_spec(self):
        scene = make_scene({"image_width": 64, "image_height": 48, "frames": 12, "focal_px": 60.0})
        assert scene.frames == 12
        assert scene.image_size == (64, 48)
        assert len(scene.cameras) == 2


@pytest.mark.unit
@pytest.mark.synth
class TestNoise:

    def test_no_noise_is_identity(self, small_masks):
        out = apply_noise(small_masks[0], NoiseSpec())
        assert all(a is b for a, b in zip(out, small_masks[0]))

    def test_dilation_grows_every_silhouette(self, small_masks):
        out = apply_noise(small_masks[0], NoiseSpec(boundary_px=1))
        for before, after in zip(small_masks[0], out):
            assert after.bits.sum() >= before.bits.sum()
            assert np.all(after.bits[before.bits])

    def test_erosion_shrinks(self, small_masks):
        out = apply_noise(small_masks[0], NoiseSpec(boundary_px=-1))
        for before, after in zip(small_masks[0], out):
            assert not np.any(after.bits & ~before.bits)

    def test_dropout_is_seeded_per_camera(self, small_masks):
        noise = NoiseSpec(dropout=0.5, seed=9)
        first = apply_noise(small_masks[0], noise, camera=0)
        again = apply_noise(small_masks[0], noise, camera=0)
        other = apply_noise(small_masks[0], noise, camera=1)
        empty = [m.is_empty for m in first]
        assert empty == [m.is_empty for m in again]
        assert empty != [m.is_empty for m in other]
        assert 0 < sum(empty) < len(empty)


@pytest.mark.unit
@pytest.mark.synth
class TestFrontierPoints:

    def test_pairs_satisfy_the_ground_truth(self, small_scene, small_masks):
        f = small_scene.fundamental(0, 1)
        pairs = ground_truth_frontier_points(*small_masks, f, scene=small_scene)
        xa = np.array([p.a.xy for p in pairs])
        xb = np.array([p.b.xy for p in pairs])
        assert symmetric_epipolar_distances(f.m, xa, xb).max() < 0.01

    def test_pairs_are_thinned(self, small_scene, small_masks):
        pairs = ground_truth_frontier_points(*small_masks, small_scene.fundamental(0, 1), scene=small_scene)
        for side in ("a", "b"):
            pts = np.array([getattr(p, side).xy for p in pairs])
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            if len(pts) > 1:
                assert d.min() >= 15.0

    def test_analytic_points_are_on_the_epipolar_geometry(self, small_scene):
        f = small_scene.fundamental(0, 1)
        for t in range(0, small_scene.frames, 5):
            for xa, xb in analytic_frontier_points(small_scene, t):
                assert symmetric_epipolar_distances(f.m, xa[None], xb[None])[0] < 1e-6

    def test_empty_masks_have_no_frontier(self, small_scene):
        empty = [Mask.empty(160, 120, t) for t in range(5)]
        with pytest.raises(NoFrontierPoints):
            ground_truth_frontier_points(empty, empty, small_scene.fundamental(0, 1))

    def test_tangent_within(self, square_mask):
        hull = convex_hull(square_mask)
        assert tangent_within(hull, (6.0, 2.0), np.array([1.0, 0.0, -6.0]), 1.0)
        assert not tangent_within(hull, (4.5, 3.0), np.array([1.0, 0.0, -4.5]), 1.0)
