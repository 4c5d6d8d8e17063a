"""Unit tests for the rank-2 parameterization, LM and both RANSAC drivers"""
import numpy as np
import pytest

from app.core.errors import AllDegenerate, EpipoleInsideHull, InsufficientPoints, NotEnoughCandidates
from app.models.schemas import RansacConfig
from app.services.estimator import (
    BARCODE_PRECOMPUTE_ITERS, FrameTangents, RankTwoParameterization, hypothesis_rng, lm_refine,
    ransac_fundamental, score_hypothesis, score_points, sed_jacobian, sed_residuals, signed_sed, sinha_baseline,
    order_tangents, third_pair_tangents,
)
from app.services.geometry import (
    Fundamental, HomogLine, PointPair, fundamental_distance, fundamental_from_cameras, homogenize,
    symmetric_epipolar_distances,
)
from app.services.matcher import MatchCandidate, MatchTable, build_match_table
from app.services.silhouette import CandidateLine, CandidatePoint, ConvexHull, convex_hull
from app.utils.metrics import EstimationMetrics
from tests.conftest import epipolar_line_pairs, random_rig


def exact_table(rng, frames: int = 10, per_frame: int = 2):
    """Match table of exact epipolar lines through projected world points"""
    cam_a, cam_b = random_rig(rng)
    f = fundamental_from_cameras(cam_a.P, cam_b.P)
    X = rng.normal(0, 1.0, size=(frames * per_frame, 3))
    xa, xb = cam_a.project(X), cam_b.project(X)
    candidates = []
    for i, pair in enumerate(epipolar_line_pairs(f, cam_a, cam_b, X)):
        candidates.append(MatchCandidate(
            frame=i // per_frame,
            line_a=CandidateLine(pair.l, CandidatePoint(*xa[i]), 0.0, 0),
            line_b=CandidateLine(pair.l_prime, CandidatePoint(*xb[i]), 0.0, 0),
            correlation=0.99 - 0.001 * i,
        ))
    gt = [PointPair.from_xy(a, b) for a, b in zip(xa, xb)]
    return f, MatchTable(candidates=candidates, frame_pairs=list(range(frames))), gt


def exact_tangent_frames(rng):
    """Two frames of point clouds whose hull tangents through the true epipoles
    are exact epipolar tangents, plus a scoring table on the same rig"""
    cam_a, cam_b = random_rig(rng)
    f = fundamental_from_cameras(cam_a.P, cam_b.P)
    hulls_a, hulls_b, lines_a, lines_b = {}, {}, {}, {}
    for t, centre in enumerate(([0.6, 0.0, 0.0], [-0.6, 0.3, 0.2])):
        X = np.asarray(centre) + rng.normal(0, 0.4, size=(15, 3))
        for cam, e, hulls, lines in ((cam_a, f.e, hulls_a, lines_a), (cam_b, f.e_prime, hulls_b, lines_b)):
            hull = ConvexHull.from_points(cam.project(X))
            hulls[t] = hull
            lines[t] = np.array([line.coords for line in third_pair_tangents(hull, e.coords)])
    X = rng.normal(0, 1.0, size=(12, 3))
    xa, xb = cam_a.project(X), cam_b.project(X)
    candidates = [
        MatchCandidate(frame=i, line_a=CandidateLine(pair.l, CandidatePoint(*xa[i]), 0.0, 0),
                       line_b=CandidateLine(pair.l_prime, CandidatePoint(*xb[i]), 0.0, 0), correlation=0.99)
        for i, pair in enumerate(epipolar_line_pairs(f, cam_a, cam_b, X))
    ]
    gt = [PointPair.from_xy(a, b) for a, b in zip(xa, xb)]
    table = MatchTable(candidates=candidates, frame_pairs=list(range(len(X))))
    return f, FrameTangents(hulls_a, lines_a), FrameTangents(hulls_b, lines_b), table, gt


def noisy_points(rng, count: int = 30, sigma: float = 0.5):
    cam_a, cam_b = random_rig(rng)
    f = fundamental_from_cameras(cam_a.P, cam_b.P)
    X = rng.normal(0, 1.0, size=(count, 3))
    xa = cam_a.project(X) + rng.normal(0, sigma, size=(count, 2))
    xb = cam_b.project(X) + rng.normal(0, sigma, size=(count, 2))
    return f, xa, xb


def perturbed(f: Fundamental, rng, scale: float = 1e-3) -> Fundamental:
    p, theta = RankTwoParameterization.around(f)
    return Fundamental.from_matrix(p.matrix(theta * (1.0 + scale * rng.normal(size=7))))


@pytest.mark.unit
@pytest.mark.estimator
class TestParameterization:

    def test_every_parameter_vector_gives_rank_two(self, rng):
        p, _ = RankTwoParameterization.around(Fundamental.from_matrix(rng.normal(size=(3, 3))))
        for _ in range(20):
            m = p.matrix(rng.normal(size=7))
            s = np.linalg.svd(m, compute_uv=False)
            assert s[2] < 1e-12 * s[0]

    def test_around_reproduces_the_input(self, rng):
        for _ in range(20):
            f = Fundamental.from_matrix(rng.normal(size=(3, 3)))
            p, theta = RankTwoParameterization.around(f)
            assert fundamental_distance(Fundamental.from_matrix(p.matrix(theta)), f) < 1e-9

    def test_derivatives_match_finite_differences(self, rng):
        p, theta = RankTwoParameterization.around(Fundamental.from_matrix(rng.normal(size=(3, 3))))
        d = p.derivatives(theta)
        h = 1e-6
        for k in range(7):
            step = np.zeros(7)
            step[k] = h
            fd = (p.matrix(theta + step) - p.matrix(theta - step)) / (2 * h)
            np.testing.assert_allclose(d[k], fd, atol=1e-6)

    def test_normalized_chart_reproduces_the_input(self, rng):
        for _ in range(10):
            f, xa, xb = noisy_points(rng)
            p, theta = RankTwoParameterization.normalized_for(f, xa, xb)
            assert fundamental_distance(Fundamental.from_matrix(p.matrix(theta)), f) < 1e-9
            assert np.abs(theta).max() <= 1.0 + 1e-12

    def test_normalized_chart_is_better_conditioned(self, rng):
        f, xa, xb = noisy_points(rng)
        ha, hb = homogenize(xa), homogenize(xb)
        p, theta = RankTwoParameterization.normalized_for(f, xa, xb)
        raw_p, raw_theta = RankTwoParameterization.around(f)
        normalized = np.linalg.cond(sed_jacobian(theta, p, ha, hb))
        assert normalized < np.linalg.cond(sed_jacobian(raw_theta, raw_p, ha, hb))


@pytest.mark.unit
@pytest.mark.estimator
class TestSedResiduals:

    def test_magnitude_is_the_symmetric_distance(self, rng):
        f, xa, xb = noisy_points(rng)
        np.testing.assert_allclose(np.abs(signed_sed(f.m, homogenize(xa), homogenize(xb))),
                                   symmetric_epipolar_distances(f.m, xa, xb), rtol=1e-10)

    def test_jacobian_matches_finite_differences(self, rng):
        for _ in range(20):
            f, xa, xb = noisy_points(rng, count=12, sigma=2.0)
            p, theta = RankTwoParameterization.normalized_for(f, xa, xb)
            ha, hb = homogenize(xa), homogenize(xb)
            jac = sed_jacobian(theta, p, ha, hb)
            h = 1e-7
            fd = np.empty_like(jac)
            for k in range(7):
                step = np.zeros(7)
                step[k] = h
                fd[:, k] = (sed_residuals(theta + step, p, ha, hb) - sed_residuals(theta - step, p, ha, hb)) / (2 * h)
            scale = np.abs(fd).max()
            assert np.abs(jac - fd).max() <= 1e-5 * scale


@pytest.mark.unit
@pytest.mark.estimator
class TestLevenbergMarquardt:

    def test_never_increases_the_cost(self, rng):
        for _ in range(10):
            f_gt, xa, xb = noisy_points(rng)
            start = perturbed(f_gt, rng)
            result = lm_refine(start, (xa, xb))
            assert result.final_cost <= result.initial_cost

    def test_improves_a_perturbed_estimate(self, rng):
        f_gt, xa, xb = noisy_points(rng, count=60, sigma=0.3)
        start = perturbed(f_gt, rng, scale=1e-2)
        result = lm_refine(start, (xa, xb))
        before = symmetric_epipolar_distances(start.m, xa, xb).mean()
        after = symmetric_epipolar_distances(result.f.m, xa, xb).mean()
        assert after < before

    def test_accepts_point_pairs(self, rng):
        f_gt, xa, xb = noisy_points(rng, count=10)
        pairs = [PointPair.from_xy(a, b) for a, b in zip(xa, xb)]
        assert lm_refine(f_gt, pairs).final_cost <= lm_refine(f_gt, pairs).initial_cost

    def test_too_few_points(self, rng):
        f_gt, xa, xb = noisy_points(rng, count=6)
        with pytest.raises(InsufficientPoints):
            lm_refine(f_gt, (xa, xb))

    def test_records_metrics(self, rng):
        f_gt, xa, xb = noisy_points(rng)
        metrics = EstimationMetrics()
        lm_refine(perturbed(f_gt, rng), (xa, xb), metrics=metrics)
        assert metrics.lm_calls == 1


@pytest.mark.unit
@pytest.mark.estimator
class TestScoring:

    def test_inlier_threshold_is_strict(self):
        f = Fundamental.from_matrix(np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float))
        xa = np.array([[0.0, 5.0], [0.0, 5.0]])
        xb = np.array([[3.0, 5.5], [3.0, 6.0]])
        count, error, mask = score_points(f.m, xa, xb, 1.0)
        assert count == 1
        assert mask.tolist() == [True, False]
        assert error == pytest.approx(0.5)

    def test_no_points(self):
        count, error, _ = score_points(np.eye(3), np.zeros((0, 2)), np.zeros((0, 2)), 1.0)
        assert count == 0 and error == float("inf")

    def test_hypothesis_scored_on_touch_points(self, rng):
        f_gt, table, _ = exact_table(rng)
        count, error = score_hypothesis(f_gt, table, 1.0)
        assert count == 20
        assert error < 1e-6
        assert score_hypothesis(f_gt, table, 1.0, min_correlation=0.9855)[0] == 5


@pytest.mark.unit
@pytest.mark.estimator
class TestRansac:

    def config(self, **overrides) -> RansacConfig:
        values = dict(max_hypotheses=300, checkpoint_interval=100, seed=11, batch_size=50)
        values.update(overrides)
        return RansacConfig(**values)

    def test_recovers_exact_geometry(self, rng):
        f_gt, table, gt = exact_table(rng)
        f, report = ransac_fundamental(table, self.config(), ground_truth=gt)
        assert fundamental_distance(f, f_gt) < 1e-6
        assert report.lm_count == 3
        assert report.post_lm_errors().max() < 1e-4

    def test_checkpoints_follow_the_interval(self, rng):
        _, table, _ = exact_table(rng)
        _, report = ransac_fundamental(table, self.config(max_hypotheses=250))
        assert [c.hypothesis_index for c in report.checkpoints] == [100, 200, 250]
        assert report.hypotheses == 250

    def test_precompute_is_charged(self, rng):
        _, table, _ = exact_table(rng)
        _, report = ransac_fundamental(table, self.config())
        assert report.precompute_cost_iters == BARCODE_PRECOMPUTE_ITERS == 35
        assert report.method == "barcode"

    def test_thread_count_does_not_change_results(self, rng):
        _, table, gt = exact_table(rng)
        f1, r1 = ransac_fundamental(table, self.config(threads=1), ground_truth=gt)
        f2, r2 = ransac_fundamental(table, self.config(threads=3), ground_truth=gt)
        assert np.array_equal(f1.m, f2.m)
        assert r1.to_dataframe().equals(r2.to_dataframe())

    def test_report_file_is_reproducible(self, rng, tmp_path):
        _, table, gt = exact_table(rng)
        paths = []
        for name in ("a.csv", "b.csv"):
            _, report = ransac_fundamental(table, self.config(), ground_truth=gt)
            report.to_csv(tmp_path / name)
            paths.append(tmp_path / name)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_wall_time_only_with_timing(self, rng):
        _, table, _ = exact_table(rng)
        _, report = ransac_fundamental(table, self.config())
        assert report.to_dataframe()["wall_ms"].isna().all()
        assert report.to_dataframe(timing=True)["wall_ms"].notna().all()

    def test_best_so_far_is_monotone(self, rng):
        _, table, gt = exact_table(rng)
        _, report = ransac_fundamental(table, self.config(), ground_truth=gt)
        best = report.best_so_far()
        assert np.all(np.diff(best) <= 0)

    def test_too_few_candidates(self, rng):
        _, table, _ = exact_table(rng, frames=1)
        with pytest.raises(NotEnoughCandidates):
            ransac_fundamental(table, self.config())

    def test_all_degenerate(self):
        line = HomogLine(np.array([1.0, 0.0, -5.0]))
        candidates = [
            MatchCandidate(t, CandidateLine(line, CandidatePoint(5.0, t), 0.0, 0),
                           CandidateLine(line, CandidatePoint(5.0, t), 0.0, 0), 0.95)
            for t in range(4)
        ]
        with pytest.raises(AllDegenerate):
            ransac_fundamental(MatchTable(candidates, list(range(4))), self.config(max_hypotheses=20, checkpoint_interval=10))

    def test_hypothesis_streams_are_independent_of_order(self):
        a = hypothesis_rng(5, 17).random(3)
        hypothesis_rng(5, 3).random(10)
        assert np.array_equal(a, hypothesis_rng(5, 17).random(3))
        assert not np.array_equal(a, hypothesis_rng(5, 18).random(3))


@pytest.mark.unit
@pytest.mark.estimator
class TestTangentBaseline:

    def test_epipole_inside_hull(self, square_mask):
        with pytest.raises(EpipoleInsideHull):
            third_pair_tangents(convex_hull(square_mask), np.array([4.5, 3.0, 1.0]))

    def test_two_tangents_from_outside(self, square_mask):
        lines = third_pair_tangents(convex_hull(square_mask), np.array([-10.0, 3.0, 1.0]))
        assert len(lines) == 2

    @pytest.mark.parametrize("epipole", [[-10.0, 3.0, 1.0], [30.0, 3.0, 1.0], [1.0, 0.0, 0.0]])
    def test_upper_tangent_comes_first(self, square_mask, epipole):
        hull = convex_hull(square_mask)
        e = np.array(epipole)
        lines = [line.coords for line in third_pair_tangents(hull, e)]
        ordered = order_tangents(lines[::-1], e, hull)
        cx = hull.centroid[0]
        heights = [-(a * cx + c) / b for a, b, c in ordered]
        assert heights[0] < heights[1]
        np.testing.assert_allclose(order_tangents(lines, e, hull), ordered)

    def test_noise_free_tangents_give_the_exact_fundamental(self, rng):
        for _ in range(3):
            f_gt, tangents_a, tangents_b, table, gt = exact_tangent_frames(rng)
            cfg = RansacConfig(max_hypotheses=20, checkpoint_interval=10, seed=1, min_correlation=0.5)
            f, report = sinha_baseline([0, 1], tangents_a, tangents_b, table, cfg, ground_truth=gt)
            assert report.valid_hypotheses > 0
            assert fundamental_distance(f, f_gt) < 1e-6
            assert report.post_lm_errors().max() < 1e-6

    def test_runs_without_precompute_charge(self, small_scene, small_masks, small_banks):
        masks_a, masks_b = small_masks
        frames = list(range(small_scene.frames))
        table = build_match_table(*small_banks)
        cfg = RansacConfig(max_hypotheses=100, checkpoint_interval=50, seed=3)
        _, report = sinha_baseline(
            frames, FrameTangents.from_masks(masks_a, frames, 10.0), FrameTangents.from_masks(masks_b, frames, 10.0),
            table, cfg, image_size=small_scene.image_size,
        )
        assert report.method == "sinha"
        assert report.precompute_cost_iters == 0
        assert report.lm_count == 2
