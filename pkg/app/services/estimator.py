"""RANSAC estimation of F from matched epipolar lines, LM refinement and the
tangent-sampling baseline"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from app.core.errors import (
    AllDegenerate, CalibrationError, EpipoleInsideHull, DegeneratePencil,
    InsufficientPoints, NotEnoughCandidates,
)
from app.models.schemas import RansacConfig
from app.services.geometry import (
    Fundamental, LinePair, HomogLine, PointPair, fundamental_from_line_pairs, homogenize,
    normalizing_transform, point_pairs_to_arrays, symmetric_epipolar_distances,
)
from app.services.matcher import MatchTable
from app.services.silhouette import ConvexHull, Mask, convex_hull, tangent_arrays, tangents_through_point
from app.utils.metrics import EstimationMetrics

logger = logging.getLogger('silcal.estimator')

# Barcode precompute charged as this many hypotheses
BARCODE_PRECOMPUTE_ITERS = 35
MIN_LM_POINTS = 7


# ============================================================
# RANK-2 PARAMETERIZATION
# ============================================================

class RankTwoParameterization:
    """F through 7 numbers: a 2x2 block with its largest entry fixed to 1
    and two epipoles with their largest coordinate fixed to 1.

    The chart lives in normalized image coordinates x^ = T x, so F equals
    T_b^T F^ T_a. In permuted coordinates F^ is
        [[1,          a,          -x1 - a*y1],
         [b,          c,          -b*x1 - c*y1],
         [-x2 - b*y2, -a*x2 - c*y2, (x1 + a*y1)*x2 + (b*x1 + c*y1)*y2]]
    with theta = (a, b, c, x1, y1, x2, y2); it has rank 2 for every theta.
    """

    def __init__(self, row_order: Sequence[int], col_order: Sequence[int],
                 t_a: Optional[np.ndarray] = None, t_b: Optional[np.ndarray] = None):
        self.row_order = np.asarray(row_order)
        self.col_order = np.asarray(col_order)
        self.t_a = np.eye(3) if t_a is None else np.asarray(t_a, dtype=float)
        self.t_b = np.eye(3) if t_b is None else np.asarray(t_b, dtype=float)

    @classmethod
    def around(cls, f: Fundamental, t_a: Optional[np.ndarray] = None,
               t_b: Optional[np.ndarray] = None) -> Tuple["RankTwoParameterization", np.ndarray]:
        """Chart centred on f; t_a and t_b default to the identity (pixel units)"""
        p = cls([0, 1, 2], [0, 1, 2], t_a, t_b)
        m = p._normalize(np.asarray(f.m))
        u, _, vt = np.linalg.svd(m)
        k1 = int(np.argmax(np.abs(vt[2])))
        k2 = int(np.argmax(np.abs(u[:, 2])))
        cols = [j for j in range(3) if j != k1]
        rows = [i for i in range(3) if i != k2]
        # the block is invertible since its cofactor is e2[k2] * e1[k1] != 0
        block = m[np.ix_(rows, cols)]
        i0, j0 = np.unravel_index(int(np.argmax(np.abs(block))), (2, 2))
        p = cls([rows[i0], rows[1 - i0], k2], [cols[j0], cols[1 - j0], k1], p.t_a, p.t_b)
        return p, p.parameters_of(f.m)

    @classmethod
    def normalized_for(cls, f: Fundamental, xa: np.ndarray, xb: np.ndarray) -> Tuple["RankTwoParameterization", np.ndarray]:
        """Chart in the normalized coordinates of the two point sets"""
        return cls.around(f, normalizing_transform(xa), normalizing_transform(xb))

    def _normalize(self, m: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.t_b).T @ m @ np.linalg.inv(self.t_a)

    def _denormalize(self, m: np.ndarray) -> np.ndarray:
        return self.t_b.T @ m @ self.t_a

    def parameters_of(self, m: np.ndarray) -> np.ndarray:
        hat = self._normalize(np.asarray(m))[np.ix_(self.row_order, self.col_order)]
        hat = hat / hat[0, 0]
        u, _, vt = np.linalg.svd(hat)
        e1 = vt[2] / vt[2, 2]
        e2 = u[:, 2] / u[2, 2]
        return np.array([hat[0, 1], hat[1, 0], hat[1, 1], e1[0], e1[1], e2[0], e2[1]])

    def _unpermute(self, hat: np.ndarray) -> np.ndarray:
        out = np.empty_like(hat)
        out[..., self.row_order[:, None], self.col_order[None, :]] = hat
        return out

    def matrix(self, theta) -> np.ndarray:
        a, b, c, x1, y1, x2, y2 = theta
        hat = np.array([
            [1.0, a, -x1 - a * y1],
            [b, c, -b * x1 - c * y1],
            [-x2 - b * y2, -a * x2 - c * y2, (x1 + a * y1) * x2 + (b * x1 + c * y1) * y2],
        ])
        return self._denormalize(self._unpermute(hat))

    def derivatives(self, theta) -> np.ndarray:
        """(7, 3, 3) partial derivatives of matrix(theta)"""
        a, b, c, x1, y1, x2, y2 = theta
        d = np.zeros((7, 3, 3))
        d[0] = [[0, 1, -y1], [0, 0, 0], [0, -x2, y1 * x2]]
        d[1] = [[0, 0, 0], [1, 0, -x1], [-y2, 0, x1 * y2]]
        d[2] = [[0, 0, 0], [0, 1, -y1], [0, -y2, y1 * y2]]
        d[3] = [[0, 0, -1], [0, 0, -b], [0, 0, x2 + b * y2]]
        d[4] = [[0, 0, -a], [0, 0, -c], [0, 0, a * x2 + c * y2]]
        d[5] = [[0, 0, 0], [0, 0, 0], [-1, -a, x1 + a * y1]]
        d[6] = [[0, 0, 0], [0, 0, 0], [-b, -c, b * x1 + c * y1]]
        return self._denormalize(self._unpermute(d))


def _line_norms(m, ha, hb):
    lb = ha @ m.T
    la = hb @ m
    s = np.sum(hb * lb, axis=1)
    nb = np.maximum(np.hypot(lb[:, 0], lb[:, 1]), 1e-300)
    na = np.maximum(np.hypot(la[:, 0], la[:, 1]), 1e-300)
    return lb, la, s, nb, na


def signed_sed(m: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Signed symmetric epipolar distance; its square is the squared distance"""
    _, _, s, nb, na = _line_norms(m, ha, hb)
    return 0.5 * s * (1.0 / nb + 1.0 / na)


def signed_sed_matrix_gradient(m: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """(N, 3, 3) derivative of each signed distance with respect to the entries of m"""
    lb, la, s, nb, na = _line_norms(m, ha, hb)
    ds = hb[:, :, None] * ha[:, None, :]
    dnb = np.zeros_like(ds)
    dnb[:, :2, :] = (lb[:, :2] / nb[:, None])[:, :, None] * ha[:, None, :]
    dna = np.zeros_like(ds)
    dna[:, :, :2] = hb[:, :, None] * (la[:, :2] / na[:, None])[:, None, :]
    inv = (1.0 / nb + 1.0 / na)[:, None, None]
    return 0.5 * (ds * inv - s[:, None, None] * (dnb / nb[:, None, None] ** 2 + dna / na[:, None, None] ** 2))


def sed_residuals(theta, param: RankTwoParameterization, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    return signed_sed(param.matrix(theta), ha, hb)


def sed_jacobian(theta, param: RankTwoParameterization, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    g = signed_sed_matrix_gradient(param.matrix(theta), ha, hb)
    return np.einsum("nij,kij->nk", g, param.derivatives(theta))


class LmResult(NamedTuple):
    f: Fundamental
    initial_cost: float
    final_cost: float
    converged: bool
    evaluations: int


def _as_arrays(pairs) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        return homogenize(pairs[0]), homogenize(pairs[1])
    xa, xb = point_pairs_to_arrays(list(pairs))
    return homogenize(xa), homogenize(xb)


def lm_refine(
    f: Fundamental,
    pairs,
    max_nfev: int = 100,
    gtol: float = 1e-10,
    metrics: Optional[EstimationMetrics] = None,
) -> LmResult:
    """Levenberg-Marquardt over the rank-2 parameterization, minimizing the sum
    of squared symmetric epipolar distances.

    pairs is a list of PointPair or a tuple of (N, 2) arrays. The result never
    has a higher cost than the input; a non-converged run keeps its best
    iterate and reports converged=False.
    """
    ha, hb = _as_arrays(pairs)
    if len(ha) < MIN_LM_POINTS:
        raise InsufficientPoints(f"LM needs {MIN_LM_POINTS} point pairs, got {len(ha)}")

    param, theta0 = RankTwoParameterization.normalized_for(f, ha[:, :2], hb[:, :2])
    r0 = sed_residuals(theta0, param, ha, hb)
    initial = 0.5 * float(r0 @ r0)
    if initial <= 1e-24:
        return LmResult(f, initial, initial, True, 0)

    start = time.perf_counter()
    sol = least_squares(
        sed_residuals, theta0, jac=sed_jacobian, method="lm",
        args=(param, ha, hb), max_nfev=max_nfev, gtol=gtol, ftol=1e-12, xtol=1e-12,
    )
    elapsed = time.perf_counter() - start
    converged = bool(sol.status > 0)
    final = float(sol.cost)
    refined = f
    if np.isfinite(final) and final <= initial:
        try:
            refined = Fundamental.from_matrix(param.matrix(sol.x))
        except CalibrationError:
            refined, final = f, initial
    else:
        final = initial
    if not converged:
        logger.warning(f"LM stopped after {sol.nfev} evaluations without converging "
                       f"(cost {initial:.4g} -> {final:.4g})")
    if metrics is not None:
        metrics.record_lm(elapsed, initial, final, converged)
    return LmResult(refined, initial, final, converged, int(sol.nfev))


# ============================================================
# SCORING
# ============================================================

def score_points(m: np.ndarray, xa: np.ndarray, xb: np.ndarray, threshold_px: float):
    """(inlier count, mean inlier distance or inf, inlier mask)"""
    if len(xa) == 0:
        return 0, float("inf"), np.zeros(0, dtype=bool)
    d = symmetric_epipolar_distances(m, xa, xb, strict=False)
    inliers = d < threshold_px
    count = int(inliers.sum())
    return count, (float(d[inliers].mean()) if count else float("inf")), inliers


def score_hypothesis(f: Fundamental, table: MatchTable, threshold_px: float,
                     min_correlation: float = 0.9) -> Tuple[int, float]:
    """Touch points of well-correlated candidates serve as point correspondences"""
    xa, xb = table.touch_arrays(min_correlation)
    count, error, _ = score_points(f.m, xa, xb, threshold_px)
    return count, error


def ground_truth_error(f: Fundamental, ground_truth: Sequence[PointPair]) -> float:
    xa, xb = point_pairs_to_arrays(list(ground_truth))
    return float(np.mean(symmetric_epipolar_distances(f.m, xa, xb, strict=False)))


# ============================================================
# REPORT
# ============================================================

@dataclass(frozen=True)
class Hypothesis:
    index: int
    f: Optional[Fundamental]
    inlier_count: int
    score: float
    source_triple: Tuple[int, ...]
    rejection: Optional[str] = None
    elapsed: float = 0.0

    def beats(self, other: Optional["Hypothesis"]) -> bool:
        if self.f is None:
            return False
        if other is None:
            return True
        return (self.inlier_count, -self.score) > (other.inlier_count, -other.score)


@dataclass(frozen=True)
class Checkpoint:
    hypothesis_index: int
    window_best_error: float
    post_lm_error: float
    inlier_error: float
    inlier_count: int
    lm_applied: bool
    wall_ms: float


@dataclass
class RansacReport:
    """Checkpoint series of one run; hypothesis_index counts generated hypotheses"""
    method: str
    precompute_cost_iters: int
    checkpoints: List[Checkpoint] = field(default_factory=list)
    hypotheses: int = 0
    valid_hypotheses: int = 0

    @property
    def lm_count(self) -> int:
        return len(self.checkpoints)

    def post_lm_errors(self) -> np.ndarray:
        return np.array([c.post_lm_error for c in self.checkpoints])

    def best_so_far(self) -> np.ndarray:
        errors = self.post_lm_errors()
        return np.minimum.accumulate(errors) if errors.size else errors

    def to_dataframe(self, timing: bool = False) -> pd.DataFrame:
        rows = [{
            "hypothesis_index": c.hypothesis_index,
            "window_best_error": c.window_best_error,
            "post_lm_error": c.post_lm_error,
            "lm_count": i + 1,
            "wall_ms": c.wall_ms if timing else np.nan,
        } for i, c in enumerate(self.checkpoints)]
        df = pd.DataFrame(rows, columns=["hypothesis_index", "window_best_error", "post_lm_error", "lm_count", "wall_ms"])
        df.insert(0, "method", self.method)
        return df

    def to_csv(self, path, timing: bool = False):
        """Without timing the file depends only on inputs and seed"""
        self.to_dataframe(timing).to_csv(path, index=False, float_format="%.10g")


# ============================================================
# RANSAC DRIVER
# ============================================================

Generator = Callable[[np.random.Generator], Tuple[Fundamental, Tuple[int, ...]]]


def hypothesis_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per hypothesis so results do not depend on scheduling"""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]))


def _run_ransac(
    generate: Generator,
    xa: np.ndarray,
    xb: np.ndarray,
    cfg: RansacConfig,
    method: str,
    precompute: int,
    ground_truth: Optional[Sequence[PointPair]],
    metrics: Optional[EstimationMetrics],
) -> Tuple[Fundamental, RansacReport]:
    metrics = metrics or EstimationMetrics()

    def evaluate(index: int) -> Hypothesis:
        t0 = time.perf_counter()
        try:
            f, triple = generate(hypothesis_rng(cfg.seed, index))
        except (CalibrationError, np.linalg.LinAlgError, ValueError) as e:
            return Hypothesis(index, None, 0, float("inf"), (), type(e).__name__, time.perf_counter() - t0)
        count, error, _ = score_points(f.m, xa, xb, cfg.inlier_threshold_px)
        return Hypothesis(index, f, count, error, triple, None, time.perf_counter() - t0)

    report = RansacReport(method=method, precompute_cost_iters=precompute)
    best_f: Optional[Fundamental] = None
    best_key = None
    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for window_start in range(0, cfg.max_hypotheses, cfg.checkpoint_interval):
            window_stop = min(window_start + cfg.checkpoint_interval, cfg.max_hypotheses)
            t0 = time.perf_counter()
            window_best: Optional[Hypothesis] = None
            for batch_start in range(window_start, window_stop, cfg.batch_size):
                indices = range(batch_start, min(batch_start + cfg.batch_size, window_stop))
                outcomes = list(executor.map(evaluate, indices)) if executor else [evaluate(i) for i in indices]
                for h in outcomes:
                    metrics.record_hypothesis(h.f is not None, h.elapsed,
                                              h.inlier_count if h.f is not None else None, h.rejection)
                    report.hypotheses += 1
                    if h.f is not None:
                        report.valid_hypotheses += 1
                    if h.beats(window_best):
                        window_best = h

            checkpoint, refined, key = _checkpoint(window_best, window_stop, xa, xb, cfg, ground_truth, metrics, t0)
            report.checkpoints.append(checkpoint)
            if refined is not None and (best_key is None or key > best_key):
                best_f, best_key = refined, key
            logger.debug(f"[{method}] checkpoint {report.lm_count}: {window_stop} hypotheses, "
                         f"post-LM error {checkpoint.post_lm_error:.4f} px")
    finally:
        if executor:
            executor.shutdown()

    if best_f is None:
        raise AllDegenerate(f"none of {cfg.max_hypotheses} hypotheses gave a fundamental matrix")
    logger.info(f"[{method}] {report.valid_hypotheses}/{report.hypotheses} valid hypotheses, "
                f"{report.lm_count} LM runs, best inlier count {best_key[0]}")
    return best_f, report


def _checkpoint(window_best, index, xa, xb, cfg, ground_truth, metrics, t0):
    if window_best is None:
        wall = (time.perf_counter() - t0) * 1000
        return Checkpoint(index, float("inf"), float("inf"), float("inf"), 0, False, wall), None, None

    _, _, inliers = score_points(window_best.f.m, xa, xb, cfg.inlier_threshold_px)
    refined = window_best.f
    lm_applied = False
    if inliers.sum() >= MIN_LM_POINTS:
        refined = lm_refine(window_best.f, (xa[inliers], xb[inliers]), metrics=metrics).f
        lm_applied = True
    count, error, _ = score_points(refined.m, xa, xb, cfg.inlier_threshold_px)
    post = ground_truth_error(refined, ground_truth) if ground_truth else error
    wall = (time.perf_counter() - t0) * 1000
    checkpoint = Checkpoint(index, window_best.score, post, error, count, lm_applied, wall)
    return checkpoint, refined, (count, -error)


def ransac_fundamental(
    table: MatchTable,
    cfg: RansacConfig,
    ground_truth: Optional[Sequence[PointPair]] = None,
    image_size: Tuple[int, int] = (640, 480),
    metrics: Optional[EstimationMetrics] = None,
) -> Tuple[Fundamental, RansacReport]:
    """RANSAC over triples of matched line pairs from three distinct frames.

    Ground truth, when given, only feeds the post-LM errors of the report;
    the returned F is chosen by inlier count, then inlier error.
    """
    if len(table) < 3:
        raise NotEnoughCandidates(f"match table has {len(table)} candidates, 3 needed")
    pool = [c for c in table.candidates if c.correlation >= cfg.min_correlation]
    if len({c.frame for c in pool}) < 3:
        logger.warning(f"Only {len(pool)} candidates reach correlation {cfg.min_correlation}; "
                       f"sampling from the top {cfg.min_pool}")
        pool = table.candidates[:cfg.min_pool]
    frames = sorted({c.frame for c in pool})
    if len(frames) < 3:
        raise NotEnoughCandidates(f"candidates come from {len(frames)} frames, 3 needed")

    by_frame: Dict[int, List[int]] = {t: [] for t in frames}
    for i, c in enumerate(pool):
        by_frame[c.frame].append(i)
    xa = np.array([c.line_a.touch.pos for c in pool])
    xb = np.array([c.line_b.touch.pos for c in pool])

    def generate(rng: np.random.Generator):
        picks = rng.choice(len(frames), size=3, replace=False)
        triple = []
        for p in picks:
            members = by_frame[frames[p]]
            triple.append(members[int(rng.integers(len(members)))] if len(members) > 1 else members[0])
        pairs = [LinePair(pool[i].line_a.line, pool[i].line_b.line) for i in triple]
        return fundamental_from_line_pairs(pairs, image_size, concurrency_tol_px=None), tuple(triple)

    logger.info(f"RANSAC: {len(pool)} candidates from {len(frames)} frames, "
                f"{cfg.max_hypotheses} hypotheses, LM every {cfg.checkpoint_interval}")
    return _run_ransac(generate, xa, xb, cfg, "barcode", BARCODE_PRECOMPUTE_ITERS, ground_truth, metrics)


# ============================================================
# TANGENT-SAMPLING BASELINE
# ============================================================

@dataclass(eq=False)
class FrameTangents:
    """Hull and sampled tangent lines of the usable frames of one camera"""
    hulls: Dict[int, ConvexHull]
    lines: Dict[int, np.ndarray]

    @classmethod
    def from_masks(cls, masks: Sequence[Mask], frames: Sequence[int], angle_step: float) -> "FrameTangents":
        hulls, lines = {}, {}
        for t in frames:
            if masks[t].is_empty:
                continue
            hull = convex_hull(masks[t])
            if hull.is_degenerate:
                continue
            hulls[t] = hull
            lines[t] = tangent_arrays(hull, angle_step)[0]
        return cls(hulls, lines)


def third_pair_tangents(hull: ConvexHull, epipole: np.ndarray) -> List[HomogLine]:
    """Both tangents from the epipole to a hull, or EpipoleInsideHull"""
    tangents = tangents_through_point(hull, epipole)
    if len(tangents) < 2:
        raise EpipoleInsideHull("hypothesized epipole lies inside the silhouette hull")
    return [t.line for t in tangents[:2]]


def order_tangents(lines: Sequence[np.ndarray], epipole: np.ndarray, hull: ConvexHull) -> List[np.ndarray]:
    """Two lines through the epipole, the one touching the hull above the
    epipole-to-centroid axis first.

    The axis is directed toward increasing x in both images, so the upper
    tangent of one image pairs with the upper tangent of the other.
    """
    e = np.asarray(epipole, dtype=float)
    c = hull.centroid
    if abs(e[2]) > 1e-12 * np.linalg.norm(e):
        axis = c - e[:2] / e[2]
    else:
        axis = e[:2].copy()
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    v = np.column_stack([hull.vertices, np.ones(len(hull.vertices))])
    sides = []
    for line in lines:
        line = np.asarray(line, dtype=float)
        touch = hull.vertices[int(np.argmin(np.abs(v @ line)))]
        offset = touch - c
        sides.append(axis[0] * offset[1] - axis[1] * offset[0])
    return [np.asarray(lines[k], dtype=float) for k in np.argsort(sides, kind="stable")]


def sinha_baseline(
    frame_pairs: Sequence[int],
    tangents_a: FrameTangents,
    tangents_b: FrameTangents,
    table: MatchTable,
    cfg: RansacConfig,
    ground_truth: Optional[Sequence[PointPair]] = None,
    image_size: Tuple[int, int] = (640, 480),
    metrics: Optional[EstimationMetrics] = None,
) -> Tuple[Fundamental, RansacReport]:
    """Hypotheses from two sampled tangents per image in one frame and the
    tangents through the implied epipoles in another frame.

    Scoring uses the same point set as the barcode method so the two differ
    only in how hypotheses are generated.
    """
    frames = [t for t in frame_pairs if t in tangents_a.hulls and t in tangents_b.hulls]
    if len(frames) < 2:
        raise NotEnoughCandidates(f"{len(frames)} usable frame pairs, 2 needed")
    xa, xb = table.touch_arrays(cfg.min_correlation)
    if len(xa) < 3:
        xa, xb = table.touch_arrays(-1.0)

    def generate(rng: np.random.Generator):
        i, j = rng.choice(len(frames), size=2, replace=False)
        t1, t2 = frames[i], frames[j]
        lines_a, lines_b = tangents_a.lines[t1], tangents_b.lines[t1]
        ka = rng.choice(len(lines_a), size=2, replace=False)
        kb = rng.choice(len(lines_b), size=2, replace=False)
        e = np.cross(lines_a[ka[0]], lines_a[ka[1]])
        e_prime = np.cross(lines_b[kb[0]], lines_b[kb[1]])
        if np.linalg.norm(e) < 1e-12 or np.linalg.norm(e_prime) < 1e-12:
            raise DegeneratePencil("sampled tangents coincide")
        first_a = order_tangents(lines_a[ka], e, tangents_a.hulls[t1])
        first_b = order_tangents(lines_b[kb], e_prime, tangents_b.hulls[t1])
        third_a = order_tangents([l.coords for l in third_pair_tangents(tangents_a.hulls[t2], e)],
                                 e, tangents_a.hulls[t2])
        third_b = order_tangents([l.coords for l in third_pair_tangents(tangents_b.hulls[t2], e_prime)],
                                 e_prime, tangents_b.hulls[t2])
        k = int(rng.integers(2))
        pairs = [
            LinePair(HomogLine(first_a[0]), HomogLine(first_b[0])),
            LinePair(HomogLine(first_a[1]), HomogLine(first_b[1])),
            LinePair(HomogLine(third_a[k]), HomogLine(third_b[k])),
        ]
        return fundamental_from_line_pairs(pairs, image_size, concurrency_tol_px=None), (int(t1), int(t2))

    logger.info(f"Baseline RANSAC: {len(frames)} frames, {cfg.max_hypotheses} hypotheses")
    return _run_ransac(generate, xa, xb, cfg, "sinha", 0, ground_truth, metrics)
