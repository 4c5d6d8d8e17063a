"""Method comparison on synthetic scenes.

Efficiency is counted in LM optimizations: a method's expected LM count at
an error level is 1 / P(post-LM error <= level), plus the barcode precompute
expressed in LM units. Accuracy at a hypothesis budget is the median of the
best post-LM error within each budget-sized block of checkpoints.
"""
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from app.core.config import settings
from app.core.errors import CalibrationError, DatasetIOError, NoData
from app.models.schemas import ExperimentSpec, RansacConfig
from app.services.barcode import BarcodeBank, BarcodeProvider, BoundaryStack
from app.services.estimator import (
    MIN_LM_POINTS, FrameTangents, RansacReport, ground_truth_error, ransac_fundamental, score_points, sinha_baseline,
)
from app.services.geometry import Fundamental, PointPair, homogenize
from app.services.matcher import MatchTable, build_match_table
from app.services.refine import refine
from app.services.synth import ground_truth_frontier_points, make_scene

logger = logging.getLogger('silcal.bench')

NOT_ATTAINED = "not attained"
ESTIMATED_COLOR = "#e6b800"
GROUND_TRUTH_COLOR = "#d62728"


# ============================================================
# RESULTS
# ============================================================

@dataclass(eq=False)
class CellResult:
    """One (scene, method, seed) run"""
    scene: int
    method: str
    seed: int
    report: Optional[RansacReport] = None
    f: Optional[Fundamental] = None
    estimate_error: Optional[float] = None
    refined_error: Optional[float] = None
    error: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.report is not None

    def errors(self) -> np.ndarray:
        return self.report.post_lm_errors() if self.report is not None else np.zeros(0)

    @property
    def best_error(self) -> float:
        errors = self.errors()
        return float(errors.min()) if errors.size else float("inf")


@dataclass(eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    cells: List[CellResult] = field(default_factory=list)
    image_sizes: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    overlays: Dict[str, bytes] = field(default_factory=dict)

    def completed(self, method: Optional[str] = None) -> List[CellResult]:
        return [c for c in self.cells if c.completed and (method is None or c.method == method)]

    def raw_dataframe(self) -> pd.DataFrame:
        frames = []
        for c in self.completed():
            df = c.report.to_dataframe(timing=False).drop(columns=["wall_ms"])
            df.insert(0, "seed", c.seed)
            df.insert(0, "scene", c.scene)
            df["charged_hypotheses"] = df["hypothesis_index"] + c.report.precompute_cost_iters
            frames.append(df)
        columns = ["scene", "seed", "method", "hypothesis_index", "window_best_error",
                   "post_lm_error", "lm_count", "charged_hypotheses"]
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)[columns]

    def summary_dataframe(self) -> pd.DataFrame:
        return summarize(self)

    def write(self, out_dir) -> List[Path]:
        """bench.csv, summary.csv and overlay files"""
        out_dir = Path(out_dir)
        written = []
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            raw = out_dir / "bench.csv"
            self.raw_dataframe().to_csv(raw, index=False, float_format="%.10g")
            summary = out_dir / "summary.csv"
            self.summary_dataframe().to_csv(summary, index=False)
            written += [raw, summary]
            for name, data in sorted(self.overlays.items()):
                path = out_dir / name
                path.write_bytes(data)
                written.append(path)
        except OSError as e:
            raise DatasetIOError(f"cannot write benchmark output to {out_dir}: {e}") from e
        logger.info(f"Wrote {len(written)} benchmark files to {out_dir}")
        return written


# ============================================================
# STATISTICS
# ============================================================

def expected_lm_count(errors: np.ndarray, level: float, precompute_iters: int, checkpoint_interval: int) -> float:
    """1 / P(error <= level) from the empirical CDF, plus the precompute charge; inf if never reached"""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return float("inf")
    p = float(np.mean(errors <= level))
    if p == 0.0:
        return float("inf")
    return 1.0 / p + precompute_iters / checkpoint_interval


def budget_minima(errors: np.ndarray, budget: int, checkpoint_interval: int) -> np.ndarray:
    """Best error of each run of budget/interval consecutive checkpoints"""
    group = max(1, budget // checkpoint_interval)
    errors = np.asarray(errors, dtype=float)
    full = errors.size // group
    if full == 0:
        return np.zeros(0)
    return errors[:full * group].reshape(full, group).min(axis=1)


def _median_or_nan(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan")
    m = float(np.median(values))
    return m if np.isfinite(m) else float("nan")


def _format(value: float) -> str:
    return NOT_ATTAINED if not np.isfinite(value) else f"{value:.10g}"


def expected_lm_table(result: ExperimentResult) -> Dict[str, Dict[float, float]]:
    """Median over cells of the expected LM count, per method and level"""
    interval = result.spec.checkpoint_interval
    table = {}
    for method in result.spec.methods:
        cells = result.completed(method)
        table[method] = {
            level: _median_or_nan([expected_lm_count(c.errors(), level, c.report.precompute_cost_iters, interval)
                                   for c in cells])
            for level in result.spec.thresholds
        }
    return table


def budget_table(result: ExperimentResult) -> Dict[str, Dict[int, float]]:
    interval = result.spec.checkpoint_interval
    table = {}
    for method in result.spec.methods:
        cells = result.completed(method)
        table[method] = {}
        for budget in result.spec.budgets:
            minima = [budget_minima(c.errors(), budget, interval) for c in cells]
            table[method][budget] = _median_or_nan(np.concatenate(minima) if minima else [])
    return table


def ratio_table(result: ExperimentResult, baseline: str = "sinha", method: str = "barcode") -> Dict[float, float]:
    """Median over cells run by both methods of baseline / method expected LM counts"""
    if baseline not in result.spec.methods or method not in result.spec.methods:
        return {}
    interval = result.spec.checkpoint_interval
    ours = {(c.scene, c.seed): c for c in result.completed(method)}
    theirs = {(c.scene, c.seed): c for c in result.completed(baseline)}
    shared = sorted(set(ours) & set(theirs))
    if not shared:
        return {}
    table = {}
    for level in result.spec.thresholds:
        ratios = []
        for key in shared:
            a = expected_lm_count(ours[key].errors(), level, ours[key].report.precompute_cost_iters, interval)
            b = expected_lm_count(theirs[key].errors(), level, theirs[key].report.precompute_cost_iters, interval)
            if np.isfinite(a):
                ratios.append(b / a)
        # inf when the baseline never reaches the level in most cells
        table[level] = float(np.median(ratios)) if ratios else float("nan")
    return table


def success_fraction(result: ExperimentResult, threshold: float) -> Dict[str, float]:
    """Fraction of cells per method whose best post-LM error reaches threshold; failed cells count as misses"""
    if not result.completed():
        raise NoData("no completed benchmark cell")
    fractions = {}
    for method in result.spec.methods:
        cells = [c for c in result.cells if c.method == method]
        if cells:
            fractions[method] = sum(c.best_error <= threshold for c in cells) / len(cells)
    return fractions


def summarize(result: ExperimentResult) -> pd.DataFrame:
    """Long-format summary: table, method, parameter, value, cells"""
    rows = []
    counts = {m: len(result.completed(m)) for m in result.spec.methods}
    for method, levels in expected_lm_table(result).items():
        for level, value in levels.items():
            rows.append(("expected_lm", method, f"{level:g}", _format(value), counts[method]))
    for method, budgets in budget_table(result).items():
        for budget, value in budgets.items():
            rows.append(("budget_median", method, str(budget), _format(value), counts[method]))
    ratios = ratio_table(result)
    for level, value in ratios.items():
        rows.append(("ratio", "sinha/barcode", f"{level:g}", _format(value), min(counts.values())))
    if result.completed():
        for level in result.spec.thresholds:
            for method, value in success_fraction(result, level).items():
                rows.append(("success_fraction", method, f"{level:g}", _format(value), counts[method]))
    for method in result.spec.methods:
        refined = [c.refined_error for c in result.completed(method) if c.refined_error is not None]
        if refined:
            rows.append(("refined_median", method, "", _format(float(np.median(refined))), len(refined)))
    for c in result.cells:
        if not c.completed:
            rows.append(("missing", c.method, f"scene{c.scene}/seed{c.seed}", c.error or "failed", 0))
    return pd.DataFrame(rows, columns=["table", "method", "parameter", "value", "cells"])


# ============================================================
# OVERLAYS
# ============================================================

def clip_line(line, width: int, height: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Segment of a homogeneous line inside the image rectangle"""
    a, b, c = np.asarray(line, dtype=float)
    x0, y0, x1, y1 = -0.5, -0.5, width - 0.5, height - 0.5
    pts = []
    if abs(b) > 1e-12:
        for x in (x0, x1):
            y = -(a * x + c) / b
            if y0 <= y <= y1:
                pts.append((x, y))
    if abs(a) > 1e-12:
        for y in (y0, y1):
            x = -(b * y + c) / a
            if x0 <= x <= x1:
                pts.append((x, y))
    if len(pts) < 2:
        return None
    pts = np.array(pts)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    return pts[i], pts[j]


def render_overlay(image_size: Tuple[int, int], f_est: Fundamental, f_gt: Fundamental,
                   points, fmt: str = "svg") -> bytes:
    """Estimated and ground-truth epipolar lines in image B of the given image-A points"""
    w, h = image_size
    with matplotlib.rc_context({"svg.hashsalt": "silcal", "svg.fonttype": "none"}):
        fig = Figure(figsize=(w / 100.0, h / 100.0), dpi=100)
        canvas = FigureCanvasAgg(fig)
        ax = fig.add_axes([0, 0, 1, 1])
        ax.set_xlim(-0.5, w - 0.5)
        ax.set_ylim(h - 0.5, -0.5)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_facecolor("white")
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts):
            hx = homogenize(pts)
            for f, color, width in ((f_gt, GROUND_TRUTH_COLOR, 1.5), (f_est, ESTIMATED_COLOR, 1.0)):
                for line in hx @ f.m.T:
                    seg = clip_line(line, w, h)
                    if seg is not None:
                        ax.plot([seg[0][0], seg[1][0]], [seg[0][1], seg[1][1]], color=color, linewidth=width)
        buf = io.BytesIO()
        if fmt == "svg":
            fig.savefig(buf, format="svg", metadata={"Date": None})
            return buf.getvalue()
        if fmt == "ppm":
            canvas.draw()
            rgba = np.asarray(canvas.buffer_rgba())
            header = f"P6\n{rgba.shape[1]} {rgba.shape[0]}\n255\n".encode("ascii")
            return header + np.ascontiguousarray(rgba[..., :3]).tobytes()
    raise ValueError(f"unknown overlay format {fmt!r}")


# ============================================================
# RUNNER
# ============================================================

@dataclass(eq=False)
class _SceneData:
    index: int
    image_size: Tuple[int, int]
    f_gt: Fundamental
    ground_truth: List[PointPair]
    table: MatchTable
    tangents: Tuple[FrameTangents, FrameTangents]
    provider: BarcodeProvider


def _prepare_scene(index: int, spec: ExperimentSpec, angle_step: float) -> _SceneData:
    scene = make_scene(spec.scenes[index])
    masks_a, masks_b = scene.render_all()[:2]
    f_gt = scene.fundamental(0, 1)
    frontier = ground_truth_frontier_points(masks_a, masks_b, f_gt, scene=scene)
    stack_a, stack_b = BoundaryStack(masks_a), BoundaryStack(masks_b)
    bank_a = BarcodeBank.build(masks_a, angle_step, stack=stack_a)
    bank_b = BarcodeBank.build(masks_b, angle_step, stack=stack_b)
    table = build_match_table(bank_a, bank_b, key_frames=spec.key_frames)
    tangents = (FrameTangents.from_masks(masks_a, table.frame_pairs, angle_step),
                FrameTangents.from_masks(masks_b, table.frame_pairs, angle_step))
    logger.info(f"Scene {index}: {len(frontier)} frontier pairs, {len(table)} matched candidates")
    return _SceneData(index, scene.image_size, f_gt, [p.as_point_pair() for p in frontier],
                      table, tangents, BarcodeProvider(stack_a, stack_b))


def _run_cell(data: _SceneData, method: str, seed: int, spec: ExperimentSpec) -> CellResult:
    cell = CellResult(scene=data.index, method=method, seed=seed)
    cfg = RansacConfig(max_hypotheses=spec.hypotheses, checkpoint_interval=spec.checkpoint_interval, seed=seed)
    try:
        if method == "sinha":
            f, report = sinha_baseline(data.table.frame_pairs, *data.tangents, data.table, cfg,
                                       data.ground_truth, data.image_size)
        else:
            f, report = ransac_fundamental(data.table, cfg, data.ground_truth, data.image_size)
        cell.f, cell.report = f, report
        if data.ground_truth:
            cell.estimate_error = ground_truth_error(f, data.ground_truth)
        if spec.refine:
            xa, xb = data.table.touch_arrays(cfg.min_correlation)
            _, _, inliers = score_points(f.m, xa, xb, cfg.inlier_threshold_px)
            if inliers.sum() >= MIN_LM_POINTS:
                refined = refine(f, (xa[inliers], xb[inliers]), data.provider, image_size=data.image_size)
                cell.refined_error = ground_truth_error(refined.f, data.ground_truth)
    except CalibrationError as e:
        logger.warning(f"Cell scene {data.index} {method} seed {seed} failed: {type(e).__name__}: {e}")
        cell.error = type(e).__name__
    return cell


def run_experiment(spec: ExperimentSpec, threads: int = 1, angle_step: Optional[float] = None) -> ExperimentResult:
    """Every (scene, method, seed) cell; a failing cell is recorded and the rest still run"""
    angle_step = angle_step or settings.angle_step_deg
    result = ExperimentResult(spec=spec)
    for s in range(len(spec.scenes)):
        logger.info(f"Step {s + 1}: Preparing scene {s}...")
        try:
            data = _prepare_scene(s, spec, angle_step)
        except CalibrationError as e:
            logger.warning(f"Scene {s} unusable: {type(e).__name__}: {e}")
            result.cells += [CellResult(s, m, seed, error=type(e).__name__)
                             for m in spec.methods for seed in spec.seeds]
            continue
        result.image_sizes[s] = data.image_size

        jobs = [(m, seed) for m in spec.methods for seed in spec.seeds]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                cells = list(pool.map(lambda job: _run_cell(data, job[0], job[1], spec), jobs))
        else:
            cells = [_run_cell(data, m, seed, spec) for m, seed in jobs]
        result.cells += cells

        if spec.overlays:
            points = np.array([p.x.xy for p in data.ground_truth])
            for c in cells:
                if c.f is not None and c.seed == spec.seeds[0]:
                    name = f"overlay_scene{s}_{c.method}.svg"
                    result.overlays[name] = render_overlay(data.image_size, c.f, data.f_gt, points)
    logger.info(f"Experiment done: {len(result.completed())}/{len(result.cells)} cells completed")
    return result
