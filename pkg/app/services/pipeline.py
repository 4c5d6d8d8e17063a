"""Calibration pipeline - offline barcodes, matching, RANSAC, refinement"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import CalibrationError, FormatError, InsufficientPoints
from app.models.schemas import CliConfig, DatasetManifest, RansacConfig, RefineConfig
from app.services.barcode import BarcodeBank, BarcodeProvider, BoundaryStack
from app.services.dataset import (
    content_hash, ground_truth_fundamental, ground_truth_points, load_manifest, load_pair,
)
from app.services.estimator import (
    FrameTangents, MIN_LM_POINTS, RansacReport, ransac_fundamental, score_points, sinha_baseline,
)
from app.services.geometry import Fundamental, PointPair, point_pairs_to_arrays, symmetric_epipolar_distances
from app.services.matcher import MatchTable, build_match_table
from app.services.refine import RefineResult, refine
from app.services.silhouette import Mask
from app.utils.metrics import EstimationMetrics

logger = logging.getLogger('silcal.pipeline')


@dataclass(eq=False)
class CalibrationResult:
    f: Fundamental
    ransac_f: Fundamental
    report: RansacReport
    table: MatchTable
    refinement: Optional[RefineResult] = None
    gt_errors: Optional[np.ndarray] = None

    @property
    def gt_mean(self) -> Optional[float]:
        return None if self.gt_errors is None else float(np.mean(self.gt_errors))

    @property
    def gt_median(self) -> Optional[float]:
        return None if self.gt_errors is None else float(np.median(self.gt_errors))


def ransac_config(cfg: CliConfig) -> RansacConfig:
    return RansacConfig(
        max_hypotheses=cfg.hypotheses,
        checkpoint_interval=cfg.checkpoint_interval,
        inlier_threshold_px=cfg.inlier_threshold,
        seed=cfg.seed,
        min_correlation=cfg.min_correlation,
        threads=cfg.threads,
    )


def gt_distances(f: Fundamental, pairs: Sequence[PointPair]) -> np.ndarray:
    xa, xb = point_pairs_to_arrays(list(pairs))
    return symmetric_epipolar_distances(f.m, xa, xb, strict=False)


class CalibrationPipeline:
    """Runs one camera pair of a dataset from masks to F"""

    def __init__(self, config: CliConfig, cache_dir: Optional[Path] = None,
                 metrics: Optional[EstimationMetrics] = None):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir is not None else settings.cache_dir
        self.metrics = metrics or EstimationMetrics()

    # === OFFLINE ===

    def cache_path(self, digest: str) -> Path:
        return self.cache_dir / f"bank_{digest[:16]}_{self.config.angle_step:g}.scbc"

    def bank_for(self, masks: Sequence[Mask], stack: BoundaryStack, digest: Optional[str] = None) -> BarcodeBank:
        """Cached bank when one exists for this frame content and angle step"""
        if digest is None:
            return BarcodeBank.build(masks, self.config.angle_step, stack=stack)
        path = self.cache_path(digest)
        if path.exists():
            try:
                bank = BarcodeBank.load(path)
                if bank.frame_count == len(masks):
                    logger.info(f"Loading cached barcode bank {path}")
                    return bank
            except (FormatError, CalibrationError) as e:
                logger.warning(f"Ignoring unreadable cache {path}: {e}")
        bank = BarcodeBank.build(masks, self.config.angle_step, stack=stack)
        try:
            bank.save(path)
        except CalibrationError as e:
            logger.warning(f"Barcode cache not written: {e}")
        return bank

    # === ONLINE ===

    def run_masks(
        self,
        masks_a: Sequence[Mask],
        masks_b: Sequence[Mask],
        ground_truth: Optional[Sequence[PointPair]] = None,
        digests: Tuple[Optional[str], Optional[str]] = (None, None),
    ) -> CalibrationResult:
        cfg = self.config
        image_size = masks_a[0].size
        logger.info("=" * 80)
        logger.info(f"Calibrating {len(masks_a)} frame pairs with method '{cfg.method}'")
        logger.info("=" * 80)

        logger.info("Step 1: Offline barcode pass...")
        t0 = time.perf_counter()
        stack_a, stack_b = BoundaryStack(masks_a), BoundaryStack(masks_b)
        bank_a = self.bank_for(masks_a, stack_a, digests[0])
        bank_b = self.bank_for(masks_b, stack_b, digests[1])
        logger.info(f"✓ Barcode banks ready ({time.perf_counter() - t0:.2f}s)")

        logger.info("Step 2: Matching candidate lines...")
        table = build_match_table(bank_a, bank_b, key_frames=cfg.key_frames, top_m=cfg.top_m)
        logger.info(f"✓ {len(table)} matched candidates")

        logger.info(f"Step 3: RANSAC ({cfg.method})...")
        rcfg = ransac_config(cfg)
        if cfg.method == "sinha":
            frames = table.frame_pairs
            tangents_a = FrameTangents.from_masks(masks_a, frames, cfg.angle_step)
            tangents_b = FrameTangents.from_masks(masks_b, frames, cfg.angle_step)
            f, report = sinha_baseline(frames, tangents_a, tangents_b, table, rcfg,
                                       ground_truth, image_size, self.metrics)
        else:
            f, report = ransac_fundamental(table, rcfg, ground_truth, image_size, self.metrics)
        logger.info(f"✓ RANSAC done: {report.lm_count} LM runs")

        result = CalibrationResult(f=f, ransac_f=f, report=report, table=table)
        if not cfg.no_refine:
            logger.info("Step 4: Alternating refinement...")
            result.refinement = self.refine_estimate(f, table, BarcodeProvider(stack_a, stack_b), image_size)
            if result.refinement is not None:
                result.f = result.refinement.f
                logger.info(f"✓ Refined in {result.refinement.iterations} iterations")

        if ground_truth:
            result.gt_errors = gt_distances(result.f, ground_truth)
            logger.info(f"Ground-truth error: mean {result.gt_mean:.4f} px, median {result.gt_median:.4f} px")
        logger.info(f"Run stats: {self.metrics.get_stats()['hypotheses']}")
        return result

    def refine_estimate(self, f: Fundamental, table: MatchTable, provider: BarcodeProvider,
                        image_size: Tuple[int, int]) -> Optional[RefineResult]:
        """Refinement over the inlier touch points of the RANSAC estimate"""
        xa, xb = table.touch_arrays(self.config.min_correlation)
        _, _, inliers = score_points(f.m, xa, xb, self.config.inlier_threshold)
        if inliers.sum() < MIN_LM_POINTS:
            logger.warning(f"Refinement skipped: {int(inliers.sum())} inliers, {MIN_LM_POINTS} needed")
            return None
        try:
            return refine(f, (xa[inliers], xb[inliers]), provider, RefineConfig(), image_size=image_size)
        except InsufficientPoints as e:
            logger.warning(f"Refinement skipped: {e}")
            return None

    def run(self, manifest_path, with_ground_truth: bool = True) -> Tuple[CalibrationResult, DatasetManifest]:
        manifest, root = load_manifest(manifest_path)
        pair = tuple(self.config.pair)
        masks_a, masks_b = load_pair(manifest, root, pair)
        digests = (content_hash(manifest, root, pair[0]), content_hash(manifest, root, pair[1]))

        ground_truth: Optional[List[PointPair]] = None
        if with_ground_truth and (manifest.ground_truth is not None or ground_truth_fundamental(manifest, pair)):
            try:
                ground_truth = ground_truth_points(manifest, root, pair, masks=(masks_a, masks_b))
            except CalibrationError as e:
                logger.warning(f"Ground truth unavailable: {e}")
        return self.run_masks(masks_a, masks_b, ground_truth, digests), manifest
