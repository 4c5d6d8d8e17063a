"""Metrics collection for estimation runs"""
import time
from datetime import datetime
from collections import defaultdict, deque
from typing import Deque, Dict, Optional

# Samples kept per history; counters still cover the whole run
HISTORY = 1000


class EstimationMetrics:
    """
    Run metrics collector for hypothesis-and-verify estimation.

    Tracks the numbers worth watching while a calibration runs:
    - Hypotheses: generated, valid, rejected by reason
    - Verification: inlier counts of valid hypotheses
    - Optimization: LM calls, latency and cost reduction
    - Throughput: hypotheses per second

    Wall-clock values live here only; they never enter reports that
    have to be reproducible.
    """

    def __init__(self):
        # === HYPOTHESIS COUNTS ===
        self.total_hypotheses = 0
        self.valid_hypotheses = 0
        self.rejected_hypotheses = 0
        self.rejection_types: Dict[str, int] = defaultdict(int)

        # === VERIFICATION ===
        self.inlier_counts: Deque[int] = deque(maxlen=HISTORY)
        self.best_inlier_count = 0

        # === OPTIMIZATION ===
        self.lm_calls = 0
        self.lm_non_converged = 0
        self.lm_times: Deque[float] = deque(maxlen=HISTORY)
        self.lm_cost_ratios: Deque[float] = deque(maxlen=HISTORY)

        # === THROUGHPUT ===
        self.start_time = datetime.now()
        self._clock = time.perf_counter()
        self.hypothesis_time = 0.0

    def record_hypothesis(
        self,
        valid: bool,
        elapsed: float = 0.0,
        inlier_count: Optional[int] = None,
        rejection_type: Optional[str] = None,
    ):
        """
        Record one generated hypothesis.

        Args:
            valid: Whether a fundamental matrix could be built
            elapsed: Generation plus scoring time in seconds
            inlier_count: Inliers of the hypothesis if valid
            rejection_type: Error class name if rejected (e.g. 'DegeneratePencil')
        """
        self.total_hypotheses += 1
        self.hypothesis_time += elapsed
        if valid:
            self.valid_hypotheses += 1
            if inlier_count is not None:
                self.inlier_counts.append(inlier_count)
                self.best_inlier_count = max(self.best_inlier_count, inlier_count)
        else:
            self.rejected_hypotheses += 1
            if rejection_type:
                self.rejection_types[rejection_type] += 1

    def record_lm(self, elapsed: float, initial_cost: float, final_cost: float, converged: bool = True):
        """Record one Levenberg-Marquardt refinement"""
        self.lm_calls += 1
        self.lm_times.append(elapsed)
        if initial_cost > 0:
            self.lm_cost_ratios.append(final_cost / initial_cost)
        if not converged:
            self.lm_non_converged += 1

    def get_stats(self) -> dict:
        """
        Get run statistics organized by category.

        Returns:
            dict: Nested dictionary with sections
                - system: start time and elapsed wall time
                - hypotheses: counts and rejection reasons
                - verification: inlier statistics
                - optimization: LM calls, latency, cost reduction
                - throughput: hypotheses per second
        """
        elapsed = time.perf_counter() - self._clock

        stats = {
            "system": {
                "start_time": self.start_time.isoformat(),
                "elapsed_seconds": round(elapsed, 3),
            },
            "hypotheses": {
                "total": self.total_hypotheses,
                "valid": self.valid_hypotheses,
                "rejected": self.rejected_hypotheses,
                "valid_rate_percent": round(self.valid_hypotheses / self.total_hypotheses * 100, 2) if self.total_hypotheses > 0 else 0,
                "rejection_types": dict(self.rejection_types),
            },
            "verification": {
                "best_inlier_count": self.best_inlier_count,
            },
            "optimization": {
                "lm_calls": self.lm_calls,
                "lm_non_converged": self.lm_non_converged,
            },
            "throughput": {
                "hypotheses_per_second": round(self.total_hypotheses / self.hypothesis_time, 1) if self.hypothesis_time > 0 else 0,
            },
        }

        if self.inlier_counts:
            counts = sorted(self.inlier_counts)
            n = len(counts)
            stats["verification"].update({
                "mean_inlier_count": round(sum(counts) / n, 2),
                "p50_inlier_count": counts[n // 2],
                "p95_inlier_count": counts[int(n * 0.95)],
            })

        if self.lm_times:
            times = sorted(self.lm_times)
            n = len(times)
            stats["optimization"].update({
                "average_seconds": round(sum(times) / n, 4),
                "p50_seconds": round(times[n // 2], 4),
                "p95_seconds": round(times[int(n * 0.95)], 4),
                "max_seconds": round(times[-1], 4),
            })

        if self.lm_cost_ratios:
            ratios = sorted(self.lm_cost_ratios)
            stats["optimization"]["median_cost_ratio"] = round(ratios[len(ratios) // 2], 6)

        return stats

    def reset(self):
        """Reset all metrics (useful for testing)"""
        self.__init__()
