"""Alternating refinement of F.

Step one fits F and corrected points to the point pairs by minimizing
reprojection error; step two rotates each epipolar line pair about its
points to the offsets with the best barcode agreement, then rebuilds F
from the new pencils.
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from app.core.errors import CalibrationError, DegeneratePencil, InsufficientPoints
from app.models.schemas import RefineConfig
from app.services.barcode import BarcodeProvider
from app.services.estimator import MIN_LM_POINTS, RankTwoParameterization
from app.services.geometry import (
    Fundamental, HomogLine, HomogPoint, LinePair, PointPair, epipole_from_lines,
    fundamental_from_pencils, homogenize, point_pairs_to_arrays, symmetric_epipolar_distances,
)

logger = logging.getLogger('silcal.refine')

_TIE_TOL = 1e-12


@dataclass(eq=False)
class RefineState:
    """Current estimate with its point pairs and the epipolar lines through them"""
    f: Fundamental
    xa: np.ndarray
    xb: np.ndarray
    lines_a: np.ndarray
    lines_b: np.ndarray
    iter: int = 0
    epipole_shift_px: float = float("inf")

    @property
    def points(self) -> List[PointPair]:
        return [PointPair.from_xy(a, b) for a, b in zip(self.xa, self.xb)]

    @property
    def lines(self) -> List[LinePair]:
        return [LinePair(HomogLine(a), HomogLine(b)) for a, b in zip(self.lines_a, self.lines_b)]

    @classmethod
    def start(cls, f: Fundamental, points) -> "RefineState":
        xa, xb = _point_arrays(points)
        lines_a, lines_b = epipolar_lines(f, xa, xb)
        return cls(f, xa, xb, lines_a, lines_b)


def _point_arrays(points) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[0], np.ndarray):
        return np.asarray(points[0], dtype=float), np.asarray(points[1], dtype=float)
    return point_pairs_to_arrays(list(points))


def epipolar_lines(f: Fundamental, xa: np.ndarray, xb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lines in A through xa (F^T xb) and in B through xb (F xa)"""
    return homogenize(xb) @ f.m, homogenize(xa) @ f.m.T


def project_onto_lines(xy: np.ndarray, lines: np.ndarray) -> np.ndarray:
    """Orthogonal projection of each point onto its line"""
    n = np.hypot(lines[:, 0], lines[:, 1])
    d = np.sum(homogenize(xy) * lines, axis=1) / n
    return xy - (d / n)[:, None] * lines[:, :2]


# ============================================================
# STEP ONE: REPROJECTION
# ============================================================

def _unpack(params: np.ndarray):
    return params[:7], params[7:].reshape(-1, 2)


def reprojection_residuals(params, param: RankTwoParameterization, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Offsets of the corrected points x^ from xa, then the signed distance of
    xb to the epipolar line F x^ (the optimal x^' is its projection there)"""
    theta, xh = _unpack(params)
    m = param.matrix(theta)
    hx = homogenize(xh)
    lines = hx @ m.T
    n = np.hypot(lines[:, 0], lines[:, 1])
    s = np.sum(homogenize(xb) * lines, axis=1)
    return np.concatenate([(xh - xa).ravel(), s / n])


def reprojection_jacobian(params, param: RankTwoParameterization, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    theta, xh = _unpack(params)
    count = len(xh)
    m = param.matrix(theta)
    hx = homogenize(xh)
    hb = homogenize(xb)
    lines = hx @ m.T
    n = np.hypot(lines[:, 0], lines[:, 1])
    s = np.sum(hb * lines, axis=1)

    jac = np.zeros((3 * count, 7 + 2 * count))
    jac[:2 * count, 7:] = np.eye(2 * count)

    # d(s/n)/dF_jk = hx_k (xb_j - [j<2] s l_j / n^2) / n
    weight = hb.copy()
    weight[:, :2] -= (s / n ** 2)[:, None] * lines[:, :2]
    grad_m = weight[:, :, None] * hx[:, None, :] / n[:, None, None]
    jac[2 * count:, :7] = np.einsum("njk,pjk->np", grad_m, param.derivatives(theta))

    back = hb @ m
    pull = lines[:, 0:1] * m[0, :2] + lines[:, 1:2] * m[1, :2]
    d_xh = back[:, :2] / n[:, None] - (s / n ** 3)[:, None] * pull
    rows = 2 * count + np.arange(count)
    jac[rows, 7 + 2 * np.arange(count)] = d_xh[:, 0]
    jac[rows, 8 + 2 * np.arange(count)] = d_xh[:, 1]
    return jac


def step_one_reproject(state: RefineState, max_nfev: int = 200) -> RefineState:
    """Joint LM over F and the corrected points, then lines reset through them"""
    count = len(state.xa)
    if count < MIN_LM_POINTS:
        raise InsufficientPoints(f"reprojection needs {MIN_LM_POINTS} point pairs, got {count}")

    param, theta0 = RankTwoParameterization.normalized_for(state.f, state.xa, state.xb)
    p0 = np.concatenate([theta0, state.xa.ravel()])
    r0 = reprojection_residuals(p0, param, state.xa, state.xb)
    cost0 = 0.5 * float(r0 @ r0)

    f = state.f
    xh = state.xa.copy()
    if cost0 > 1e-24:
        sol = least_squares(reprojection_residuals, p0, jac=reprojection_jacobian, method="lm",
                            args=(param, state.xa, state.xb), max_nfev=max_nfev,
                            gtol=1e-10, ftol=1e-12, xtol=1e-12)
        if sol.status == 0:
            logger.warning(f"Reprojection LM hit {max_nfev} evaluations (cost {cost0:.4g} -> {sol.cost:.4g})")
        if np.isfinite(sol.cost) and sol.cost <= cost0:
            theta, xh = _unpack(sol.x)
            f = Fundamental.from_matrix(param.matrix(theta))
            xh = xh.copy()

    xh_b = project_onto_lines(state.xb, homogenize(xh) @ f.m.T)
    lines_a, lines_b = epipolar_lines(f, xh, xh_b)
    return RefineState(f, xh, xh_b, lines_a, lines_b, state.iter, state.epipole_shift_px)


# ============================================================
# STEP TWO: LINE SEARCH
# ============================================================

def offset_grid(cfg: RefineConfig) -> np.ndarray:
    return np.linspace(-cfg.theta_deg, cfg.theta_deg, cfg.angle_samples)


def line_cost(offsets: np.ndarray, theta_deg: float, correlation: np.ndarray) -> np.ndarray:
    """C = |da|/theta + |db|/theta - corr over the offset product grid"""
    d = np.abs(offsets) / theta_deg
    return d[:, None] + d[None, :] - correlation


def grid_argmin(cost: np.ndarray, offsets: np.ndarray) -> Tuple[int, int]:
    """Minimum of the cost grid; ties go to the smallest total rotation, then row order"""
    ties = cost <= cost.min() + _TIE_TOL
    spread = np.abs(offsets)[:, None] + np.abs(offsets)[None, :]
    ranked = np.where(ties, spread, np.inf)
    flat = int(np.argmin(ranked))
    return np.unravel_index(flat, cost.shape)


def step_two_line_search(
    state: RefineState,
    provider: BarcodeProvider,
    cfg: RefineConfig,
    image_size: Tuple[int, int] = (640, 480),
) -> Tuple[RefineState, float]:
    """Returns the new state and the mean selected cost"""
    offsets = offset_grid(cfg)
    new_a = np.empty_like(state.lines_a)
    new_b = np.empty_like(state.lines_b)
    costs = []
    for i in range(len(state.xa)):
        lines_a, lines_b, aff = provider.rotation_affinity(
            state.lines_a[i], state.xa[i], state.lines_b[i], state.xb[i], offsets)
        cost = line_cost(offsets, cfg.theta_deg, aff.values)
        ia, ib = grid_argmin(cost, offsets)
        new_a[i] = lines_a[ia]
        new_b[i] = lines_b[ib]
        costs.append(cost[ia, ib])

    fit_a = epipole_from_lines(new_a)
    fit_b = epipole_from_lines(new_b)
    worst = max(fit_a.residuals.max(), fit_b.residuals.max())
    if worst > cfg.concurrency_tol_px:
        raise DegeneratePencil(f"optimized lines miss their epipole by up to {worst:.3f} px")

    pairs = [LinePair(HomogLine(a), HomogLine(b)) for a, b in zip(new_a, new_b)]
    f = fundamental_from_pencils(pairs, fit_a.point, fit_b.point, image_size)
    xa = project_onto_lines(state.xa, new_a)
    xb = project_onto_lines(state.xb, new_b)
    return RefineState(f, xa, xb, new_a, new_b, state.iter, state.epipole_shift_px), float(np.mean(costs))


def _point_shift(p: HomogPoint, q: HomogPoint) -> float:
    if p.is_finite and q.is_finite:
        return float(np.linalg.norm(p.xy - q.xy))
    a = p.coords / np.linalg.norm(p.coords)
    b = q.coords / np.linalg.norm(q.coords)
    return float(np.linalg.norm(np.cross(a, b)))


def epipole_shift(before: Fundamental, after: Fundamental) -> float:
    """Largest epipole movement: pixels when both are finite, else the sine of the angle"""
    return max(_point_shift(before.e, after.e), _point_shift(before.e_prime, after.e_prime))


# ============================================================
# DRIVER
# ============================================================

class RefineResult(NamedTuple):
    f: Fundamental
    iterations: int
    trace: pd.DataFrame
    objective: float


def refine(
    f0: Fundamental,
    points,
    provider: BarcodeProvider,
    cfg: Optional[RefineConfig] = None,
    lines: Optional[Sequence[LinePair]] = None,
    image_size: Tuple[int, int] = (640, 480),
) -> RefineResult:
    """Alternate both steps until the epipoles settle or max_iters is reached.

    The returned F is the best seen by mean symmetric epipolar distance on
    the input points; a failing step ends the loop with that estimate.
    """
    cfg = cfg or RefineConfig()
    xa0, xb0 = _point_arrays(points)
    if len(xa0) < MIN_LM_POINTS:
        raise InsufficientPoints(f"refinement needs {MIN_LM_POINTS} point pairs, got {len(xa0)}")
    state = RefineState.start(f0, (xa0, xb0))
    if lines is not None:
        state.lines_a = np.array([p.l.coords for p in lines])
        state.lines_b = np.array([p.l_prime.coords for p in lines])

    def objective(f: Fundamental) -> float:
        return float(np.mean(symmetric_epipolar_distances(f.m, xa0, xb0, strict=False)))

    best_f, best_obj = f0, objective(f0)
    trace = []
    logger.info(f"Refinement start: objective {best_obj:.4f} px over {len(xa0)} points")
    for it in range(1, cfg.max_iters + 1):
        try:
            stepped = step_one_reproject(state)
        except CalibrationError as e:
            logger.warning(f"Refinement stopped in iteration {it}: {e}")
            break
        obj = objective(stepped.f)
        if obj < best_obj:
            best_f, best_obj = stepped.f, obj
        try:
            stepped, mean_cost = step_two_line_search(stepped, provider, cfg, image_size)
        except CalibrationError as e:
            logger.warning(f"Refinement stopped in iteration {it} after the reprojection step: {e}")
            break
        shift = epipole_shift(state.f, stepped.f)
        stepped.iter, stepped.epipole_shift_px = it, shift
        obj = objective(stepped.f)
        trace.append({"iter": it, "epipole_shift_px": shift, "mean_Cl": mean_cost, "objective": obj})
        logger.debug(f"Refinement iteration {it}: shift {shift:.4f}, objective {obj:.4f}")
        if obj < best_obj:
            best_f, best_obj = stepped.f, obj
        state = stepped
        if shift < cfg.epipole_tol_px:
            break

    logger.info(f"Refinement done after {len(trace)} iterations: objective {best_obj:.4f} px")
    df = pd.DataFrame(trace, columns=["iter", "epipole_shift_px", "mean_Cl", "objective"])
    return RefineResult(best_f, len(trace), df, best_obj)
