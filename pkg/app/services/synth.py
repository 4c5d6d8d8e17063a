"""Synthetic scenes: cameras on a circle, spheres on Lissajous paths, exact
silhouettes and ground-truth frontier points"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy import ndimage

from app.core.errors import InvalidSpec, NoFrontierPoints
from app.models.schemas import NoiseSpec, SceneSpec
from app.services.geometry import (
    Fundamental, HomogPoint, PointPair, fundamental_from_cameras, homogenize, symmetric_epipolar_distances,
)
from app.services.silhouette import (
    ConvexHull, Mask, candidate_point_array, candidate_points, convex_hull,
)

logger = logging.getLogger('silcal.synth')

MIN_FRUSTUM_FRACTION = 0.95
_WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; image x to the right, y down, z along the view direction"""
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    @classmethod
    def looking_at(cls, position, target, focal_px: float, image_size: Tuple[int, int]) -> "Camera":
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, _WORLD_UP)
        if np.linalg.norm(right) < 1e-12:
            raise InvalidSpec("camera looks straight up or down")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.vstack([right, down, forward])
        w, h = image_size
        K = np.array([[focal_px, 0.0, (w - 1) / 2.0], [0.0, focal_px, (h - 1) / 2.0], [0.0, 0.0, 1.0]])
        return cls(K=K, R=R, t=-R @ position)

    @property
    def P(self) -> np.ndarray:
        return self.K @ np.column_stack([self.R, self.t])

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def project(self, X) -> np.ndarray:
        """(N, 3) world points -> (N, 2) pixels"""
        x = homogenize_world(X) @ self.P.T
        return x[:, :2] / x[:, 2:3]

    def depth(self, X) -> np.ndarray:
        return (np.atleast_2d(X) @ self.R.T + self.t)[:, 2]

    def ray_directions(self, image_size: Tuple[int, int]) -> np.ndarray:
        """(H*W, 3) world directions through pixel centres, row-major"""
        return self._rays(tuple(image_size))

    @cached_property
    def _ray_cache(self) -> dict:
        return {}

    def _rays(self, image_size):
        if image_size not in self._ray_cache:
            w, h = image_size
            ys, xs = np.mgrid[0:h, 0:w]
            pix = np.column_stack([xs.ravel(), ys.ravel(), np.ones(w * h)])
            self._ray_cache[image_size] = pix @ np.linalg.inv(self.K).T @ self.R
        return self._ray_cache[image_size]


def homogenize_world(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([X, np.ones(len(X))])


@dataclass(frozen=True, eq=False)
class Scene:
    """Cameras and per-frame sphere positions generated from a SceneSpec"""
    spec: SceneSpec
    cameras: List[Camera]
    centers: np.ndarray
    radii: np.ndarray

    @property
    def frames(self) -> int:
        return self.centers.shape[0]

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.spec.image_width, self.spec.image_height

    def fundamental(self, a: int = 0, b: int = 1) -> Fundamental:
        """Ground truth with x_b^T F x_a = 0"""
        return fundamental_from_cameras(self.cameras[a].P, self.cameras[b].P)

    def render(self, camera: int) -> List[Mask]:
        cam = self.cameras[camera]
        return [render_silhouette(cam, self.centers[t], self.radii, self.image_size, frame_index=t)
                for t in range(self.frames)]

    def render_all(self) -> List[List[Mask]]:
        """Masks per camera with the scene noise applied"""
        masks = [self.render(i) for i in range(len(self.cameras))]
        return [apply_noise(m, self.spec.noise, camera=i) for i, m in enumerate(masks)]


def _parse_spec(spec: Union[SceneSpec, dict]) -> SceneSpec:
    if isinstance(spec, SceneSpec):
        return spec
    try:
        return SceneSpec.model_validate(spec)
    except ValidationError as e:
        raise InvalidSpec(f"invalid scene spec: {e}") from e


def make_scene(spec: Union[SceneSpec, dict]) -> Scene:
    """Cameras on a circle around the origin and spheres on Lissajous paths"""
    spec = _parse_spec(spec)
    if not spec.spheres:
        raise InvalidSpec("scene needs at least one sphere trajectory")
    size = (spec.image_width, spec.image_height)
    cameras = []
    for az in spec.azimuths_deg:
        a = np.deg2rad(az)
        position = [spec.camera_radius * np.cos(a), spec.camera_radius * np.sin(a), spec.camera_height]
        cameras.append(Camera.looking_at(position, [0.0, 0.0, 0.0], spec.focal_px, size))

    tau = np.arange(spec.frames) / spec.frames
    centers = np.zeros((spec.frames, len(spec.spheres), 3))
    for s, traj in enumerate(spec.spheres):
        phase = 2 * np.pi * np.outer(tau, traj.frequency) + np.asarray(traj.phase)
        centers[:, s] = np.asarray(traj.center) + np.asarray(traj.amplitude) * np.sin(phase)
    radii = np.array([traj.radius for traj in spec.spheres])

    scene = Scene(spec=spec, cameras=cameras, centers=centers, radii=radii)
    fraction = frustum_fraction(scene)
    if fraction < MIN_FRUSTUM_FRACTION:
        raise InvalidSpec(f"spheres are inside every view for only {fraction:.0%} of frames")
    logger.info(f"Scene: {len(cameras)} cameras, {len(radii)} spheres, {spec.frames} frames")
    return scene


def frustum_fraction(scene: Scene) -> float:
    """Fraction of frames where every sphere lies in front of and projects inside every camera"""
    w, h = scene.image_size
    ok = np.ones(scene.frames, dtype=bool)
    for cam in scene.cameras:
        pts = scene.centers.reshape(-1, 3)
        depth = cam.depth(pts).reshape(scene.frames, -1)
        uv = cam.project(pts).reshape(scene.frames, -1, 2)
        inside = (uv[..., 0] >= 0) & (uv[..., 0] <= w - 1) & (uv[..., 1] >= 0) & (uv[..., 1] <= h - 1)
        ok &= np.all((depth > scene.radii[None, :]) & inside, axis=1)
    return float(ok.mean())


def render_silhouette(cam: Camera, centers, radii, image_size: Tuple[int, int], frame_index: int = 0) -> Mask:
    """Foreground iff the ray through the pixel centre meets a sphere in front of the camera"""
    w, h = image_size
    rays = cam.ray_directions(image_size)
    a = np.einsum("ij,ij->i", rays, rays)
    origin = cam.center
    hit = np.zeros(w * h, dtype=bool)
    for c, r in zip(np.atleast_2d(centers), np.atleast_1d(radii)):
        oc = origin - c
        b = 2.0 * rays @ oc
        cc = oc @ oc - r * r
        disc = b * b - 4.0 * a * cc
        hit |= (disc >= 0) & (-b + np.sqrt(np.maximum(disc, 0.0)) > 0)
    return Mask(width=w, height=h, bits=hit.reshape(h, w), frame_index=frame_index)


def apply_noise(masks: Sequence[Mask], noise: NoiseSpec, camera: int = 0) -> List[Mask]:
    """Boundary dilation/erosion and frame dropout, seeded per camera"""
    if noise.boundary_px == 0 and noise.dropout == 0:
        return list(masks)
    rng = np.random.default_rng([noise.seed, camera])
    dropped = rng.random(len(masks)) < noise.dropout
    out = []
    for mask, drop in zip(masks, dropped):
        if drop:
            out.append(Mask.empty(mask.width, mask.height, mask.frame_index))
            continue
        bits = mask.bits
        if noise.boundary_px > 0:
            bits = ndimage.binary_dilation(bits, iterations=noise.boundary_px)
        elif noise.boundary_px < 0:
            bits = ndimage.binary_erosion(bits, iterations=-noise.boundary_px, border_value=0)
        out.append(Mask(mask.width, mask.height, bits, mask.frame_index))
    return out


# ============================================================
# FRONTIER POINTS
# ============================================================

@dataclass(frozen=True, eq=False)
class FrontierPair:
    a: HomogPoint
    b: HomogPoint
    frame: int

    def as_point_pair(self) -> PointPair:
        return PointPair(self.a, self.b)


def analytic_frontier_points(scene: Scene, frame: int, cam_a: int = 0, cam_b: int = 1) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Projections of the points where planes through the baseline touch each
    sphere, kept when they lie on the silhouette outline in both views"""
    ca, cb = scene.cameras[cam_a], scene.cameras[cam_b]
    origin, other = ca.center, cb.center
    base = other - origin
    base /= np.linalg.norm(base)
    centers, radii = scene.centers[frame], scene.radii
    w, h = scene.image_size
    out = []
    for s, (c, r) in enumerate(zip(centers, radii)):
        offset = c - origin
        perp = offset - (offset @ base) * base
        dist = np.linalg.norm(perp)
        if dist <= r:
            continue
        u = perp / dist
        v = np.cross(base, u)
        phi = np.arccos(r / dist)
        for sign in (1.0, -1.0):
            normal = np.cos(phi) * u + sign * np.sin(phi) * v
            point = c - r * normal
            if not all(_on_outline(cam.center, point, centers, radii, s) for cam in (ca, cb)):
                continue
            if ca.depth(point)[0] <= 0 or cb.depth(point)[0] <= 0:
                continue
            xa, xb = ca.project(point)[0], cb.project(point)[0]
            if all(0 <= p[0] <= w - 1 and 0 <= p[1] <= h - 1 for p in (xa, xb)):
                out.append((xa, xb))
    return out


def _on_outline(origin, point, centers, radii, own: int) -> bool:
    """No other sphere meets the viewing ray through the point"""
    d = point - origin
    d /= np.linalg.norm(d)
    for j, (c, r) in enumerate(zip(centers, radii)):
        if j == own:
            continue
        oc = c - origin
        along = oc @ d
        if along > 0 and np.linalg.norm(oc - along * d) <= r * (1 + 1e-3):
            return False
    return True


def tangent_within(hull: ConvexHull, point, line: np.ndarray, angle_tol_deg: float, slack_px: float = 0.75) -> bool:
    """A supporting line of the hull through point lies within angle_tol of line"""
    u = line / np.hypot(line[0], line[1])
    v = hull.vertices
    side = v @ u[:2] + u[2]
    reach = slack_px + np.linalg.norm(v - np.asarray(point), axis=1) * np.sin(np.deg2rad(angle_tol_deg))
    return bool(np.all(side <= reach) or np.all(-side <= reach))


def _thin(pairs: List[FrontierPair], min_spacing_px: float) -> List[FrontierPair]:
    kept: List[FrontierPair] = []
    ka, kb = [], []
    for p in pairs:
        xa, xb = p.a.xy, p.b.xy
        if ka and (np.min(np.linalg.norm(np.array(ka) - xa, axis=1)) < min_spacing_px
                   or np.min(np.linalg.norm(np.array(kb) - xb, axis=1)) < min_spacing_px):
            continue
        kept.append(p)
        ka.append(xa)
        kb.append(xb)
    return kept


def _frame_geometry(mask: Mask):
    if mask.is_empty:
        return None
    hull = convex_hull(mask)
    if hull.is_degenerate:
        return None
    return hull, candidate_point_array(candidate_points(mask, hull))


def ground_truth_frontier_points(
    masks_a: Sequence[Mask],
    masks_b: Sequence[Mask],
    f_gt: Fundamental,
    scene: Optional[Scene] = None,
    cameras: Tuple[int, int] = (0, 1),
    angle_tol_deg: float = 1.0,
    max_distance: float = 0.01,
    min_spacing_px: float = 15.0,
) -> List[FrontierPair]:
    """Frontier correspondences: candidate points whose hull tangent is within
    angle_tol of the true epipolar line, paired when their symmetric
    epipolar distance is below max_distance, then thinned to min_spacing_px.

    With a scene the points are the exact sphere frontier points; without
    one they are pixel candidate points.
    """
    found: List[FrontierPair] = []
    for t in range(min(len(masks_a), len(masks_b))):
        geo_a, geo_b = _frame_geometry(masks_a[t]), _frame_geometry(masks_b[t])
        if geo_a is None or geo_b is None:
            continue
        (hull_a, cand_a), (hull_b, cand_b) = geo_a, geo_b
        if len(cand_a) == 0 or len(cand_b) == 0:
            continue

        if scene is not None:
            proposals = analytic_frontier_points(scene, t, *cameras)
            require_near = True
        else:
            proposals = _pixel_proposals(cand_a, cand_b, f_gt, max_distance)
            require_near = False

        for xa, xb in proposals:
            if require_near and (np.min(np.linalg.norm(cand_a - xa, axis=1)) > 1.0
                                 or np.min(np.linalg.norm(cand_b - xb, axis=1)) > 1.0):
                continue
            line_a = homogenize(xb)[0] @ f_gt.m
            line_b = f_gt.m @ homogenize(xa)[0]
            if not (tangent_within(hull_a, xa, line_a, angle_tol_deg)
                    and tangent_within(hull_b, xb, line_b, angle_tol_deg)):
                continue
            if symmetric_epipolar_distances(f_gt.m, xa[None], xb[None], strict=False)[0] >= max_distance:
                continue
            found.append(FrontierPair(HomogPoint.from_xy(*xa), HomogPoint.from_xy(*xb), t))

    pairs = _thin(found, min_spacing_px)
    if not pairs:
        raise NoFrontierPoints("no frame yields a frontier correspondence")
    logger.info(f"Ground truth: {len(pairs)} frontier pairs ({len(found)} before thinning)")
    return pairs


def _pixel_proposals(cand_a: np.ndarray, cand_b: np.ndarray, f_gt: Fundamental, max_distance: float):
    """All candidate-point pairs whose symmetric epipolar distance is below max_distance"""
    ia, ib = np.meshgrid(np.arange(len(cand_a)), np.arange(len(cand_b)), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    d = symmetric_epipolar_distances(f_gt.m, cand_a[ia], cand_b[ib], strict=False)
    keep = d < max_distance
    return [(cand_a[i], cand_b[j]) for i, j in zip(ia[keep], ib[keep])]
