"""Homogeneous 2-D primitives and fundamental matrices from line correspondences"""
import json
import logging
import re
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import (
    ConfigError, DegenerateCameras, DegenerateLine, DegeneratePencil,
    IllConditioned, NotConcurrent,
)

logger = logging.getLogger('silcal.geometry')

# Tolerances of the Fundamental invariants
RANK_TOL = 1e-9
_CANONICAL_ZERO = 1e-12
_NORM_SLACK = 16 * np.finfo(float).eps
# Epipoles farther than this from the origin are treated as points at infinity
_FAR_PX = 1e7
# Largest line transfer angle (radians) accepted by the post-check
TRANSFER_TOL = 1e-3


def skew(v) -> np.ndarray:
    """Cross-product matrix [v]x"""
    v = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def homogenize(xy) -> np.ndarray:
    """(N, 2) pixel coordinates or (N, 3) homogeneous points -> (N, 3) with w = 1"""
    a = np.atleast_2d(np.asarray(xy, dtype=float))
    if a.shape[1] == 2:
        return np.column_stack([a, np.ones(len(a))])
    if np.any(a[:, 2] == 0):
        raise ValueError("points at infinity have no pixel position")
    return a / a[:, 2:3]


def _frozen3(coords) -> np.ndarray:
    c = np.array(coords, dtype=float).reshape(3)
    c.setflags(write=False)
    return c


def _projectively_equal(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    ua = a / np.linalg.norm(a)
    ub = b / np.linalg.norm(b)
    return min(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub)) <= tol


@dataclass(frozen=True, eq=False)
class HomogPoint:
    """Point (x, y, w); pixel units when w = 1"""
    coords: np.ndarray

    def __post_init__(self):
        c = _frozen3(self.coords)
        if not np.any(c):
            raise ValueError("homogeneous point cannot be all zero")
        object.__setattr__(self, "coords", c)

    @classmethod
    def from_xy(cls, x: float, y: float) -> "HomogPoint":
        return cls(np.array([x, y, 1.0]))

    @property
    def is_finite(self) -> bool:
        w = self.coords[2]
        return w != 0 and bool(np.hypot(self.coords[0] / w, self.coords[1] / w) < _FAR_PX)

    @property
    def xy(self) -> np.ndarray:
        if self.coords[2] == 0:
            raise ValueError("point at infinity has no pixel position")
        return self.coords[:2] / self.coords[2]

    def same_as(self, other: "HomogPoint", tol: float = 1e-9) -> bool:
        return _projectively_equal(self.coords, other.coords, tol)


@dataclass(frozen=True, eq=False)
class HomogLine:
    """Line {p : a*x + b*y + c*w = 0}"""
    coords: np.ndarray

    def __post_init__(self):
        c = _frozen3(self.coords)
        if not np.any(c):
            raise ValueError("homogeneous line cannot be all zero")
        object.__setattr__(self, "coords", c)

    @classmethod
    def through(cls, p: HomogPoint, q: HomogPoint) -> "HomogLine":
        return cls(np.cross(p.coords, q.coords))

    @classmethod
    def from_normal(cls, angle_deg: float, point_xy) -> "HomogLine":
        """Line with unit normal at angle_deg passing through point_xy"""
        t = np.deg2rad(angle_deg)
        n = np.array([np.cos(t), np.sin(t)])
        return cls(np.array([n[0], n[1], -float(n @ np.asarray(point_xy, dtype=float))]))

    @property
    def is_finite(self) -> bool:
        return bool(np.hypot(self.coords[0], self.coords[1]) > 0)

    def unit(self) -> np.ndarray:
        """Coordinates scaled so that (a, b) is a unit normal"""
        n = np.hypot(self.coords[0], self.coords[1])
        if n == 0:
            raise DegenerateLine("line at infinity has no normal")
        return self.coords / n

    def signed_distance(self, xy) -> np.ndarray:
        return homogenize(xy) @ self.unit()

    def normal_angle_deg(self) -> float:
        u = self.unit()
        return float(np.rad2deg(np.arctan2(u[1], u[0])) % 360.0)

    def same_as(self, other: "HomogLine", tol: float = 1e-9) -> bool:
        return _projectively_equal(self.coords, other.coords, tol)


@dataclass(frozen=True, eq=False)
class PointPair:
    """Hypothesized correspondence x (image A) <-> x' (image B)"""
    x: HomogPoint
    x_prime: HomogPoint

    def __post_init__(self):
        if self.x.coords[2] == 0 or self.x_prime.coords[2] == 0:
            raise ValueError("point pairs must be finite")

    @classmethod
    def from_xy(cls, xa, xb) -> "PointPair":
        return cls(HomogPoint.from_xy(*xa), HomogPoint.from_xy(*xb))


@dataclass(frozen=True, eq=False)
class LinePair:
    """Corresponding epipolar lines l (image A) <-> l' (image B)"""
    l: HomogLine
    l_prime: HomogLine


def point_pairs_to_arrays(pairs: Sequence[PointPair]) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates of both sides as two (N, 2) arrays"""
    if len(pairs) == 0:
        return np.zeros((0, 2)), np.zeros((0, 2))
    xa = np.array([p.x.xy for p in pairs])
    xb = np.array([p.x_prime.xy for p in pairs])
    return xa, xb


def normalizing_transform(xy) -> np.ndarray:
    """Similarity moving the centroid of xy to the origin with mean distance sqrt(2)"""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return np.eye(3)
    c = xy.mean(axis=0)
    spread = float(np.mean(np.hypot(xy[:, 0] - c[0], xy[:, 1] - c[1])))
    s = np.sqrt(2.0) / spread if spread > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


# ============================================================
# FUNDAMENTAL MATRIX
# ============================================================

def enforce_rank2(m: np.ndarray) -> np.ndarray:
    """Truncate the smallest singular value"""
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float))
    s[2] = 0.0
    return (u * s) @ vt


def canonicalize(m: np.ndarray) -> np.ndarray:
    """Unit Frobenius norm, first nonzero entry positive; idempotent"""
    m = np.array(m, dtype=float).reshape(3, 3)
    norm = np.linalg.norm(m)
    if norm == 0:
        raise ValueError("zero matrix has no canonical form")
    if abs(norm - 1.0) > _NORM_SLACK:
        m = m / norm
    flat = m.ravel()
    nonzero = np.flatnonzero(np.abs(flat) > _CANONICAL_ZERO)
    if nonzero.size and flat[nonzero[0]] < 0:
        m = -m
    return m


def _normalized_epipole(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    if v[2] != 0 and np.hypot(v[0] / v[2], v[1] / v[2]) < _FAR_PX:
        return v / v[2]
    # direction at infinity: keep unit norm, fix the sign
    nz = np.flatnonzero(np.abs(v) > _CANONICAL_ZERO)
    return -v if nz.size and v[nz[0]] < 0 else v


@dataclass(frozen=True, eq=False)
class Fundamental:
    """Rank-2 fundamental matrix in canonical scale with its epipoles.

    Convention: x'^T m x = 0 for x in image A and x' in image B, so m maps
    points of A to epipolar lines of B; e is the right null vector
    (epipole in A) and e_prime the left null vector (epipole in B).
    """
    m: np.ndarray
    e: HomogPoint
    e_prime: HomogPoint
    # worst line transfer angle when built from line pairs, else None
    transfer_residual: Optional[float] = None

    @classmethod
    def from_matrix(cls, m) -> "Fundamental":
        m = np.asarray(m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)) or not np.any(m):
            raise DegenerateLine("fundamental matrix has no finite nonzero entries")
        m = canonicalize(enforce_rank2(m))
        u, _, vt = np.linalg.svd(m)
        e = HomogPoint(_normalized_epipole(vt[2]))
        e_prime = HomogPoint(_normalized_epipole(u[:, 2]))
        m = m.copy()
        m.setflags(write=False)
        return cls(m=m, e=e, e_prime=e_prime)

    def transposed(self) -> "Fundamental":
        """The same geometry with the images swapped"""
        return Fundamental.from_matrix(self.m.T)

    def line_in_b(self, x: HomogPoint) -> HomogLine:
        return HomogLine(self.m @ x.coords)

    def line_in_a(self, x_prime: HomogPoint) -> HomogLine:
        return HomogLine(self.m.T @ x_prime.coords)

    def to_dict(self) -> Dict:
        return {
            "F": [float(v) for v in self.m.ravel()],
            "e": [float(v) for v in self.e.coords],
            "e_prime": [float(v) for v in self.e_prime.coords],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Fundamental":
        """Accepts the JSON document written by to_json or the text form
        'F = a b c / d e f / g h i'"""
        stripped = text.strip()
        if stripped.startswith("{"):
            try:
                doc = json.loads(stripped)
                values = np.asarray(doc["F"], dtype=float)
            except (ValueError, KeyError, TypeError) as e:
                raise ConfigError(f"invalid fundamental matrix JSON: {e}") from e
            if values.size != 9:
                raise ConfigError("fundamental matrix JSON needs 9 values")
            return cls.from_matrix(values.reshape(3, 3))
        return parse_fundamental_text(stripped)


_TEXT_FORM = re.compile(r"^\s*F\s*=\s*(.+)$", re.DOTALL)


def parse_fundamental_text(text: str) -> Fundamental:
    """Parse 'F = a b c / d e f / g h i'"""
    match = _TEXT_FORM.match(text)
    if not match:
        raise ConfigError("expected text of the form 'F = a b c / d e f / g h i'")
    rows = [r.split() for r in match.group(1).split("/")]
    if len(rows) != 3 or any(len(r) != 3 for r in rows):
        raise ConfigError("fundamental matrix text needs three rows of three numbers")
    try:
        values = np.array([[float(v) for v in r] for r in rows])
    except ValueError as e:
        raise ConfigError(f"invalid number in fundamental matrix text: {e}") from e
    return Fundamental.from_matrix(values)


def fundamental_invariant_residuals(f: Fundamental) -> Dict[str, float]:
    """Values checked by the Fundamental invariants (all should be < RANK_TOL,
    except frobenius_norm which should be 1)"""
    m = f.m
    s = np.linalg.svd(m / np.linalg.norm(m), compute_uv=False)
    e = f.e.coords / np.linalg.norm(f.e.coords)
    ep = f.e_prime.coords / np.linalg.norm(f.e_prime.coords)
    return {
        "smallest_singular_value": float(s[2]),
        "right_null_residual": float(np.linalg.norm(m @ e)),
        "left_null_residual": float(np.linalg.norm(m.T @ ep)),
        "frobenius_norm": float(np.linalg.norm(m)),
    }


def satisfies_invariants(f: Fundamental, tol: float = RANK_TOL) -> bool:
    r = fundamental_invariant_residuals(f)
    first = f.m.ravel()[np.flatnonzero(np.abs(f.m.ravel()) > _CANONICAL_ZERO)[0]]
    return (
        r["smallest_singular_value"] < tol
        and r["right_null_residual"] < tol
        and r["left_null_residual"] < tol
        and abs(r["frobenius_norm"] - 1.0) < 1e-12
        and first > 0
    )


def fundamental_distance(a: Fundamental, b: Fundamental) -> float:
    """Frobenius distance of the canonical matrices, insensitive to the sign choice"""
    return float(min(np.linalg.norm(a.m - b.m), np.linalg.norm(a.m + b.m)))


def fundamental_from_cameras(pa, pb) -> Fundamental:
    """F with (pb X)^T F (pa X) = 0 for every world point X"""
    pa = np.asarray(pa, dtype=float).reshape(3, 4)
    pb = np.asarray(pb, dtype=float).reshape(3, 4)
    for name, p in (("A", pa), ("B", pb)):
        s = np.linalg.svd(p, compute_uv=False)
        if s[2] <= 1e-12 * s[0]:
            raise DegenerateCameras(f"projection matrix {name} is not rank 3")
    center_a = np.linalg.svd(pa)[2][-1]
    e_prime = pb @ center_a
    if np.linalg.norm(e_prime) <= 1e-12 * np.linalg.norm(pb) * np.linalg.norm(center_a):
        raise DegenerateCameras("camera centres coincide (zero baseline)")
    return Fundamental.from_matrix(skew(e_prime) @ pb @ np.linalg.pinv(pa))


# ============================================================
# DISTANCES
# ============================================================

def symmetric_epipolar_distances(m: np.ndarray, xa, xb, strict: bool = True) -> np.ndarray:
    """Mean of the two point-to-epipolar-line distances for each pair, in pixels.

    With strict=False a degenerate epipolar line gives inf instead of raising.
    """
    ha = homogenize(xa)
    hb = homogenize(xb)
    lines_b = ha @ m.T
    lines_a = hb @ m
    s = np.abs(np.sum(hb * lines_b, axis=1))
    nb = np.hypot(lines_b[:, 0], lines_b[:, 1])
    na = np.hypot(lines_a[:, 0], lines_a[:, 1])
    degenerate = (nb == 0) | (na == 0)
    if np.any(degenerate):
        if strict:
            raise DegenerateLine("epipolar line of a point has (a, b) = (0, 0)")
        nb = np.where(nb == 0, np.nan, nb)
        na = np.where(na == 0, np.nan, na)
    d = 0.5 * (s / nb + s / na)
    return np.where(np.isnan(d), np.inf, d)


def symmetric_epipolar_distance(f: Fundamental, pair: PointPair) -> float:
    return float(symmetric_epipolar_distances(f.m, pair.x.coords[None, :], pair.x_prime.coords[None, :])[0])


# ============================================================
# PENCILS OF LINES
# ============================================================

@dataclass(frozen=True, eq=False)
class EpipoleFit:
    """Least-squares common point of a line set and each line's residual.

    Residuals are pixel distances for a finite point and the sine of the
    angle between line and direction for a point at infinity.
    """
    point: HomogPoint
    residuals: np.ndarray


def _unit_lines(lines) -> np.ndarray:
    arr = np.array([l.coords if isinstance(l, HomogLine) else np.asarray(l, dtype=float) for l in lines], dtype=float)
    arr = arr.reshape(-1, 3)
    n = np.hypot(arr[:, 0], arr[:, 1])
    if np.any(n == 0):
        raise DegenerateLine("line at infinity in a pencil")
    return arr / n[:, None]


def line_point_residuals(lines: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Distances of unit-normal lines to a homogeneous point"""
    point = np.asarray(point, dtype=float)
    if point[2] != 0 and np.hypot(point[0] / point[2], point[1] / point[2]) < _FAR_PX:
        return np.abs(lines @ (point / point[2]))
    d = point[:2] / np.linalg.norm(point[:2])
    return np.abs(lines[:, :2] @ d)


def epipole_from_lines(lines) -> EpipoleFit:
    """Right singular vector of the stacked unit-normal lines with the
    smallest singular value"""
    unit = _unit_lines(lines)
    if len(unit) < 2:
        raise IllConditioned("at least two lines are needed to locate an epipole")
    _, s, vt = np.linalg.svd(unit, full_matrices=True)
    s_full = np.zeros(3)
    s_full[:len(s)] = s
    if s_full[0] == 0 or (s_full[1] - s_full[2]) <= 1e-12 * s_full[0]:
        raise IllConditioned("pencil is ambiguous: lines do not determine a single point")
    point = _normalized_epipole(vt[2])
    return EpipoleFit(point=HomogPoint(point), residuals=line_point_residuals(unit, point))


@dataclass(frozen=True, eq=False)
class _PencilFrame:
    """1-D projective coordinates on the pencil through an epipole.

    A pencil line l meets the reference line at p = l x ref; its
    coordinate is to_coords @ p. from_coords maps coordinates back to a
    point on the reference line.
    """
    epipole: np.ndarray
    reference: np.ndarray
    to_coords: np.ndarray
    from_coords: np.ndarray

    def coordinates(self, lines: np.ndarray) -> np.ndarray:
        s = np.cross(lines, self.reference) @ self.to_coords.T
        return s / np.linalg.norm(s, axis=1, keepdims=True)

    def line_map(self) -> np.ndarray:
        """2 x 3 map from a pencil line (vector) to its coordinates, up to sign"""
        return self.to_coords @ skew(self.reference)

    def lines(self, coords: np.ndarray) -> np.ndarray:
        return (skew(self.epipole) @ self.from_coords @ np.atleast_2d(coords).T).T


def _pencil_frame(epipole: HomogPoint, image_size: Tuple[int, int]) -> _PencilFrame:
    """Reference line through the two image corners farthest from a finite
    epipole (pushed away if nearly incident), or through the image centre
    perpendicular to the direction of an epipole at infinity."""
    w, h = image_size
    center = np.array([w / 2.0, h / 2.0])
    diag = float(np.hypot(w, h))
    e = epipole.coords / np.linalg.norm(epipole.coords)
    if epipole.is_finite:
        exy = epipole.xy
        corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
        order = np.argsort(-np.linalg.norm(corners - exy, axis=1), kind="stable")
        c1, c2 = corners[order[0]], corners[order[1]]
        ref = np.cross(np.append(c1, 1.0), np.append(c2, 1.0))
        ref = ref / np.hypot(ref[0], ref[1])
        offset = ref @ np.append(exy, 1.0)
        if abs(offset) < 0.25 * diag:
            ref = ref.copy()
            ref[2] += np.sign(offset or 1.0) * diag
    else:
        d = e[:2] / np.linalg.norm(e[:2])
        ref = np.array([d[0], d[1], -float(d @ center)])
    normal = ref[:2]
    direction = np.array([-normal[1], normal[0]])
    q0 = center - (ref @ np.append(center, 1.0)) * normal
    to_coords = np.array([
        [direction[0], direction[1], -float(direction @ q0)],
        [0.0, 0.0, 1.0],
    ])
    from_coords = np.array([
        [direction[0], q0[0]],
        [direction[1], q0[1]],
        [0.0, 1.0],
    ])
    return _PencilFrame(epipole=epipole.coords.copy(), reference=ref,
                        to_coords=to_coords, from_coords=from_coords)


def _fit_pencil_homography(sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
    """2x2 projective map H with H sa_i ~ sb_i (least squares for > 3 pairs)"""
    rows = np.column_stack([
        sb[:, 1] * sa[:, 0], sb[:, 1] * sa[:, 1],
        -sb[:, 0] * sa[:, 0], -sb[:, 0] * sa[:, 1],
    ])
    h = np.linalg.svd(rows)[2][-1].reshape(2, 2)
    if abs(np.linalg.det(h)) <= 1e-12 * np.sum(h * h):
        raise DegeneratePencil("pencil homography is singular")
    return h


def _check_distinct(lines: np.ndarray, image: str):
    unit = lines / np.linalg.norm(lines, axis=1, keepdims=True)
    for i in range(len(unit)):
        for j in range(i + 1, len(unit)):
            if np.linalg.norm(np.cross(unit[i], unit[j])) < 1e-12:
                raise DegeneratePencil(f"lines {i} and {j} of image {image} coincide")


def fundamental_from_pencils(
    pairs: Sequence[LinePair],
    e: HomogPoint,
    e_prime: HomogPoint,
    image_size: Tuple[int, int] = (640, 480),
) -> Fundamental:
    """F = A [e]x where A maps the pencil through e onto the pencil through e'.

    Lines that miss their epipole are first moved into the pencil through
    their intersection with the reference line.
    """
    la = np.array([p.l.coords for p in pairs], dtype=float)
    lb = np.array([p.l_prime.coords for p in pairs], dtype=float)
    frame_a = _pencil_frame(e, image_size)
    frame_b = _pencil_frame(e_prime, image_size)
    h = _fit_pencil_homography(frame_a.coordinates(la), frame_b.coordinates(lb))
    line_map = skew(e_prime.coords) @ frame_b.from_coords @ h @ frame_a.line_map()
    return Fundamental.from_matrix(line_map @ skew(e.coords))


def line_transfer_residuals(f: Fundamental, pairs: Sequence[LinePair]) -> np.ndarray:
    """Angle (radians) between F's transfer of each l and the paired l'"""
    out = np.empty(len(pairs))
    for i, pair in enumerate(pairs):
        point_on_l = np.cross(pair.l.coords, f.e.coords)
        transferred = f.m @ point_on_l
        n1 = transferred[:2]
        n2 = pair.l_prime.coords[:2]
        norm = np.linalg.norm(n1) * np.linalg.norm(n2)
        if norm == 0:
            out[i] = np.inf
            continue
        out[i] = np.arcsin(min(1.0, abs(n1[0] * n2[1] - n1[1] * n2[0]) / norm))
    return out


def fundamental_from_line_pairs(
    pairs: Sequence[LinePair],
    image_size: Tuple[int, int] = (640, 480),
    concurrency_tol_px: Optional[float] = 1.0,
) -> Fundamental:
    """F from three pairs of corresponding epipolar lines.

    Epipoles are the least-squares intersections of each image's lines;
    each pencil is parameterized along a reference line, the 1-D
    projective map between parameters is fitted and lifted to a line
    map A, and F = A [e]x. Pass concurrency_tol_px=None to accept line
    triples that only approximately meet (RANSAC hypotheses).
    """
    if len(pairs) < 3:
        raise DegeneratePencil("three line pairs are needed")
    la = np.array([p.l.coords for p in pairs], dtype=float)
    lb = np.array([p.l_prime.coords for p in pairs], dtype=float)
    _check_distinct(la, "A")
    _check_distinct(lb, "B")

    fit_a = epipole_from_lines(la)
    fit_b = epipole_from_lines(lb)
    if concurrency_tol_px is not None:
        worst = max(fit_a.residuals.max(), fit_b.residuals.max())
        if worst > concurrency_tol_px:
            raise NotConcurrent(f"lines miss their common point by {worst:.3f} px")

    f = fundamental_from_pencils(pairs, fit_a.point, fit_b.point, image_size)

    residual = float(line_transfer_residuals(f, pairs).max())
    if residual > TRANSFER_TOL:
        log = logger.debug if concurrency_tol_px is None else logger.warning
        log(f"Line transfer residual {residual:.2e} rad exceeds {TRANSFER_TOL:g}; pairs are not one pencil map")
    return replace(f, transfer_residual=residual)
