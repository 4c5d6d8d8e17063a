"""Silhouette masks, convex hulls, candidate points and tangent lines.

Pixel centres sit at integer coordinates: column x, row y.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from app.core.errors import ConfigError, DegenerateHull, EmptyMask, FormatError
from app.services.geometry import HomogLine

logger = logging.getLogger('silcal.silhouette')

FOREGROUND_LEVEL = 128
_TIE_TOL = 1e-9
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground occupancy of one frame (rows = y, columns = x)"""
    width: int
    height: int
    bits: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(f"bits shape {bits.shape} does not match {self.height}x{self.width}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, bits, frame_index: int = 0) -> "Mask":
        bits = np.asarray(bits, dtype=bool)
        return cls(width=bits.shape[1], height=bits.shape[0], bits=bits, frame_index=frame_index)

    @classmethod
    def empty(cls, width: int, height: int, frame_index: int = 0) -> "Mask":
        return cls(width, height, np.zeros((height, width), dtype=bool), frame_index)

    @property
    def size(self):
        return self.width, self.height

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def foreground(self) -> np.ndarray:
        """(P, 2) pixel centres of foreground pixels as (x, y)"""
        ys, xs = np.nonzero(self.bits)
        return np.column_stack([xs, ys]).astype(float)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.frame_index == other.frame_index
                and np.array_equal(self.bits, other.bits))

    __hash__ = None


# ============================================================
# PGM I/O
# ============================================================

def _read_token(data: bytes, pos: int):
    """Next whitespace-delimited header token, skipping '#' comments"""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header", start)
    return data[start:pos], start, pos


def _read_int(data: bytes, pos: int, name: str):
    token, start, pos = _read_token(data, pos)
    if not token.isdigit():
        raise FormatError(f"PGM {name} is not a number: {token!r}", start)
    return int(token), start, pos


def load_mask(data: bytes, frame_index: int = 0) -> Mask:
    """Parse a binary PGM (P5) stream; pixels at or above mid-grey are foreground.

    The threshold is 128 on the 0..255 scale and scales with maxval.
    """
    if data[:2] != b"P5":
        raise FormatError("missing P5 magic number", 0)
    width, _, pos = _read_int(data, 2, "width")
    height, _, pos = _read_int(data, pos, "height")
    maxval, maxval_at, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM size {width}x{height}", maxval_at)
    if not 1 <= maxval <= 255:
        raise FormatError(f"maxval {maxval} outside 1..255", maxval_at)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", pos)
    pos += 1

    expected = width * height
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(payload)}", pos + len(payload))

    threshold = FOREGROUND_LEVEL if maxval == 255 else int(np.ceil(FOREGROUND_LEVEL * maxval / 255))
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Mask(width=width, height=height, bits=values >= threshold, frame_index=frame_index)


def save_mask(mask: Mask) -> bytes:
    """Binary PGM with maxval 255"""
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + (mask.bits.astype(np.uint8) * 255).tobytes()


# ============================================================
# CONVEX HULL
# ============================================================

@dataclass(frozen=True, eq=False)
class ConvexHull:
    """Strictly convex polygon, counter-clockwise in (x, y), starting at the
    lexicographically smallest vertex"""
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_points(cls, points) -> "ConvexHull":
        return cls(monotone_chain(np.asarray(points, dtype=float)))

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) < 3

    @property
    def area(self) -> float:
        if self.is_degenerate:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def centroid(self) -> np.ndarray:
        if self.is_degenerate:
            return self.vertices.mean(axis=0)
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)

    def edges(self):
        """(E, 2) start and end points; a degenerate hull yields its segment or point"""
        v = self.vertices
        if len(v) == 1:
            return v, v
        if len(v) == 2:
            return v[:1], v[1:]
        return v, np.roll(v, -1, axis=0)

    def contains(self, xy, tol: float = 0.0) -> np.ndarray:
        """Points inside or on the hull (within tol px)"""
        p = np.atleast_2d(np.asarray(xy, dtype=float))
        start, end = self.edges()
        if self.is_degenerate:
            return distance_to_boundary(self, p) <= tol
        d = end - start
        length = np.hypot(d[:, 0], d[:, 1])
        # left of every CCW edge in (x, y)
        cross = (d[None, :, 0] * (p[:, None, 1] - start[None, :, 1])
                 - d[None, :, 1] * (p[:, None, 0] - start[None, :, 0])) / length
        return np.all(cross >= -tol, axis=1)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def monotone_chain(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; collinear points are dropped"""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    lower: List[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    return hull


def _row_extremes(mask: Mask) -> np.ndarray:
    """Leftmost and rightmost foreground pixel of every occupied row"""
    rows = np.flatnonzero(mask.bits.any(axis=1))
    sub = mask.bits[rows]
    first = np.argmax(sub, axis=1)
    last = mask.width - 1 - np.argmax(sub[:, ::-1], axis=1)
    return np.vstack([
        np.column_stack([first, rows]),
        np.column_stack([last, rows]),
    ]).astype(float)


def convex_hull(mask: Mask) -> ConvexHull:
    """Hull of all foreground pixel centres (several blobs share one hull)"""
    if mask.is_empty:
        raise EmptyMask(f"frame {mask.frame_index} has no foreground")
    return ConvexHull(monotone_chain(_row_extremes(mask)))


# ============================================================
# TANGENT LINES AND CANDIDATE POINTS
# ============================================================

@dataclass(frozen=True)
class CandidatePoint:
    x: float
    y: float

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class CandidateLine:
    """Supporting line of a hull with outward normal at normal_angle degrees"""
    line: HomogLine
    touch: CandidatePoint
    normal_angle: float
    index: int


def angle_count(angle_step_deg: float) -> int:
    count = 360.0 / angle_step_deg
    if angle_step_deg <= 0 or abs(count - round(count)) > 1e-9:
        raise ConfigError(f"angle step {angle_step_deg} does not divide 360")
    return int(round(count))


def normal_table(angle_step_deg: float) -> np.ndarray:
    """(K, 2) unit outward normals for angles 0, step, ..., 360 - step"""
    angles = np.deg2rad(np.arange(angle_count(angle_step_deg)) * angle_step_deg)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def tangent_arrays(hull: ConvexHull, angle_step_deg: float):
    """Line coefficients (K, 3) and touch vertices (K, 2) for every sampled normal"""
    if hull.is_degenerate:
        raise DegenerateHull(f"hull has {len(hull.vertices)} vertices")
    normals = normal_table(angle_step_deg)
    v = hull.vertices
    proj = v @ normals.T
    hmax = proj.max(axis=0)
    # ties go to the lexicographically smallest vertex
    rank = np.empty(len(v), dtype=int)
    rank[np.lexsort((v[:, 1], v[:, 0]))] = np.arange(len(v))
    ranked = np.where(proj >= hmax - _TIE_TOL, rank[:, None], len(v))
    touch = v[np.argmin(ranked, axis=0)]
    lines = np.column_stack([normals, -hmax])
    return lines, touch


def tangent_lines(hull: ConvexHull, angle_step_deg: float) -> List[CandidateLine]:
    lines, touch = tangent_arrays(hull, angle_step_deg)
    return [
        CandidateLine(
            line=HomogLine(lines[k]),
            touch=CandidatePoint(float(touch[k, 0]), float(touch[k, 1])),
            normal_angle=float(k * angle_step_deg),
            index=k,
        )
        for k in range(len(lines))
    ]


def tangents_through_point(hull: ConvexHull, point, tol: float = 1e-6) -> List[CandidateLine]:
    """Supporting lines of the hull passing through an outside point.

    The point may be at infinity. Returns an empty list when the point is
    inside the hull (no tangent exists).
    """
    p = np.asarray(point.coords if hasattr(point, "coords") else point, dtype=float)
    v = np.column_stack([hull.vertices, np.ones(len(hull.vertices))])
    found: List[CandidateLine] = []
    for i, vertex in enumerate(v):
        line = np.cross(p, vertex)
        n = np.hypot(line[0], line[1])
        if n == 0:
            continue
        line = line / n
        side = v @ line
        if np.all(side <= tol) or np.all(side >= -tol):
            if np.all(side >= -tol) and np.any(side > tol):
                line = -line
            if any(HomogLine(line).same_as(c.line) for c in found):
                continue
            angle = float(np.rad2deg(np.arctan2(line[1], line[0])) % 360.0)
            found.append(CandidateLine(HomogLine(line), CandidatePoint(float(vertex[0]), float(vertex[1])),
                                       angle, len(found)))
    return found


def distance_to_boundary(hull: ConvexHull, xy) -> np.ndarray:
    """Euclidean distance of each point to the nearest hull edge (segment)"""
    p = np.atleast_2d(np.asarray(xy, dtype=float))
    start, end = hull.edges()
    d = end - start
    length2 = np.sum(d * d, axis=1)
    rel = p[:, None, :] - start[None, :, :]
    t = np.where(length2 > 0, np.sum(rel * d[None], axis=2) / np.where(length2 > 0, length2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = start[None] + t[..., None] * d[None]
    return np.min(np.linalg.norm(p[:, None, :] - closest, axis=2), axis=1)


def boundary_mask(mask: Mask, connectivity: int = 1) -> np.ndarray:
    """Foreground pixels with a background neighbour; outside the image counts as
    background. connectivity=1 uses 4-neighbours, 2 uses 8-neighbours."""
    structure = ndimage.generate_binary_structure(2, connectivity)
    eroded = ndimage.binary_erosion(mask.bits, structure=structure, border_value=0)
    return mask.bits & ~eroded


def candidate_points(mask: Mask, hull: Optional[ConvexHull] = None) -> List[CandidatePoint]:
    """Boundary pixels lying within half a pixel of the hull boundary"""
    if mask.is_empty:
        raise EmptyMask(f"frame {mask.frame_index} has no foreground")
    if hull is None:
        hull = convex_hull(mask)
    ys, xs = np.nonzero(boundary_mask(mask, connectivity=1))
    pts = np.column_stack([xs, ys]).astype(float)
    keep = distance_to_boundary(hull, pts) <= 0.5
    return [CandidatePoint(float(x), float(y)) for x, y in pts[keep]]


def candidate_point_array(points: Sequence[CandidatePoint]) -> np.ndarray:
    if not points:
        return np.zeros((0, 2))
    return np.array([[p.x, p.y] for p in points])
