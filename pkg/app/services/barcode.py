"""Motion barcodes of lines, their correlation and the per-frame affinity matrix.

A line's barcode records, for every frame of a camera, whether some
foreground pixel centre lies within half a pixel of the line. The set of
pixel centres in that band is 8-connected and always leaves the image, so
it suffices to test the frame's 8-connected boundary pixels (pixels with a
background neighbour, the image border counting as background).
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import (
    DatasetIOError, DegenerateHull, DimensionMismatch, EmptyMask, FormatError, LengthMismatch,
)
from app.services.geometry import HomogLine
from app.services.silhouette import (
    CandidateLine, CandidatePoint, Mask, angle_count, boundary_mask, convex_hull, tangent_arrays,
)

logger = logging.getLogger('silcal.barcode')

BAND_HALF_WIDTH = 0.5
CACHE_MAGIC = b"SCBC"
CACHE_VERSION = 1


def _unit_lines(lines) -> np.ndarray:
    arr = np.atleast_2d(np.array([l.coords if isinstance(l, HomogLine) else l for l in lines], dtype=float))
    n = np.hypot(arr[:, 0], arr[:, 1])
    if np.any(n == 0):
        raise ValueError("line at infinity has no incidence band")
    return arr / n[:, None]


def _band_hits(proj: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """proj: (P, L) projections n.p, offset: (L,) line constants; any point in band per line"""
    return np.any((proj >= -offset - BAND_HALF_WIDTH) & (proj <= -offset + BAND_HALF_WIDTH), axis=0)


def boundary_pixels(mask: Mask) -> np.ndarray:
    """(P, 2) pixel centres of the 8-connected boundary"""
    ys, xs = np.nonzero(boundary_mask(mask, connectivity=2))
    return np.column_stack([xs, ys]).astype(float)


def line_intersects_mask(line: HomogLine, mask: Mask) -> bool:
    """True iff some foreground pixel centre lies within half a pixel of the line"""
    u = _unit_lines([line])[0]
    pts = boundary_pixels(mask)
    if len(pts) == 0:
        return False
    return bool(_band_hits((pts @ u[:2])[:, None], u[2:3])[0])


# ============================================================
# BARCODES AND CORRELATION
# ============================================================

@dataclass(frozen=True, eq=False)
class Barcode:
    """Binary temporal sequence of one line with its population statistics"""
    bits: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool).reshape(-1)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "mean", float(bits.mean()) if bits.size else 0.0)
        object.__setattr__(self, "std", float(bits.std()) if bits.size else 0.0)

    def __len__(self) -> int:
        return self.bits.size

    @property
    def degenerate(self) -> bool:
        return self.std == 0.0

    def as_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


class Correlation(NamedTuple):
    value: float
    degenerate: bool


def normalized_rows(bits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rows scaled so that their dot products are Pearson correlations.

    Returns (z, degenerate) where constant rows are all-zero and flagged.
    """
    b = np.atleast_2d(np.asarray(bits, dtype=float))
    n = b.shape[1]
    mean = b.mean(axis=1, keepdims=True)
    std = b.std(axis=1, keepdims=True)
    degenerate = std[:, 0] == 0
    scale = np.where(std > 0, std * np.sqrt(n), 1.0)
    z = np.where(std > 0, (b - mean) / scale, 0.0)
    return z, degenerate


def barcode_correlation(a: Barcode, b: Barcode) -> Correlation:
    """Pearson correlation of two barcodes; 0 and flagged if either is constant"""
    if len(a) != len(b):
        raise LengthMismatch(f"barcode lengths differ: {len(a)} vs {len(b)}")
    if a.degenerate or b.degenerate:
        return Correlation(0.0, True)
    za, _ = normalized_rows(a.bits[None, :])
    zb, _ = normalized_rows(b.bits[None, :])
    return Correlation(float(np.clip(za[0] @ zb[0], -1.0, 1.0)), False)


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Pearson correlations of row barcodes against column barcodes"""
    values: np.ndarray
    row_degenerate: np.ndarray
    col_degenerate: np.ndarray
    row_lines: Optional[List[CandidateLine]] = None
    col_lines: Optional[List[CandidateLine]] = None

    @property
    def shape(self):
        return self.values.shape

    def degenerate_entries(self) -> np.ndarray:
        return self.row_degenerate[:, None] | self.col_degenerate[None, :]


def affinity_from_bits(rows: np.ndarray, cols: np.ndarray) -> AffinityMatrix:
    rows = np.atleast_2d(rows)
    cols = np.atleast_2d(cols)
    if rows.shape[1] != cols.shape[1]:
        raise LengthMismatch(f"barcode lengths differ: {rows.shape[1]} vs {cols.shape[1]}")
    zr, dr = normalized_rows(rows)
    zc, dc = normalized_rows(cols)
    return AffinityMatrix(values=np.clip(zr @ zc.T, -1.0, 1.0), row_degenerate=dr, col_degenerate=dc)


def affinity_matrix(rows: Sequence[Barcode], cols: Sequence[Barcode],
                    row_lines=None, col_lines=None) -> AffinityMatrix:
    lengths = {len(b) for b in list(rows) + list(cols)}
    if len(lengths) > 1:
        raise LengthMismatch(f"barcodes of different lengths: {sorted(lengths)}")
    m = affinity_from_bits(np.array([b.bits for b in rows]), np.array([b.bits for b in cols]))
    return AffinityMatrix(m.values, m.row_degenerate, m.col_degenerate, row_lines, col_lines)


def _check_dimensions(masks: Sequence[Mask]):
    if not masks:
        raise DimensionMismatch("no frames given")
    sizes = {m.size for m in masks}
    if len(sizes) > 1:
        raise DimensionMismatch(f"frames have different sizes: {sorted(sizes)}")


def motion_barcode(line: HomogLine, masks: Sequence[Mask]) -> Barcode:
    """bits[t] = line_intersects_mask(line, masks[t])"""
    return BoundaryStack(masks).barcode(line)


# ============================================================
# PER-CAMERA BOUNDARY STACK
# ============================================================

class BoundaryStack:
    """Boundary pixels of every frame of one camera, for barcode queries"""

    def __init__(self, masks: Sequence[Mask], chunk: int = 512):
        _check_dimensions(masks)
        self.width, self.height = masks[0].size
        self.frame_count = len(masks)
        self.points = [boundary_pixels(m) for m in masks]
        self.chunk = chunk

    def barcode(self, line: HomogLine) -> Barcode:
        return Barcode(self.barcodes([line])[0])

    def barcodes(self, lines) -> np.ndarray:
        """(L, N) bool barcodes of arbitrary lines"""
        u = _unit_lines(lines) if len(lines) else np.zeros((0, 3))
        out = np.zeros((len(u), self.frame_count), dtype=bool)
        for t, pts in enumerate(self.points):
            if len(pts) == 0:
                continue
            for s in range(0, len(u), self.chunk):
                part = u[s:s + self.chunk]
                out[s:s + len(part), t] = _band_hits(pts @ part[:, :2].T, part[:, 2])
        return out

    def rotated_barcodes(self, line, pivot, offsets_deg) -> Tuple[np.ndarray, np.ndarray]:
        """Barcodes of a line rotated about pivot by each offset.

        Returns (lines (S, 3), bits (S, N)). Pixels farther from the
        unrotated line than any rotation can reach are skipped.
        """
        u = _unit_lines([line])[0]
        pivot = np.asarray(pivot, dtype=float)
        angles = np.arctan2(u[1], u[0]) + np.deg2rad(np.asarray(offsets_deg, dtype=float))
        normals = np.column_stack([np.cos(angles), np.sin(angles)])
        lines = np.column_stack([normals, -normals @ pivot])
        reach = 2.0 * np.sin(np.max(np.abs(np.deg2rad(offsets_deg))) / 2.0) + 1e-12
        out = np.zeros((len(lines), self.frame_count), dtype=bool)
        for t, pts in enumerate(self.points):
            if len(pts) == 0:
                continue
            rel = pts - pivot
            near = np.abs(rel @ u[:2]) <= BAND_HALF_WIDTH + reach * np.hypot(rel[:, 0], rel[:, 1]) + 1e-9
            if near.any():
                out[:, t] = _band_hits(pts[near] @ normals.T, lines[:, 2])
        return lines, out

    def barcodes_by_angle(self, lines: np.ndarray, angle_index: np.ndarray) -> np.ndarray:
        """(L, N) barcodes for lines sharing a small set of normals.

        lines[i] must have exactly the normal of every other line with the
        same angle_index; each frame is projected once per normal and queried
        by binary search.
        """
        u = _unit_lines(lines)
        out = np.zeros((len(u), self.frame_count), dtype=bool)
        groups = {}
        for i, k in enumerate(angle_index):
            groups.setdefault(int(k), []).append(i)
        for k, members in groups.items():
            members = np.asarray(members)
            normal = u[members[0], :2]
            lo = -u[members, 2] - BAND_HALF_WIDTH
            hi = -u[members, 2] + BAND_HALF_WIDTH
            for t, pts in enumerate(self.points):
                if len(pts) == 0:
                    continue
                proj = np.sort(pts @ normal)
                first = np.searchsorted(proj, lo, side="left")
                out[members, t] = (first < len(proj)) & (proj[np.minimum(first, len(proj) - 1)] <= hi)
        return out


# ============================================================
# OFFLINE BARCODE BANK
# ============================================================

@dataclass(eq=False)
class BarcodeBank:
    """Tangent lines of every usable frame with their barcodes over all frames.

    Arrays are indexed [frame, angle]; rows of unusable frames (empty or
    degenerate hull) are NaN lines with all-zero barcodes.
    """
    angle_step: float
    usable: np.ndarray
    lines: np.ndarray
    touch: np.ndarray
    bits: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.bits.shape[0]

    @property
    def lines_per_frame(self) -> int:
        return self.bits.shape[1]

    def candidate_lines(self, frame: int) -> List[CandidateLine]:
        if not self.usable[frame]:
            return []
        return [self.candidate_line(frame, k) for k in range(self.lines_per_frame)]

    def candidate_line(self, frame: int, k: int) -> CandidateLine:
        return CandidateLine(
            line=HomogLine(self.lines[frame, k]),
            touch=CandidatePoint(float(self.touch[frame, k, 0]), float(self.touch[frame, k, 1])),
            normal_angle=float(k * self.angle_step),
            index=k,
        )

    def barcode(self, frame: int, k: int) -> Barcode:
        return Barcode(self.bits[frame, k])

    def affinity(self, frame: int, other: "BarcodeBank") -> AffinityMatrix:
        return affinity_from_bits(self.bits[frame], other.bits[frame])

    @classmethod
    def build(cls, masks: Sequence[Mask], angle_step: float, stack: Optional[BoundaryStack] = None) -> "BarcodeBank":
        """Offline pass: tangent lines per frame and their barcodes"""
        start = time.perf_counter()
        stack = stack or BoundaryStack(masks)
        n = len(masks)
        k = angle_count(angle_step)
        usable = np.zeros(n, dtype=bool)
        lines = np.full((n, k, 3), np.nan)
        touch = np.full((n, k, 2), np.nan)
        areas = np.zeros(n)
        centroids = np.full((n, 2), np.nan)
        for t, mask in enumerate(masks):
            try:
                hull = convex_hull(mask)
                lines[t], touch[t] = tangent_arrays(hull, angle_step)
            except (EmptyMask, DegenerateHull):
                logger.debug(f"Frame {t}: no usable hull, skipped for line sampling")
                continue
            usable[t] = True
            areas[t] = hull.area
            centroids[t] = hull.centroid

        bits = np.zeros((n, k, n), dtype=bool)
        rows = np.flatnonzero(usable)
        if rows.size:
            flat_lines = lines[rows].reshape(-1, 3)
            angle_index = np.tile(np.arange(k), rows.size)
            bits[rows] = stack.barcodes_by_angle(flat_lines, angle_index).reshape(rows.size, k, n)
        logger.info(f"Barcode bank: {rows.size}/{n} usable frames, {k} lines each, "
                    f"{time.perf_counter() - start:.2f}s")
        return cls(angle_step=angle_step, usable=usable, lines=lines, touch=touch,
                   bits=bits, areas=areas, centroids=centroids)

    # === CACHE FILE ===

    def save(self, path: Path):
        """Versioned binary cache: header, packed bit rows, per-row statistics"""
        n, k = self.frame_count, self.lines_per_frame
        rows = self.bits.reshape(n * k, n)
        stats = np.column_stack([rows.mean(axis=1), rows.std(axis=1)])
        parts = [
            CACHE_MAGIC,
            np.array([CACHE_VERSION], dtype="<u2").tobytes(),
            np.array([n, n * k, k], dtype="<u4").tobytes(),
            np.array([self.angle_step], dtype="<f8").tobytes(),
            np.packbits(self.usable).tobytes(),
            self.lines.astype("<f8").tobytes(),
            self.touch.astype("<f8").tobytes(),
            self.areas.astype("<f8").tobytes(),
            self.centroids.astype("<f8").tobytes(),
            np.packbits(rows, axis=1).tobytes(),
            stats.astype("<f8").tobytes(),
        ]
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(b"".join(parts))
        except OSError as e:
            raise DatasetIOError(f"cannot write barcode cache {path}: {e}") from e
        logger.debug(f"Saved barcode cache {path}")

    @classmethod
    def load(cls, path: Path) -> "BarcodeBank":
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise DatasetIOError(f"cannot read barcode cache {path}: {e}") from e
        if data[:4] != CACHE_MAGIC:
            raise FormatError("not a barcode cache", 0)
        version = int(np.frombuffer(data, dtype="<u2", count=1, offset=4)[0])
        if version != CACHE_VERSION:
            raise FormatError(f"unsupported barcode cache version {version}", 4)
        n, row_count, k = (int(v) for v in np.frombuffer(data, dtype="<u4", count=3, offset=6))
        if row_count != n * k:
            raise FormatError("barcode cache row count mismatch", 6)
        angle_step = float(np.frombuffer(data, dtype="<f8", count=1, offset=18)[0])
        pos = 26

        def take(count: int, dtype: str) -> np.ndarray:
            nonlocal pos
            size = count * np.dtype(dtype).itemsize
            if pos + size > len(data):
                raise FormatError("truncated barcode cache", len(data))
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += size
            return arr

        usable = np.unpackbits(take((n + 7) // 8, "u1"))[:n].astype(bool)
        lines = take(n * k * 3, "<f8").reshape(n, k, 3).copy()
        touch = take(n * k * 2, "<f8").reshape(n, k, 2).copy()
        areas = take(n, "<f8").copy()
        centroids = take(n * 2, "<f8").reshape(n, 2).copy()
        row_bytes = (n + 7) // 8
        packed = take(n * k * row_bytes, "u1").reshape(n * k, row_bytes)
        bits = np.unpackbits(packed, axis=1)[:, :n].astype(bool).reshape(n, k, n)
        take(n * k * 2, "<f8")
        return cls(angle_step=angle_step, usable=usable, lines=lines, touch=touch,
                   bits=bits, areas=areas, centroids=centroids)

    def dump_rows(self, frame: Optional[int] = None) -> List[str]:
        """Barcodes as 'frame angle bits' text rows"""
        frames = [frame] if frame is not None else list(np.flatnonzero(self.usable))
        out = []
        for t in frames:
            if not self.usable[t]:
                continue
            for k in range(self.lines_per_frame):
                out.append(f"{t} {k * self.angle_step:g} {self.barcode(t, k).as_string()}")
        return out


class BarcodeProvider:
    """Barcodes of arbitrary lines in both cameras (used by refinement)"""

    def __init__(self, stack_a: BoundaryStack, stack_b: BoundaryStack):
        if stack_a.frame_count != stack_b.frame_count:
            raise LengthMismatch(f"frame counts differ: {stack_a.frame_count} vs {stack_b.frame_count}")
        self.stack_a = stack_a
        self.stack_b = stack_b

    @classmethod
    def from_masks(cls, masks_a: Sequence[Mask], masks_b: Sequence[Mask]) -> "BarcodeProvider":
        return cls(BoundaryStack(masks_a), BoundaryStack(masks_b))

    def barcodes_a(self, lines) -> np.ndarray:
        return self.stack_a.barcodes(lines)

    def barcodes_b(self, lines) -> np.ndarray:
        return self.stack_b.barcodes(lines)

    def correlations(self, lines_a, lines_b) -> AffinityMatrix:
        return affinity_from_bits(self.barcodes_a(lines_a), self.barcodes_b(lines_b))

    def rotation_affinity(self, line_a, pivot_a, line_b, pivot_b, offsets_deg):
        """Rotated lines of both images and the (S, S) correlation of their barcodes"""
        lines_a, bits_a = self.stack_a.rotated_barcodes(line_a, pivot_a, offsets_deg)
        lines_b, bits_b = self.stack_b.rotated_barcodes(line_b, pivot_b, offsets_deg)
        return lines_a, lines_b, affinity_from_bits(bits_a, bits_b)
