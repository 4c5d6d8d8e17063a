"""Key-frame selection and barcode matching of candidate epipolar lines"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.errors import EmptyMask, LengthMismatch, NotEnoughFrames
from app.services.barcode import BarcodeBank
from app.services.silhouette import CandidateLine, Mask, convex_hull

logger = logging.getLogger('silcal.matcher')


@dataclass(frozen=True, eq=False)
class MatchCandidate:
    """Best-correlated tangent line pair of one frame pair"""
    frame: int
    line_a: CandidateLine
    line_b: CandidateLine
    correlation: float

    @property
    def touch_points(self):
        return self.line_a.touch.pos, self.line_b.touch.pos


@dataclass(eq=False)
class MatchTable:
    """Candidates sorted by correlation, highest first"""
    candidates: List[MatchCandidate] = field(default_factory=list)
    frame_pairs: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def touch_arrays(self, min_correlation: float = -1.0):
        """(M, 2) touch points in A and B of candidates at or above min_correlation"""
        chosen = [c for c in self.candidates if c.correlation >= min_correlation]
        if not chosen:
            return np.zeros((0, 2)), np.zeros((0, 2))
        xa = np.array([c.line_a.touch.pos for c in chosen])
        xb = np.array([c.line_b.touch.pos for c in chosen])
        return xa, xb

    def to_dataframe(self) -> pd.DataFrame:
        rows = []
        for c in self.candidates:
            la, lb = c.line_a.line.coords, c.line_b.line.coords
            rows.append({
                "frame": c.frame,
                "angle_a": c.line_a.normal_angle,
                "angle_b": c.line_b.normal_angle,
                "correlation": c.correlation,
                "a_a": la[0], "b_a": la[1], "c_a": la[2],
                "a_b": lb[0], "b_b": lb[1], "c_b": lb[2],
            })
        columns = ["frame", "angle_a", "angle_b", "correlation", "a_a", "b_a", "c_a", "a_b", "b_b", "c_b"]
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path):
        self.to_dataframe().to_csv(path, index=False, float_format="%.10g")


def frame_features(masks_a: Sequence[Mask], masks_b: Sequence[Mask]):
    """Per-frame (centroid_a, sqrt area_a, centroid_b, sqrt area_b) and usability"""
    if len(masks_a) != len(masks_b):
        raise LengthMismatch(f"cameras have {len(masks_a)} and {len(masks_b)} frames")
    n = len(masks_a)
    features = np.zeros((n, 6))
    areas = np.zeros(n)
    usable = np.zeros(n, dtype=bool)
    for t in range(n):
        try:
            ha = convex_hull(masks_a[t])
            hb = convex_hull(masks_b[t])
        except EmptyMask:
            continue
        if ha.is_degenerate or hb.is_degenerate:
            continue
        usable[t] = True
        features[t] = [*ha.centroid, np.sqrt(ha.area), *hb.centroid, np.sqrt(hb.area)]
        areas[t] = ha.area + hb.area
    return features, areas, usable


def features_from_banks(bank_a: BarcodeBank, bank_b: BarcodeBank):
    """Same features as frame_features, read from the offline banks"""
    usable = bank_a.usable & bank_b.usable
    features = np.column_stack([
        bank_a.centroids, np.sqrt(bank_a.areas), bank_b.centroids, np.sqrt(bank_b.areas),
    ])
    features[~usable] = 0.0
    areas = np.where(usable, bank_a.areas + bank_b.areas, 0.0)
    return features, areas, usable


def greedy_farthest(features: np.ndarray, areas: np.ndarray, usable: np.ndarray, count: int) -> List[int]:
    """Farthest-point selection starting at the largest joint area (ties: lower index)"""
    if count < 3:
        raise NotEnoughFrames(f"at least 3 key frames are needed, asked for {count}")
    candidates = np.flatnonzero(usable)
    if candidates.size < count:
        raise NotEnoughFrames(f"{candidates.size} usable frames, {count} requested")
    if np.all(features[candidates] == features[candidates[0]]):
        logger.warning("All usable frames look identical; key frames carry no extra information")

    first = candidates[int(np.argmax(areas[candidates]))]
    selected = [int(first)]
    dist = np.linalg.norm(features[candidates] - features[first], axis=1)
    dist[candidates == first] = -np.inf
    while len(selected) < count:
        pick = int(np.argmax(dist))
        selected.append(int(candidates[pick]))
        dist = np.minimum(dist, np.linalg.norm(features[candidates] - features[candidates[pick]], axis=1))
        dist[pick] = -np.inf
    return selected


def select_key_frames(masks_a: Sequence[Mask], masks_b: Sequence[Mask], count: int) -> List[int]:
    """Frames whose silhouettes differ most from each other, in selection order"""
    features, areas, usable = frame_features(masks_a, masks_b)
    return greedy_farthest(features, areas, usable, count)


def best_pairs(frame_pairs: Sequence[int], bank_a: BarcodeBank, bank_b: BarcodeBank,
               top_m: int = 1) -> MatchTable:
    """Highest-correlation line pair(s) of each frame's affinity matrix"""
    candidates: List[MatchCandidate] = []
    for t in frame_pairs:
        if not (bank_a.usable[t] and bank_b.usable[t]):
            continue
        aff = bank_a.affinity(t, bank_b)
        values = np.where(aff.degenerate_entries(), -np.inf, aff.values)
        flat = values.ravel()
        # stable order: ties resolve to smaller (row, column)
        order = np.argsort(-flat, kind="stable")[:top_m]
        for idx in order:
            if not flat[idx] > 0:
                break
            i, j = np.unravel_index(idx, values.shape)
            candidates.append(MatchCandidate(
                frame=int(t),
                line_a=bank_a.candidate_line(t, int(i)),
                line_b=bank_b.candidate_line(t, int(j)),
                correlation=float(flat[idx]),
            ))
    candidates.sort(key=lambda c: -c.correlation)
    logger.info(f"Matched {len(candidates)} candidates over {len(frame_pairs)} frame pairs")
    return MatchTable(candidates=candidates, frame_pairs=list(frame_pairs))


def build_match_table(bank_a: BarcodeBank, bank_b: BarcodeBank, key_frames: Optional[int] = None,
                      top_m: int = 1) -> MatchTable:
    """All frame pairs, or a greedy subset of key_frames of them"""
    if bank_a.frame_count != bank_b.frame_count:
        raise LengthMismatch(f"cameras have {bank_a.frame_count} and {bank_b.frame_count} frames")
    if key_frames is None:
        frames = list(range(bank_a.frame_count))
    else:
        features, areas, usable = features_from_banks(bank_a, bank_b)
        frames = greedy_farthest(features, areas, usable, key_frames)
    return best_pairs(frames, bank_a, bank_b, top_m=top_m)
