"""Dataset I/O: manifests, PGM frame directories, ground truth files"""
import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.errors import ConfigError, DatasetIOError, DimensionMismatch, LengthMismatch, NoData
from app.models.schemas import CameraEntry, DatasetManifest, GroundTruth
from app.services.geometry import Fundamental, HomogPoint, PointPair, fundamental_from_cameras
from app.services.silhouette import Mask, load_mask, save_mask
from app.services.synth import FrontierPair, Scene, ground_truth_frontier_points, make_scene

logger = logging.getLogger('silcal.dataset')

MANIFEST_NAME = "manifest.json"
FRONTIER_NAME = "frontier.csv"
FRONTIER_COLUMNS = ["frame", "xa", "ya", "xb", "yb"]


def frame_name(index: int) -> str:
    return f"frame_{index:04d}.pgm"


def _write_bytes(path: Path, data: bytes):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}") from e


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read {path}: {e}") from e


# ============================================================
# MANIFEST
# ============================================================

def load_manifest(path) -> Tuple[DatasetManifest, Path]:
    """Manifest and the directory its relative paths resolve against"""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    text = _read_bytes(path).decode("utf-8")
    try:
        manifest = DatasetManifest.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid manifest {path}: {e}") from e
    return manifest, path.parent


def save_manifest(manifest: DatasetManifest, out_dir) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    _write_bytes(path, (manifest.model_dump_json(indent=2) + "\n").encode("utf-8"))
    return path


def file_hash(path) -> str:
    return hashlib.sha256(_read_bytes(Path(path))).hexdigest()


# ============================================================
# FRAMES
# ============================================================

def write_frames(masks: Sequence[Mask], directory: Path):
    for t, mask in enumerate(masks):
        _write_bytes(directory / frame_name(t), save_mask(mask))


def load_camera_masks(manifest: DatasetManifest, root: Path, camera: int) -> List[Mask]:
    if not 0 <= camera < len(manifest.cameras):
        raise ConfigError(f"camera {camera} not in manifest ({len(manifest.cameras)} cameras)")
    entry = manifest.cameras[camera]
    directory = root / entry.directory
    masks = [load_mask(_read_bytes(directory / frame_name(t)), frame_index=t) for t in range(entry.frame_count)]
    for m in masks:
        if m.size != (manifest.image_width, manifest.image_height):
            raise DimensionMismatch(f"{entry.name} frame {m.frame_index} is {m.width}x{m.height}, "
                                    f"manifest says {manifest.image_width}x{manifest.image_height}")
    logger.info(f"Loaded {len(masks)} frames of camera {entry.name}")
    return masks


def load_pair(manifest: DatasetManifest, root: Path, pair: Tuple[int, int] = (0, 1)) -> Tuple[List[Mask], List[Mask]]:
    a, b = pair
    for cam in pair:
        if not 0 <= cam < len(manifest.cameras):
            raise ConfigError(f"camera {cam} not in manifest ({len(manifest.cameras)} cameras)")
    ca, cb = manifest.cameras[a], manifest.cameras[b]
    if ca.frame_count != cb.frame_count:
        raise LengthMismatch(f"cameras {ca.name} and {cb.name} have {ca.frame_count} and {cb.frame_count} frames")
    return load_camera_masks(manifest, root, a), load_camera_masks(manifest, root, b)


def content_hash(manifest: DatasetManifest, root: Path, camera: int) -> str:
    """Hash of a camera's frame files, keys the barcode cache"""
    entry = manifest.cameras[camera]
    digest = hashlib.sha256()
    for t in range(entry.frame_count):
        digest.update(_read_bytes(root / entry.directory / frame_name(t)))
    return digest.hexdigest()


# ============================================================
# GROUND TRUTH
# ============================================================

def write_fundamental(f: Fundamental, path):
    _write_bytes(Path(path), (f.to_json() + "\n").encode("utf-8"))


def read_fundamental(path) -> Fundamental:
    return Fundamental.from_json(_read_bytes(Path(path)).decode("utf-8"))


def frontier_to_dataframe(pairs: Sequence[FrontierPair]) -> pd.DataFrame:
    rows = [(p.frame, *p.a.xy, *p.b.xy) for p in pairs]
    return pd.DataFrame(rows, columns=FRONTIER_COLUMNS)


def write_frontier_csv(pairs: Sequence[FrontierPair], path):
    try:
        frontier_to_dataframe(pairs).to_csv(path, index=False, float_format="%.10g")
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}") from e


def read_frontier_csv(path) -> List[FrontierPair]:
    try:
        df = pd.read_csv(path)
    except OSError as e:
        raise DatasetIOError(f"cannot read {path}: {e}") from e
    missing = set(FRONTIER_COLUMNS) - set(df.columns)
    if missing:
        raise ConfigError(f"frontier file {path} lacks columns {sorted(missing)}")
    return [FrontierPair(HomogPoint.from_xy(r.xa, r.ya), HomogPoint.from_xy(r.xb, r.yb), int(r.frame))
            for r in df.itertuples(index=False)]


def ground_truth_fundamental(manifest: DatasetManifest, pair: Tuple[int, int] = (0, 1)) -> Optional[Fundamental]:
    """From camera matrices when both have one, else the stored F of cameras 0 and 1"""
    pa, pb = manifest.cameras[pair[0]].projection, manifest.cameras[pair[1]].projection
    if pa is not None and pb is not None:
        return fundamental_from_cameras(np.array(pa), np.array(pb))
    gt = manifest.ground_truth
    if gt is not None and gt.fundamental is not None:
        m = np.array(gt.fundamental).reshape(3, 3)
        if tuple(pair) == (0, 1):
            return Fundamental.from_matrix(m)
        if tuple(pair) == (1, 0):
            return Fundamental.from_matrix(m.T)
    return None


def ground_truth_points(manifest: DatasetManifest, root: Path, pair: Tuple[int, int] = (0, 1),
                        masks: Optional[Tuple[Sequence[Mask], Sequence[Mask]]] = None) -> List[PointPair]:
    """Stored frontier pairs, or pairs extracted from the masks with the GT F"""
    gt = manifest.ground_truth
    if gt is not None and gt.frontier_csv and tuple(pair) in ((0, 1), (1, 0)):
        stored = read_frontier_csv(root / gt.frontier_csv)
        if tuple(pair) == (1, 0):
            return [PointPair(p.b, p.a) for p in stored]
        return [p.as_point_pair() for p in stored]

    f_gt = ground_truth_fundamental(manifest, pair)
    if f_gt is None:
        raise NoData("manifest has no ground truth for this camera pair")
    masks_a, masks_b = masks if masks is not None else load_pair(manifest, root, pair)
    scene = make_scene(manifest.scene) if manifest.scene is not None else None
    found = ground_truth_frontier_points(masks_a, masks_b, f_gt, scene=scene, cameras=tuple(pair))
    return [p.as_point_pair() for p in found]


# ============================================================
# SYNTHETIC DATASETS
# ============================================================

def write_scene_dataset(scene: Scene, masks: Sequence[Sequence[Mask]], out_dir,
                        frontier: Optional[Sequence[FrontierPair]] = None) -> DatasetManifest:
    """PGM frames per camera, manifest with GT cameras and F, frontier CSV"""
    out_dir = Path(out_dir)
    entries = []
    for i, (cam, cam_masks) in enumerate(zip(scene.cameras, masks)):
        directory = f"cam{i}"
        write_frames(cam_masks, out_dir / directory)
        entries.append(CameraEntry(name=directory, directory=directory, frame_count=len(cam_masks),
                                   projection=cam.P.tolist()))
    gt = GroundTruth(fundamental=scene.fundamental(0, 1).m.ravel().tolist())
    if frontier:
        write_frontier_csv(frontier, out_dir / FRONTIER_NAME)
        gt.frontier_csv = FRONTIER_NAME
    manifest = DatasetManifest(cameras=entries, image_width=scene.spec.image_width,
                               image_height=scene.spec.image_height, ground_truth=gt, scene=scene.spec)
    path = save_manifest(manifest, out_dir)
    logger.info(f"Wrote dataset {path}: {len(entries)} cameras, {scene.frames} frames")
    return manifest


def read_json_file(path) -> dict:
    try:
        return json.loads(_read_bytes(Path(path)).decode("utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
