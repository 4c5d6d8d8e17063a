"""Pytest configuration and shared fixtures"""
import numpy as np
import pytest

from app.models.schemas import SceneSpec, SphereTrajectory
from app.services.barcode import BarcodeBank, BoundaryStack
from app.services.geometry import HomogLine, HomogPoint, LinePair
from app.services.silhouette import Mask
from app.services.synth import Camera, make_scene


def small_scene_spec(**overrides) -> SceneSpec:
    """Two cameras 60 degrees apart, two spheres, 160x120 images"""
    values = dict(
        image_width=160,
        image_height=120,
        frames=40,
        focal_px=150.0,
        azimuths_deg=[0.0, 60.0],
        spheres=[
            SphereTrajectory(radius=0.5, center=(0.0, 0.0, 0.0), amplitude=(1.0, 0.8, 0.3),
                             frequency=(1.0, 2.0, 3.0), phase=(0.0, 0.5, 1.0)),
            SphereTrajectory(radius=0.4, center=(0.2, -0.1, 0.1), amplitude=(0.8, 1.0, 0.3),
                             frequency=(3.0, 1.0, 2.0), phase=(1.3, 0.2, 2.1)),
        ],
    )
    values.update(overrides)
    return SceneSpec(**values)


def disc_mask(width: int, height: int, cx: float, cy: float, r: float, frame_index: int = 0) -> Mask:
    ys, xs = np.mgrid[0:height, 0:width]
    return Mask.from_array((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r, frame_index=frame_index)


def random_rig(rng: np.random.Generator, image_size=(640, 480)):
    """Two cameras on a circle looking at the origin, 20-70 degrees apart"""
    az = rng.uniform(0, 360)
    sep = rng.uniform(20, 70)
    cams = []
    for a in (az, az + sep):
        t = np.deg2rad(a)
        pos = [6 * np.cos(t), 6 * np.sin(t), rng.uniform(-1, 2)]
        cams.append(Camera.looking_at(pos, rng.normal(0, 0.3, 3), rng.uniform(400, 800), image_size))
    return cams


def epipolar_line_pairs(f, cam_a: Camera, cam_b: Camera, points) -> list:
    """Corresponding epipolar lines through the projections of world points"""
    xa = cam_a.project(points)
    xb = cam_b.project(points)
    pairs = []
    for pa, pb in zip(xa, xb):
        la = np.cross(f.e.coords, np.append(pa, 1.0))
        lb = np.cross(f.e_prime.coords, np.append(pb, 1.0))
        pairs.append(LinePair(HomogLine(la), HomogLine(lb)))
    return pairs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene():
    return make_scene(small_scene_spec())


@pytest.fixture(scope="session")
def small_masks(small_scene):
    """Rendered masks of both cameras"""
    masks = small_scene.render_all()
    return masks[0], masks[1]


@pytest.fixture(scope="session")
def small_banks(small_masks):
    masks_a, masks_b = small_masks
    return BarcodeBank.build(masks_a, 2.0), BarcodeBank.build(masks_b, 2.0)


@pytest.fixture(scope="session")
def small_stacks(small_masks):
    return BoundaryStack(small_masks[0]), BoundaryStack(small_masks[1])


@pytest.fixture
def square_mask():
    """12x10 mask with a filled 4x3 rectangle at x 3..6, y 2..4"""
    bits = np.zeros((10, 12), dtype=bool)
    bits[2:5, 3:7] = True
    return Mask.from_array(bits)


@pytest.fixture
def origin_point():
    return HomogPoint.from_xy(0.0, 0.0)
