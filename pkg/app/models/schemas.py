"""Pydantic schemas for configs, scene descriptions, manifests and experiments"""
from typing import List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings


# ============================================================
# ALGORITHM CONFIGS
# ============================================================

class RansacConfig(BaseModel):
    """RANSAC over barcode-matched line pairs"""
    max_hypotheses: int = Field(settings.max_hypotheses, description="Hypotheses to generate", ge=1)
    checkpoint_interval: int = Field(settings.checkpoint_interval, description="LM refinement cadence", ge=1)
    inlier_threshold_px: float = Field(settings.inlier_threshold_px, description="Symmetric epipolar distance for inliers", gt=0.0)
    seed: int = Field(settings.seed, description="Seed of the hypothesis stream")
    min_correlation: float = Field(settings.min_correlation, description="Barcode correlation needed to sample or score a match", ge=-1.0, le=1.0)
    min_pool: int = Field(10, description="Top candidates used when too few pass min_correlation", ge=3)
    batch_size: int = Field(250, description="Hypotheses per worker batch", ge=1)
    threads: int = Field(settings.threads, description="Worker threads (results do not depend on it)", ge=1)

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "max_hypotheses": 5000,
            "checkpoint_interval": 1000,
            "inlier_threshold_px": 1.0,
            "seed": 7,
            "min_correlation": 0.9,
        }
    })


class RefineConfig(BaseModel):
    """Alternating spatial/temporal refinement"""
    theta_deg: float = Field(settings.theta_deg, description="Half-width of the angular search window", gt=0.0)
    angle_samples: int = Field(settings.angle_samples, description="Offsets sampled in [-theta, theta]", ge=1)
    max_iters: int = Field(settings.refine_max_iters, description="Outer iteration cap", ge=1)
    epipole_tol_px: float = Field(settings.epipole_tol_px, description="Stop when both epipoles move less than this", gt=0.0)
    concurrency_tol_px: float = Field(1.0, description="Largest line-to-epipole residual allowed after the line search", gt=0.0)

    @field_validator("angle_samples")
    @classmethod
    def angle_samples_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("angle_samples must be odd so the zero offset is sampled")
        return v


# ============================================================
# SYNTHETIC SCENES
# ============================================================

class SphereTrajectory(BaseModel):
    """Lissajous trajectory of one sphere (meters, cycles per sequence)"""
    radius: float = Field(0.35, gt=0.0)
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: Tuple[float, float, float] = (1.0, 1.0, 0.3)
    frequency: Tuple[float, float, float] = (1.0, 2.0, 3.0)
    phase: Tuple[float, float, float] = (0.0, 0.0, 0.0)


class NoiseSpec(BaseModel):
    """Silhouette corruption applied after rendering"""
    boundary_px: int = Field(0, description="Positive dilates, negative erodes the silhouettes", ge=-2, le=2)
    dropout: float = Field(0.0, description="Fraction of frames replaced by empty masks", ge=0.0, lt=1.0)
    seed: int = 0


def _default_spheres() -> List[SphereTrajectory]:
    return [
        SphereTrajectory(radius=0.40, center=(0.0, 0.0, 0.0), amplitude=(1.2, 0.9, 0.35),
                         frequency=(1.0, 2.0, 3.0), phase=(0.0, 0.5, 1.0)),
        SphereTrajectory(radius=0.30, center=(0.2, -0.1, 0.1), amplitude=(0.9, 1.2, 0.30),
                         frequency=(3.0, 1.0, 2.0), phase=(1.3, 0.2, 2.1)),
        SphereTrajectory(radius=0.25, center=(-0.2, 0.2, -0.1), amplitude=(1.0, 0.8, 0.25),
                         frequency=(2.0, 3.0, 1.0), phase=(2.4, 1.7, 0.4)),
    ]


class SceneSpec(BaseModel):
    """Cameras on a circle looking at the origin, spheres on Lissajous paths"""
    image_width: int = Field(640, ge=16)
    image_height: int = Field(480, ge=16)
    frames: int = Field(200, ge=10)
    camera_radius: float = Field(6.0, description="Circle radius in meters", gt=0.0)
    camera_height: float = Field(1.0, description="Camera height above the sphere plane")
    azimuths_deg: List[float] = Field(default_factory=lambda: [0.0, 60.0], min_length=2)
    focal_px: float = Field(600.0, gt=0.0)
    spheres: List[SphereTrajectory] = Field(default_factory=_default_spheres, min_length=1)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)

    model_config = ConfigDict(extra="forbid", json_schema_extra={
        "example": {
            "frames": 200,
            "azimuths_deg": [0.0, 180.0],
            "noise": {"boundary_px": 1, "dropout": 0.05, "seed": 3},
        }
    })


# ============================================================
# DATASET MANIFEST
# ============================================================

class CameraEntry(BaseModel):
    """One camera's frame directory"""
    name: str
    directory: str
    frame_count: int = Field(..., ge=1)
    projection: Optional[List[List[float]]] = Field(None, description="3x4 ground-truth projection matrix")


class GroundTruth(BaseModel):
    """Ground truth for the first two cameras of a manifest"""
    fundamental: Optional[List[float]] = Field(None, description="9 row-major floats", min_length=9, max_length=9)
    frontier_csv: Optional[str] = None


class DatasetManifest(BaseModel):
    """Two or more synchronized stationary cameras with binary silhouette frames"""
    cameras: List[CameraEntry] = Field(..., min_length=2)
    image_width: int = Field(..., ge=1)
    image_height: int = Field(..., ge=1)
    frame_rate: float = Field(25.0, gt=0.0)
    ground_truth: Optional[GroundTruth] = None
    scene: Optional[SceneSpec] = None


# ============================================================
# EXPERIMENTS
# ============================================================

class ExperimentSpec(BaseModel):
    """Method comparison over scenes and seeds"""
    scenes: List[SceneSpec] = Field(default_factory=lambda: [SceneSpec()], min_length=1)
    methods: List[Literal["barcode", "sinha"]] = Field(default_factory=lambda: ["barcode", "sinha"], min_length=1)
    budgets: List[int] = Field(default_factory=lambda: [1000, 2000, 5000, 10000], min_length=1)
    thresholds: List[float] = Field(default_factory=lambda: [1.5, 1.0, 0.8, 0.5, 0.4, 0.3], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: list(range(10)), min_length=1)
    max_hypotheses: Optional[int] = Field(None, description="Defaults to the largest budget", ge=1)
    checkpoint_interval: int = Field(settings.checkpoint_interval, ge=1)
    key_frames: Optional[int] = Field(None, ge=3)
    refine: bool = False
    overlays: bool = True

    model_config = ConfigDict(extra="forbid")

    @field_validator("budgets")
    @classmethod
    def budgets_positive(cls, v: List[int]) -> List[int]:
        if any(b < 1 for b in v):
            raise ValueError("budgets must be positive hypothesis counts")
        return v

    @field_validator("thresholds")
    @classmethod
    def thresholds_positive(cls, v: List[float]) -> List[float]:
        if any(t <= 0 for t in v):
            raise ValueError("thresholds must be positive pixel errors")
        return v

    @property
    def hypotheses(self) -> int:
        return self.max_hypotheses or max(self.budgets)


# ============================================================
# CLI
# ============================================================

class CliConfig(BaseModel):
    """Values of a JSON config file; explicit flags override them"""
    method: Literal["barcode", "sinha"] = "barcode"
    hypotheses: int = Field(settings.max_hypotheses, ge=1)
    seed: int = settings.seed
    no_refine: bool = False
    key_frames: Optional[int] = Field(None, ge=3)
    angle_step: float = Field(settings.angle_step_deg, gt=0.0)
    checkpoint_interval: int = Field(settings.checkpoint_interval, ge=1)
    inlier_threshold: float = Field(settings.inlier_threshold_px, gt=0.0)
    min_correlation: float = Field(settings.min_correlation, ge=-1.0, le=1.0)
    top_m: int = Field(1, ge=1, le=3)
    threads: int = Field(settings.threads, ge=1)
    pair: Tuple[int, int] = (0, 1)
    out: Optional[str] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def distinct_pair(self):
        if self.pair[0] == self.pair[1]:
            raise ValueError("camera pair must name two different cameras")
        return self
