"""Pydantic models for configs, manifests and experiment descriptions"""
from app.models.schemas import (
    RansacConfig, RefineConfig, SceneSpec, SphereTrajectory, NoiseSpec,
    CameraEntry, GroundTruth, DatasetManifest, ExperimentSpec, CliConfig,
)

__all__ = [
    "RansacConfig", "RefineConfig", "SceneSpec", "SphereTrajectory", "NoiseSpec",
    "CameraEntry", "GroundTruth", "DatasetManifest", "ExperimentSpec", "CliConfig",
]
