"""Service layer for silhouette-based calibration"""
from app.services.pipeline import CalibrationPipeline, CalibrationResult
from app.services.bench import ExperimentResult, run_experiment

__all__ = ["CalibrationPipeline", "CalibrationResult", "ExperimentResult", "run_experiment"]
