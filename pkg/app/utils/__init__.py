"""Utility functions"""
from app.utils.logging_config import setup_logging
from app.utils.metrics import EstimationMetrics

__all__ = ["setup_logging", "EstimationMetrics"]
