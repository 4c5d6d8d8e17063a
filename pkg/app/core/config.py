"""Application configuration"""
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    """Application settings"""
    
    # App Settings
    app_name: str = "Silhouette Barcode Calibration"
    app_version: str = "0.1.0"
    debug: bool = False
    
    # Candidate line sampling
    angle_step_deg: float = 2.0
    
    # RANSAC Settings
    max_hypotheses: int = 5000
    checkpoint_interval: int = 1000
    inlier_threshold_px: float = 1.0
    min_correlation: float = 0.9
    seed: int = 0
    
    # Temporal refinement Settings
    theta_deg: float = 0.2
    angle_samples: int = 41
    refine_max_iters: int = 20
    epipole_tol_px: float = 0.1
    
    # Workers (never changes results)
    threads: int = 1
    
    # Paths
    cache_dir: Path = Path(".silcal_cache")
    log_dir: Path = Path("logs")
    
    # Logging
    log_level: str = "INFO"
    log_to_file: bool = False
    
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False)


settings = Settings()
