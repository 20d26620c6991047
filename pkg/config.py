"""
Central configuration management for layerlight
"""
from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Process-wide settings loaded from LAYERLIGHT_* environment variables"""

    # Logging level name (LAYERLIGHT_LOG)
    log: str = "INFO"

    # Global seed override (LAYERLIGHT_SEED); beats config files, loses to --seed
    seed: Optional[int] = None

    # Torch device for training, sampling and distillation
    device: str = "cpu"

    # Set LAYERLIGHT_RUN_SLOW=1 to run the end-to-end tests
    run_slow: bool = False

    class Config:
        env_prefix = "LAYERLIGHT_"
        env_file = ".env"
        case_sensitive = False
        extra = "ignore"


# Global settings instance
settings = Settings()
