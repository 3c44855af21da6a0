"""Configuration settings"""

from functools import lru_cache

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings read from ``FLOWFOLD_*`` environment variables or ``.env``.

    Run-specific hyperparameters live in the run config document, not here.
    """

    # Root directory for run artifacts when a command gets a relative --out.
    FLOWFOLD_OUTPUT_ROOT: str = "runs"

    # "auto" | "cpu" | "cuda" | "mps"
    FLOWFOLD_DEVICE: str = "cpu"
    FLOWFOLD_TORCH_NUM_THREADS: int | None = None

    FLOWFOLD_LOG_LEVEL: str = "INFO"
    FLOWFOLD_DEFAULT_SEED: int = 0

    # Desk-scale metric budget (samples per evaluated set).
    FLOWFOLD_METRIC_SAMPLE_BUDGET: int = 500
    FLOWFOLD_EQUIVARIANCE_MC_SAMPLES: int = 64

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()
