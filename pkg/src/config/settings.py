"""
Runtime settings for the reconstruction toolkit.

Environment variables (optionally loaded from a .env file) select the log
level, the results registry and the default seed. Experiment configuration
(model sizes, loss weights, schedules) lives in JSON files, see
src/config/experiment.py.
"""

import os
from typing import List

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.environ.get("RECON_LOG_LEVEL", "INFO")
LOG_FILE = os.environ.get("RECON_LOG_FILE", "")
RESULTS_DB = os.environ.get("RECON_RESULTS_DB", "sqlite:///./recon_results.db")
DEFAULT_SEED = int(os.environ.get("RECON_DEFAULT_SEED", "0"))
NUM_THREADS = int(os.environ.get("RECON_NUM_THREADS", "1"))


class Config:
    """Base configuration class."""

    LOG_LEVEL = LOG_LEVEL
    LOG_FILE = LOG_FILE
    RESULTS_DB = RESULTS_DB
    DEFAULT_SEED = DEFAULT_SEED

    # Single-threaded kernels keep runs bit-reproducible
    NUM_THREADS = NUM_THREADS
    DETERMINISTIC = True

    TESTING = False


class DevelopmentConfig(Config):
    """Development configuration."""

    LOG_LEVEL = os.environ.get("RECON_LOG_LEVEL", "DEBUG")


class TestingConfig(Config):
    """Testing configuration."""

    TESTING = True
    RESULTS_DB = "sqlite://"


def get_config() -> Config:
    """Get configuration based on environment."""
    env = os.environ.get("RECON_ENV", "default").lower()

    config_map = {
        "default": Config,
        "development": DevelopmentConfig,
        "testing": TestingConfig,
    }

    return config_map.get(env, Config)()


def validate_config(config: Config) -> List[str]:
    """Validate configuration settings."""
    errors = []

    if config.NUM_THREADS < 1:
        errors.append(f"RECON_NUM_THREADS must be >= 1, got {config.NUM_THREADS}")

    if config.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"Unknown log level: {config.LOG_LEVEL}")

    if not config.RESULTS_DB.startswith(("sqlite", "postgresql")):
        errors.append(f"Unsupported results database URL: {config.RESULTS_DB}")

    return errors
