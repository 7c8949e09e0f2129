"""
Logging configuration for the reconstruction toolkit.
"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from src.config.settings import LOG_LEVEL, LOG_FILE

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Setup logging configuration.

    Args:
        level: Log level name; defaults to RECON_LOG_LEVEL.
        log_file: Optional rotating log file; defaults to RECON_LOG_FILE.
    """
    level = level or LOG_LEVEL
    log_file = log_file if log_file is not None else LOG_FILE

    # Create logs directory if it doesn't exist
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)

    # Configure root logger
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(),  # Console output
        ],
        force=True,
    )

    # Add file handler if specified
    if log_file:
        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(file_handler)

    # Set specific loggers
    logging.getLogger('sqlalchemy').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.debug("Logging configured successfully")


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance."""
    return logging.getLogger(name)
