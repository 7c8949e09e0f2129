from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.pool import StaticPool
import logging

from src.config.settings import RESULTS_DB
from src.db.models import Base

logger = logging.getLogger(__name__)


def make_engine(url: Optional[str] = None) -> Engine:
    """Engine for the results registry; SQLite by default."""
    url = url or RESULTS_DB
    if url.startswith("sqlite"):
        return create_engine(
            url,
            connect_args={"check_same_thread": False},
            poolclass=StaticPool,
            echo=False
        )
    return create_engine(url, echo=False)


def make_session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(engine: Engine) -> None:
    """Initialize database tables"""
    Base.metadata.create_all(bind=engine)
    logger.info("Results registry tables ready")


def reset_db(engine: Engine) -> None:
    """Drop and recreate all tables (for testing)"""
    Base.metadata.drop_all(bind=engine)
    Base.metadata.create_all(bind=engine)
    logger.info("Results registry reset")


def open_registry(url: Optional[str] = None, reset: bool = False) -> Session:
    """Create tables if needed (or drop and recreate them) and return a new session on `url`."""
    engine = make_engine(url)
    if reset:
        reset_db(engine)
    else:
        init_db(engine)
    return make_session_factory(engine)()
