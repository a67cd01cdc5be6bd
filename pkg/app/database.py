"""Database models and connection setup for the run registry."""
from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, Index
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import sessionmaker
from datetime import datetime

from .config import DATABASE_URL

_url = DATABASE_URL
if _url.startswith("postgres://"):
    _url = _url.replace("postgres://", "postgresql://", 1)

_connect_args = {"check_same_thread": False} if _url.startswith("sqlite") else {}

engine = create_engine(
    _url,
    pool_pre_ping=True,
    connect_args=_connect_args,
)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


class RunRecord(Base):
    """One evaluated back-end of one simulated run."""
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, nullable=False, index=True)
    scenario = Column(String, nullable=False)
    backend = Column(String, nullable=False)
    seed = Column(Integer, nullable=False, default=0)
    mean = Column(Float, nullable=False)
    median = Column(Float, nullable=False)
    rmse = Column(Float, nullable=False)
    std = Column(Float, nullable=False)
    max = Column(Float, nullable=False)
    n = Column(Integer, nullable=False)
    max_jump = Column(Float, nullable=False, default=0.0)
    created_at = Column(DateTime, default=datetime.utcnow)

    __table_args__ = (
        Index('idx_run_records_scenario_backend', 'scenario', 'backend'),
    )


def init_db():
    """Creates all database tables if they don't exist."""
    Base.metadata.create_all(bind=engine)
