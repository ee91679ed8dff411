from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Index, Integer, String
from sqlalchemy.orm import relationship

from .database import Base


class RunRecord(Base):
    """One `run` invocation and the bundle it wrote."""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True, index=True)
    run_dir = Column(String, nullable=False, unique=True)
    experiment = Column(String, nullable=False, index=True)
    config_digest = Column(String, nullable=False)
    result_digest = Column(String, nullable=True)
    status = Column(String, nullable=False, default="running")
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    finished_at = Column(DateTime, nullable=True)

    metrics = relationship("RunMetric", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<RunRecord(id={self.id}, experiment='{self.experiment}', status='{self.status}')>"

    def to_dict(self):
        """Convert to dictionary for JSON serialization."""
        return {
            'id': self.id,
            'run_dir': self.run_dir,
            'experiment': self.experiment,
            'config_digest': self.config_digest,
            'result_digest': self.result_digest,
            'status': self.status,
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None,
        }


class RunMetric(Base):
    """Headline number of a run, tagged with the operation that produced it."""
    __tablename__ = 'run_metrics'

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey('runs.id', ondelete='CASCADE'), nullable=False)
    key = Column(String, nullable=False)
    value = Column(Float, nullable=True)
    provenance = Column(String, nullable=False)

    run = relationship("RunRecord", back_populates="metrics")

    def __repr__(self):
        return f"<RunMetric(run_id={self.run_id}, key='{self.key}', value={self.value})>"

    def to_dict(self):
        return {
            'run_id': self.run_id,
            'key': self.key,
            'value': self.value,
            'provenance': self.provenance,
        }


# --- Index for lookups of one run's metrics ---
Index('idx_metric_run_key', RunMetric.run_id, RunMetric.key)
