import logging
import os
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, List, Optional

from sqlalchemy import create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

# --- Create base ---
Base = declarative_base()

# --- SQLite setup with absolute paths ---
BASE_DIR = os.path.abspath(os.path.dirname(__file__))
ROOT_DIR = os.path.abspath(os.path.join(BASE_DIR, os.pardir, os.pardir))

_STATE = {"engine": None, "session": None, "url": None}


def registry_url() -> str:
    """SQLite URL of the run registry (ECL_REGISTRY_DB, else <output root>/runs.db)."""
    path = os.getenv("ECL_REGISTRY_DB")
    if not path:
        root = os.getenv("ECL_OUTPUT_ROOT", os.path.join(ROOT_DIR, "runs"))
        path = os.path.join(root, "runs.db")
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return f"sqlite:///{path}"


def _set_sqlite_pragma(dbapi_connection, connection_record):
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA journal_mode=WAL")
    cursor.execute("PRAGMA foreign_keys=ON")
    cursor.execute("PRAGMA synchronous=NORMAL")
    cursor.close()


def get_engine() -> Engine:
    """Engine for the current registry URL, rebuilt when the environment points elsewhere."""
    url = registry_url()
    if _STATE["engine"] is None or _STATE["url"] != url:
        if _STATE["engine"] is not None:
            _STATE["engine"].dispose()
        engine = create_engine(
            url,
            connect_args={
                "check_same_thread": False,
                "timeout": 30,
            },
            echo=False,  # --- Change to True for SQL debug ---
            pool_pre_ping=True,
        )
        event.listen(engine, "connect", _set_sqlite_pragma)
        _STATE.update(engine=engine, url=url,
                      session=sessionmaker(autocommit=False, autoflush=False, bind=engine))
    return _STATE["engine"]


# --- Import models after Base creation ---
from .models import RunMetric, RunRecord  # noqa: E402


@contextmanager
def get_db_session():
    """Context manager for safe database session handling."""
    get_engine()
    session = _STATE["session"]()
    try:
        yield session
        session.commit()
    except SQLAlchemyError as e:
        session.rollback()
        logger.error(f"Database error: {e}")
        raise
    except Exception as e:
        session.rollback()
        logger.error(f"Unexpected error: {e}")
        raise
    finally:
        session.close()


def init_db() -> None:
    """Create all database tables if they don't exist."""
    try:
        Base.metadata.create_all(bind=get_engine())
        logger.info("Database tables checked/created successfully.")
    except Exception as e:
        logger.error(f"Error initializing database tables: {e}")
        raise


# ──────────────────────── RUN FUNCTIONS ────────────────────────

def record_run_started(run_dir: str, experiment: str, config_digest: str) -> int:
    """Insert a running record and return its id (an existing record for the directory is reset)."""
    try:
        with get_db_session() as session:
            run = session.query(RunRecord).filter(RunRecord.run_dir == run_dir).first()
            if run:
                run.metrics.clear()
                run.experiment = experiment
                run.config_digest = config_digest
                run.result_digest = None
                run.status = "running"
                run.started_at = datetime.utcnow()
                run.finished_at = None
            else:
                run = RunRecord(run_dir=run_dir, experiment=experiment, config_digest=config_digest,
                                status="running", started_at=datetime.utcnow())
                session.add(run)
            session.flush()
            run_id = run.id
        logger.info(f"Run registered: ID {run_id} ({experiment})")
        return run_id
    except Exception as e:
        logger.error(f"Error registering run: {e}")
        raise


def record_run_finished(run_id: int, status: str, result_digest: Optional[str] = None,
                        metrics: Optional[List[Dict]] = None) -> None:
    """Close a run with its status, result digest and headline metrics."""
    try:
        with get_db_session() as session:
            run = session.query(RunRecord).filter(RunRecord.id == run_id).first()
            if not run:
                raise ValueError(f"Run not found: ID {run_id}")
            run.status = status
            run.result_digest = result_digest
            run.finished_at = datetime.utcnow()
            for m in metrics or []:
                run.metrics.append(RunMetric(key=m["key"], value=m.get("value"), provenance=m["provenance"]))
        logger.info(f"Run finished: ID {run_id} status={status}")
    except ValueError as e:
        logger.error(f"Validation error: {e}")
        raise
    except Exception as e:
        logger.error(f"Error finishing run: {e}")
        raise


def get_run_by_id(run_id: int) -> Optional[Dict]:
    try:
        with get_db_session() as session:
            run = session.query(RunRecord).filter(RunRecord.id == run_id).first()
            if not run:
                return None
            data = run.to_dict()
            data["metrics"] = [m.to_dict() for m in run.metrics]
            return data
    except Exception as e:
        logger.error(f"Error getting run {run_id}: {e}")
        return None


def get_run_by_dir(run_dir: str) -> Optional[Dict]:
    try:
        with get_db_session() as session:
            run = session.query(RunRecord).filter(RunRecord.run_dir == os.path.abspath(run_dir)).first()
            if not run:
                return None
            data = run.to_dict()
            data["metrics"] = [m.to_dict() for m in run.metrics]
            return data
    except Exception as e:
        logger.error(f"Error getting run for {run_dir}: {e}")
        return None


def list_runs(experiment: Optional[str] = None, limit: Optional[int] = None) -> List[Dict]:
    """Runs, newest first, optionally filtered by experiment."""
    try:
        with get_db_session() as session:
            query = session.query(RunRecord).order_by(RunRecord.id.desc())
            if experiment:
                query = query.filter(RunRecord.experiment == experiment)
            if limit:
                query = query.limit(limit)
            return [r.to_dict() for r in query.all()]
    except Exception as e:
        logger.error(f"Error listing runs: {e}")
        return []
