"""
Run orchestration: validated config in, result bundle on disk, registry updated.

A run directory holds
    config.json          canonical echo of the validated configuration
    result.json          versioned result payload (schema "ecl-1")
    <table>.csv          plot-ready series
    <field>.bin/.json    volume fields
"""
import logging
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

from src.config.settings import SCHEMA_VERSION, ExperimentConfig, output_root
from src.core.database import init_db, record_run_finished, record_run_started
from src.core.errors import ExperimentError, ValidationError
from src.core.potentials import configure_workers
from src.experiments.common import ExperimentResult, Workspace, build_workspace
from src.experiments.effective import run_effective
from src.experiments.nd_convergence import run_nd_convergence
from src.experiments.reconstruct import run_reconstruct
from src.experiments.spectrum import run_spectrum
from src.services.exporters import write_result_json, write_table, write_volume_field
from src.utils.helpers import digest_file, digest_payload

logger = logging.getLogger(__name__)

EXPERIMENT_MAP: Dict[str, Callable[[Workspace], ExperimentResult]] = {
    "spectrum": run_spectrum,
    "effective": run_effective,
    "nd_convergence": run_nd_convergence,
    "reconstruct": run_reconstruct,
}


@dataclass(frozen=True)
class RunOutputs:
    run_id: int
    run_dir: Path
    result_path: Path
    result_digest: str
    payload: Dict


def config_digest(config: ExperimentConfig) -> str:
    return digest_payload(config.to_dict())


def default_run_dir(config: ExperimentConfig) -> Path:
    """<output root>/<experiment>-<first 12 hex of the config digest>."""
    return output_root() / f"{config.experiment}-{config_digest(config)[:12]}"


def _write_bundle(run_dir: Path, config: ExperimentConfig, result: ExperimentResult) -> Path:
    write_result_json(run_dir / "config.json", config.to_dict())
    body = {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "config_digest": config_digest(config),
        "seed": config.seed,
        "result": result.payload,
        "tables": sorted(f"{name}.csv" for name in result.tables),
        "fields": sorted(f"{name}.bin" for name in result.fields),
    }
    for name, table in result.tables.items():
        write_table(run_dir / f"{name}.csv", table)
    for name, vf in result.fields.items():
        write_volume_field(run_dir / name, vf)
    return write_result_json(run_dir / "result.json", body)


def run_experiment(config: ExperimentConfig, out: Optional[Union[str, Path]] = None,
                   threads: Optional[int] = None, progress: bool = False) -> RunOutputs:
    """Execute one experiment and persist its bundle; partial output is removed on failure."""
    run_dir = Path(os.path.abspath(out)) if out else Path(os.path.abspath(default_run_dir(config)))
    if run_dir.exists() and any(run_dir.iterdir()) and not (run_dir / "result.json").exists():
        raise ExperimentError(config.experiment, ValidationError(
            "experiment_cli", "run", "out", f"'{run_dir}' exists and is not a run bundle"))
    workers = threads or config.threads
    configure_workers(workers)

    init_db()
    run_id = record_run_started(str(run_dir), config.experiment, config_digest(config))
    staging = run_dir.with_name(run_dir.name + ".partial")
    try:
        shutil.rmtree(staging, ignore_errors=True)
        staging.mkdir(parents=True)
        ws = build_workspace(config, threads=workers, progress=progress)
        result = EXPERIMENT_MAP[config.experiment](ws)
        _write_bundle(staging, config, result)
        # --- the bundle only appears under its final name once complete ---
        shutil.rmtree(run_dir, ignore_errors=True)
        staging.rename(run_dir)
        result_path = run_dir / "result.json"
    except Exception as e:
        logger.error(f"Error running experiment '{config.experiment}': {e}")
        shutil.rmtree(staging, ignore_errors=True)
        record_run_finished(run_id, "failed")
        raise ExperimentError(config.experiment, e) from e

    digest = digest_file(str(result_path))
    record_run_finished(run_id, "completed", digest, result.metrics)
    logger.info(f"Run completed: {run_dir} (result sha256 {digest[:12]})")
    return RunOutputs(run_id=run_id, run_dir=run_dir, result_path=result_path, result_digest=digest,
                      payload=result.payload)
