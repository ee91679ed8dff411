"""
Result-file writers and loaders.

    result.json      canonical JSON (sorted keys, shortest float repr), schema "ecl-1"
    *.csv            pandas tables
    *.bin + *.json   little-endian complex128 row-major payload with a JSON sidecar
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd

from src.config.settings import SCHEMA_VERSION
from src.core.errors import ValidationError
from src.core.foldy_lax import VolumeField
from src.core.geometry import ClusterGeometry, QuadratureRule
from src.core.potentials import BlockOperator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and complex numbers into JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_plain(float(value.real)), _plain(float(value.imag))]
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def canonical_json(payload: Dict) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, repr floats."""
    return json.dumps(_plain(payload), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_result_json(path: PathLike, payload: Dict) -> Path:
    path = Path(path)
    body = dict(payload)
    body.setdefault("schema", SCHEMA_VERSION)
    path.write_text(canonical_json(body), encoding="utf-8")
    logger.debug(f"Result JSON written: {path}")
    return path


def load_result_json(path: PathLike) -> Dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema") != SCHEMA_VERSION:
        raise ValidationError("experiment_cli", "load_result_json", "schema",
                              f"expected '{SCHEMA_VERSION}', got '{data.get('schema')}'")
    return data


def write_table(path: PathLike, table: pd.DataFrame) -> Path:
    path = Path(path)
    table.to_csv(path, index=False, float_format="%.17g")
    return path


def load_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


# ──────────────────────── BINARY OPERATORS AND FIELDS ────────────────────────

def _write_binary(path: Path, matrix: np.ndarray, sidecar: Dict) -> Tuple[Path, Path]:
    data = np.ascontiguousarray(matrix, dtype="<c16")
    bin_path = path.with_suffix(".bin")
    meta_path = path.with_suffix(".json")
    data.tofile(bin_path)
    meta_path.write_text(canonical_json(sidecar), encoding="utf-8")
    return bin_path, meta_path


def _read_binary(path: Path) -> Tuple[np.ndarray, Dict]:
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.fromfile(path.with_suffix(".bin"), dtype="<c16")
    expected = meta["rows"] * meta["cols"]
    if data.size != expected:
        raise ValidationError("experiment_cli", "load_binary", "path",
                              f"payload has {data.size} entries, sidecar declares {expected}")
    return data.reshape(meta["rows"], meta["cols"]), meta


def write_operator(path: PathLike, op: BlockOperator) -> Tuple[Path, Path]:
    sidecar = {
        "rows": op.shape[0],
        "cols": op.shape[1],
        "source_rule_hash": op.source_rule.digest(),
        "target_rule_hash": op.target_rule.digest(),
    }
    return _write_binary(Path(path), op.matrix, sidecar)


def load_operator_matrix(path: PathLike) -> Tuple[np.ndarray, Dict]:
    """Raw matrix and sidecar (the rules themselves are identified by hash only)."""
    return _read_binary(Path(path))


def write_volume_field(path: PathLike, vf: VolumeField) -> Tuple[Path, Path]:
    """Values as an (N, 3) complex matrix; nodes and weights ride along in the sidecar."""
    sidecar = {
        "rows": vf.rule.size,
        "cols": 3,
        "source_rule_hash": vf.rule.digest(),
        "target_rule_hash": vf.rule.digest(),
        "kind": vf.kind,
        "nodes": vf.rule.nodes.tolist(),
        "weights": vf.rule.weights.tolist(),
    }
    return _write_binary(Path(path), vf.values, sidecar)


def load_volume_field(path: PathLike) -> VolumeField:
    values, meta = _read_binary(Path(path))
    rule = QuadratureRule(nodes=np.asarray(meta["nodes"]), weights=np.asarray(meta["weights"]))
    if rule.digest() != meta["source_rule_hash"]:
        raise ValidationError("experiment_cli", "load_volume_field", "path", "rule hash does not match the sidecar")
    return VolumeField(rule=rule, values=values, kind=meta.get("kind", ""))


def scalar_field(rule: QuadratureRule, values, kind: str) -> VolumeField:
    """A scalar nodal field in the volume-field format (value in the first column)."""
    padded = np.zeros((rule.size, 3), dtype=complex)
    padded[:, 0] = np.asarray(values).reshape(-1)
    return VolumeField(rule=rule, values=padded, kind=kind)


# ──────────────────────── GEOMETRY ────────────────────────

def write_cluster(path: PathLike, cluster: ClusterGeometry) -> Path:
    path = Path(path)
    path.write_text(canonical_json(cluster.to_dict()), encoding="utf-8")
    return path


def load_cluster(path: PathLike) -> ClusterGeometry:
    return ClusterGeometry.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
