"""
Small numeric and hashing helpers shared by the experiments.
"""
import hashlib
import json
import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from src.core.errors import ValidationError

logger = logging.getLogger(__name__)


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope and intercept of log|y| against log x (positive pairs only)."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(keep) < 2:
        raise ValidationError("experiment_cli", "fit_loglog", "y", "need at least two positive samples")
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)


def digest_payload(payload: Dict) -> str:
    """sha256 of the canonical JSON text of a payload."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
