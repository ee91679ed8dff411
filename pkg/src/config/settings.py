"""
Experiment configuration: pydantic models, defaults and the JSON loader.

A configuration is one JSON document. The only environment variables read are
ECL_OUTPUT_ROOT (where run directories go) and ECL_REGISTRY_DB (the run
registry path).
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError
from pydantic import field_validator, model_validator

from src.core.errors import ConfigurationError

load_dotenv()

logger = logging.getLogger(__name__)

# ── Defaults ──────────────────────────────────────────────
SCHEMA_VERSION = "ecl-1"
EXPERIMENTS = ("spectrum", "effective", "nd_convergence", "reconstruct")
DEFAULT_C_N0 = -1.0
DEFAULT_H = 0.5
DEFAULT_A_LIST = [1.0 / 4.0 ** 6, 1.0 / 5.0 ** 6, 1.0 / 6.0 ** 6]
DEFAULT_LATTICE_CUT = 4
DEFAULT_CELL_SUBDIVISION = 2
DEFAULT_IOTA = 1.0
DEFAULT_N_COUNT = 8
REFERENCE_EPSILON = 0.1

# ── Environment ──────────────────────────────────────────────
ROOT_DIR = Path(__file__).resolve().parents[2]
OUTPUT_ROOT = Path(os.getenv("ECL_OUTPUT_ROOT", str(ROOT_DIR / "runs")))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class BackgroundConfig(_Section):
    lam: float = Field(1.0, alias="lambda")
    mu: float = 1.0
    rho0: float = 1.0

    @field_validator("mu", "rho0")
    @classmethod
    def _positive(cls, v, info):
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @model_validator(mode="after")
    def _ellipticity(self):
        if not 3.0 * self.lam + 2.0 * self.mu > 0:
            raise ValueError("Lamé parameters must satisfy 3λ + 2μ > 0")
        return self


class ClusterConfig(_Section):
    h: float = DEFAULT_H
    a_list: List[float] = Field(default_factory=lambda: list(DEFAULT_A_LIST))
    shape_b: Literal["ball", "cube"] = "ball"
    kappa_factor: float = 0.5

    @field_validator("h")
    @classmethod
    def _h_range(cls, v):
        if not 1.0 / 3.0 < v < 1.0:
            raise ValueError(f"h = {v} violates 1/3 < h < 1")
        return v

    @field_validator("a_list")
    @classmethod
    def _a_positive(cls, v):
        if not v:
            raise ValueError("a_list must not be empty")
        bad = [a for a in v if not 0 < a < 1]
        if bad:
            raise ValueError(f"every a must satisfy 0 < a < 1, got {bad}")
        return v

    @field_validator("kappa_factor")
    @classmethod
    def _kappa(cls, v):
        if not 0 <= v < 1:
            raise ValueError("kappa_factor must satisfy 0 ≤ κ < 1")
        return v


class TuningConfig(_Section):
    n0: int = 1
    c_n0: float = DEFAULT_C_N0
    rho_tilde1: float = 1.0
    n_count: int = DEFAULT_N_COUNT

    @field_validator("c_n0")
    @classmethod
    def _negative(cls, v):
        if not v < 0:
            raise ValueError(f"c_n0 = {v} must be a negative constant")
        return v

    @field_validator("n0", "n_count")
    @classmethod
    def _index(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("rho_tilde1")
    @classmethod
    def _rho_positive(cls, v):
        if not v > 0:
            raise ValueError("rho_tilde1 must be positive")
        return v

    @model_validator(mode="after")
    def _n0_in_range(self):
        if self.n0 > self.n_count:
            raise ValueError(f"n0 = {self.n0} exceeds the computed mode count {self.n_count}")
        return self


class CgoConfig(_Section):
    lattice_cut: int = DEFAULT_LATTICE_CUT
    iota: float = DEFAULT_IOTA
    p2_override: Optional[float] = None
    variant: Literal["remark", "theorem"] = "remark"
    period: float = 1.0

    @field_validator("lattice_cut")
    @classmethod
    def _cut(cls, v):
        if v < 1:
            raise ValueError("lattice_cut must be at least 1")
        return v

    @field_validator("iota", "period")
    @classmethod
    def _positive(cls, v, info):
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @field_validator("p2_override")
    @classmethod
    def _p2(cls, v):
        if v is not None and not v > 0:
            raise ValueError("p2_override must be positive")
        return v


class ResolutionConfig(_Section):
    vol: int = 6
    bdry: int = 6
    inclusion: int = 3
    cell: int = DEFAULT_CELL_SUBDIVISION

    @field_validator("vol", "bdry", "inclusion")
    @classmethod
    def _at_least_two(cls, v, info):
        if v < 2:
            raise ValueError(f"{info.field_name} resolution must be at least 2")
        return v

    @field_validator("cell")
    @classmethod
    def _at_least_one(cls, v):
        if v < 1:
            raise ValueError("cell subdivision must be at least 1")
        return v


class ExperimentConfig(_Section):
    schema_version: str = Field(SCHEMA_VERSION, alias="schema")
    experiment: Literal["spectrum", "effective", "nd_convergence", "reconstruct"]
    domain: Literal["ball", "cube"] = "cube"
    bg: BackgroundConfig = Field(default_factory=BackgroundConfig)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    tuning: TuningConfig = Field(default_factory=TuningConfig)
    cgo: CgoConfig = Field(default_factory=CgoConfig)
    resolution: ResolutionConfig = Field(default_factory=ResolutionConfig)
    seed: int = 0
    green_mode: Literal["free_space", "corrected"] = "corrected"
    threads: int = 1
    f_family: int = 2
    data_source: Literal["oracle", "boundary"] = "oracle"
    p2_list: List[float] = Field(default_factory=list)
    density: Literal["uniform", "cosine", "bump"] = "cosine"
    omega: Optional[float] = None

    @field_validator("schema_version")
    @classmethod
    def _schema(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema '{v}', expected '{SCHEMA_VERSION}'")
        return v

    @field_validator("threads", "f_family")
    @classmethod
    def _count(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("p2_list")
    @classmethod
    def _p2_list(cls, v):
        if any(not p > 0 for p in v):
            raise ValueError("every entry of p2_list must be positive")
        return v

    @field_validator("omega")
    @classmethod
    def _omega(cls, v):
        if v is not None and v < 0:
            raise ValueError("omega must be non-negative")
        return v

    @model_validator(mode="after")
    def _experiment_needs(self):
        if self.experiment == "nd_convergence" and len(self.cluster.a_list) < 3:
            raise ValueError(f"nd_convergence needs ≥ 3 points in cluster.a_list, got {len(self.cluster.a_list)}")
        if self.experiment == "reconstruct" and self.domain != "cube":
            raise ValueError("reconstruct synthesizes on the period cube; set domain to 'cube'")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


# ──────────────────────── LOADING ────────────────────────

def parse_config_text(text: str) -> Dict[str, Any]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON: {e.msg}", e.lineno, e.colno) from e
    if not isinstance(raw, dict):
        raise ConfigurationError("Configuration must be a JSON object", 1, 1)
    return raw


def read_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read configuration '{path}': {e.strerror}") from e
    return parse_config_text(text)


def _format_error(err: Dict[str, Any]) -> str:
    loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
    msg = err.get("msg", "invalid value")
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{loc}: {msg}"


def collect_violations(raw: Dict[str, Any]) -> List[str]:
    """Every violated precondition of a raw configuration, without computing anything."""
    try:
        ExperimentConfig.model_validate(raw)
    except PydanticValidationError as e:
        return [_format_error(err) for err in e.errors()]
    return []


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse and validate a configuration file."""
    raw = read_config(path)
    violations = collect_violations(raw)
    if violations:
        for v in violations:
            logger.error(f"Validation error: {v}")
        raise ConfigurationError("Invalid configuration: " + "; ".join(violations))
    return ExperimentConfig.model_validate(raw)


def output_root() -> Path:
    """Run-directory root, overridable through ECL_OUTPUT_ROOT."""
    return Path(os.getenv("ECL_OUTPUT_ROOT", str(OUTPUT_ROOT)))
