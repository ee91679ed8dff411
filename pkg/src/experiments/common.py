"""
Shared plumbing for the experiments: building rules, Green evaluators and
tuned clusters from a validated configuration.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from src.config.settings import ExperimentConfig
from src.core.densities import make_density
from src.core.elastic_kernels import ElasticBackground
from src.core.foldy_lax import VolumeField
from src.core.geometry import (
    ClusterGeometry,
    Domain,
    QuadratureRule,
    boundary_quadrature,
    build_cluster,
    cluster_support_rule,
    inclusion_quadrature,
    volume_quadrature,
)
from src.core.green import GreenFunction, neumann_green
from src.core.potentials import NewtonSpectrum, newton_spectrum
from src.core.resonance import FrequencySetting, effective_p2, tune_frequency

logger = logging.getLogger(__name__)


def tagged(value: Any, provenance: str) -> Dict[str, Any]:
    """A reported number together with the operation that produced it."""
    return {"value": value, "provenance": provenance}


@dataclass
class ExperimentResult:
    """What an experiment hands back to the runner for writing."""
    payload: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    fields: Dict[str, VolumeField] = field(default_factory=dict)
    metrics: List[Dict[str, Any]] = field(default_factory=list)

    def metric(self, key: str, value: Optional[float], provenance: str) -> None:
        self.metrics.append({"key": key, "value": None if value is None else float(value),
                             "provenance": provenance})


@dataclass
class Workspace:
    config: ExperimentConfig
    bg: ElasticBackground
    domain: Domain
    rule_vol: QuadratureRule
    rule_bdry: QuadratureRule
    rule_b: QuadratureRule
    rho: Callable
    threads: int = 1
    progress: bool = False
    _spectrum: Optional[NewtonSpectrum] = field(default=None, repr=False)

    def spectrum(self) -> NewtonSpectrum:
        if self._spectrum is None:
            self._spectrum = newton_spectrum(self.rule_b, self.bg, self.config.tuning.n_count)
        return self._spectrum

    def effective_p2(self) -> float:
        tuning = self.config.tuning
        return effective_p2(self.spectrum(), tuning.n0, tuning.c_n0)

    def cluster(self, a: float) -> ClusterGeometry:
        c = self.config.cluster
        return build_cluster(self.domain, c.h, a, c.shape_b, c.kappa_factor)

    def support_rule(self, cluster: ClusterGeometry) -> QuadratureRule:
        """Cell-aligned rule on the region the cluster covers."""
        return cluster_support_rule(cluster, self.config.resolution.cell)

    def setting(self, a: float) -> FrequencySetting:
        t = self.config.tuning
        return tune_frequency(self.spectrum(), t.n0, t.c_n0, a, self.config.cluster.h, t.rho_tilde1)

    def green(self, omega: float = 0.0) -> GreenFunction:
        """Green evaluator of the background with density ρ at frequency ω."""
        return neumann_green(self.rule_vol, self.rule_bdry, self.bg, density_field=self.rho, omega=omega,
                             mode=self.config.green_mode, domain=self.domain)


def build_workspace(config: ExperimentConfig, threads: Optional[int] = None, progress: bool = False) -> Workspace:
    res = config.resolution
    bg = ElasticBackground(lam=config.bg.lam, mu=config.bg.mu, rho0=config.bg.rho0)
    domain = Domain(kind=config.domain)
    ws = Workspace(
        config=config,
        bg=bg,
        domain=domain,
        rule_vol=volume_quadrature(domain, res.vol),
        rule_bdry=boundary_quadrature(domain, res.bdry),
        rule_b=inclusion_quadrature(config.cluster.shape_b, res.inclusion),
        rho=make_density(config.density, config.bg.rho0),
        threads=threads or config.threads,
        progress=progress,
    )
    logger.info(f"Workspace ready: domain={domain.kind}, volume nodes={ws.rule_vol.size}, "
                f"boundary nodes={ws.rule_bdry.size}, inclusion nodes={ws.rule_b.size}")
    return ws
