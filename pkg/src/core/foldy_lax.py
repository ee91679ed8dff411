"""
Foldy–Lax point-interaction system and the continuous Lippmann–Schwinger equation.

Discrete:    Y_m + Σ_{j≠m} Γ(z_m, z_j)·𝒫²|Ω_j|·(1/β_j)·Y_j = S(z_m)
Continuous:  Y(z) + 𝒫²∫_{∪Ω_j} Γ(z, y)Y(y) dy = S(z)

The continuous equation carries 𝒫² on the cells the cluster occupies; the
volume rule passed in defines that region.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from src.core.errors import NumericalError, ValidationError
from src.core.geometry import ClusterGeometry, Domain, QuadratureRule
from src.core.green import GreenFunction
from src.core.potentials import BlockOperator, blocks_to_matrix, volume_potential_at

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
CONDITION_LIMIT = 1e12
COINCIDENT_CENTERS = 1e-12


@dataclass(frozen=True)
class VolumeField:
    """Vector field sampled at the nodes of a quadrature rule."""
    rule: QuadratureRule
    values: np.ndarray
    kind: str = ""

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.rule.size, 3):
            raise ValidationError("foldy_lax", "VolumeField", "values",
                                  f"value count {values.shape} does not match {self.rule.size} nodes")
        object.__setattr__(self, "values", values)

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    def l2_norm(self) -> float:
        return math.sqrt(float(np.sum(self.rule.weights * np.sum(np.abs(self.values) ** 2, axis=1))))

    def inner(self, other: "VolumeField", weight: Optional[np.ndarray] = None) -> complex:
        """Bilinear ∫ w·(self·other), optionally with a nodal weight function."""
        if other.rule.digest() != self.rule.digest():
            raise ValidationError("foldy_lax", "VolumeField.inner", "other", "fields live on different rules")
        products = np.sum(self.values * other.values, axis=1)
        if weight is not None:
            products = products * np.asarray(weight)
        return complex(np.sum(self.rule.weights * products))

    def split(self, parts: int) -> List["VolumeField"]:
        """Equal consecutive node blocks (one per inclusion of a concatenated rule)."""
        if self.rule.size % parts:
            raise ValidationError("foldy_lax", "VolumeField.split", "parts",
                                  f"{self.rule.size} nodes do not split into {parts} equal blocks")
        n = self.rule.size // parts
        out = []
        for p in range(parts):
            sl = slice(p * n, (p + 1) * n)
            rule = QuadratureRule(nodes=self.rule.nodes[sl], weights=self.rule.weights[sl],
                                  label=f"{self.rule.label}[{p}]")
            out.append(VolumeField(rule=rule, values=self.values[sl], kind=self.kind))
        return out


@dataclass(frozen=True)
class FoldyLaxSystem:
    centers: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    weight: float
    beta: np.ndarray
    solution: Optional[np.ndarray] = None
    condition: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def residual(self) -> float:
        if self.solution is None:
            raise ValidationError("foldy_lax", "FoldyLaxSystem.residual", "solution", "system not solved")
        r = self.matrix @ self.solution.reshape(-1) - self.rhs.reshape(-1)
        return float(np.linalg.norm(r) / max(np.linalg.norm(self.rhs), 1e-300))

    def stability_ratio(self) -> float:
        """(Σ|Y_m|²)^{1/2} / (Σ|S(z_m)|²)^{1/2}."""
        if self.solution is None:
            raise ValidationError("foldy_lax", "FoldyLaxSystem.stability_ratio", "solution", "system not solved")
        return float(np.linalg.norm(self.solution) / max(np.linalg.norm(self.rhs), 1e-300))

    def neumann_bound(self) -> float:
        """Σ of off-diagonal block norms, the one-step Neumann-series bound."""
        m = self.count
        blocks = self.matrix.reshape(m, 3, m, 3).transpose(0, 2, 1, 3)
        norms = np.linalg.norm(blocks, ord=2, axis=(2, 3))
        np.fill_diagonal(norms, 0.0)
        return float(np.max(np.sum(norms, axis=1)))


def as_rule(targets: Union[QuadratureRule, np.ndarray], weights: Optional[np.ndarray] = None) -> QuadratureRule:
    """Targets as a rule; bare points get the given (or unit) weights."""
    if isinstance(targets, QuadratureRule):
        return targets
    points = np.asarray(targets, dtype=float).reshape(-1, 3)
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    return QuadratureRule(nodes=points, weights=w, label="points")


def background_field(g, rule_bdry: QuadratureRule, green: GreenFunction,
                     targets: Union[QuadratureRule, np.ndarray], domain: Optional[Domain] = None) -> VolumeField:
    """S(x) = Σ_j w_j Γ(x, y_j)g(y_j) at interior targets."""
    rule = as_rule(targets)
    domain = domain or green.domain
    if domain is None:
        raise ValidationError("foldy_lax", "background_field", "domain",
                              "a domain is needed to check that targets are interior")
    if not np.all(domain.contains(rule.nodes)):
        raise ValidationError("foldy_lax", "background_field", "targets",
                              "targets must lie strictly inside the domain")
    if rule_bdry.digest() != green.rule_bdry.digest():
        raise ValidationError("foldy_lax", "background_field", "rule_bdry",
                              "density rule differs from the Green evaluator's boundary rule")
    values = green.single_layer(g, rule.nodes)
    return VolumeField(rule=rule, values=values, kind="S")


def assemble_system(cluster: ClusterGeometry, green: GreenFunction, p2: float, beta: Sequence[complex],
                    s_at_centers) -> FoldyLaxSystem:
    """Identity diagonal plus Γ(z_m, z_j)·𝒫²|Ω_j|/β_j off the diagonal."""
    centers = cluster.centers
    m = cluster.count
    beta = np.asarray(beta, dtype=complex).reshape(-1)
    rhs = np.asarray(s_at_centers, dtype=complex).reshape(m, 3)
    if beta.shape != (m,):
        raise ValidationError("foldy_lax", "assemble_system", "beta", f"expected {m} coefficients, got {beta.size}")
    if m > 1:
        dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        if dist.min() < COINCIDENT_CENTERS * max(1.0, float(np.abs(centers).max())):
            raise ValidationError("foldy_lax", "assemble_system", "centers", "coincident inclusion centres")

    weight = p2 * cluster.cell_volume
    blocks = green.interaction_blocks(centers) * (weight / beta)[None, :, None, None]
    idx = np.arange(m)
    blocks[idx, idx] = np.eye(3)
    return FoldyLaxSystem(centers=centers, matrix=blocks_to_matrix(blocks), rhs=rhs, weight=weight, beta=beta,
                          metadata={"mode": green.mode, "p2": p2})


def solve_system(system: FoldyLaxSystem) -> FoldyLaxSystem:
    """Dense LU solve with a 2-norm condition estimate."""
    try:
        condition = float(np.linalg.cond(system.matrix))
        lu = scipy.linalg.lu_factor(system.matrix)
        y = scipy.linalg.lu_solve(lu, system.rhs.reshape(-1))
    except (ValueError, scipy.linalg.LinAlgError) as e:
        logger.error(f"Error solving the Foldy-Lax system: {e}")
        raise NumericalError("foldy_lax", "solve_system", f"dense solve failed: {e}") from e
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NumericalError("foldy_lax", "solve_system", "system matrix is numerically singular",
                             {"condition": condition})
    logger.debug(f"Foldy-Lax system solved: M={system.count}, condition={condition:.3e}")
    return replace(system, solution=y.reshape(-1, 3), condition=condition)


def solve_lse(operator: BlockOperator, potential, rhs, operation: str = "solve_lse") -> np.ndarray:
    """Solve Y + K[potential·Y] = rhs for a volume operator K and a nodal scalar potential."""
    rhs = np.asarray(rhs)
    n = operator.source_rule.size
    if rhs.shape != (n, 3):
        raise ValidationError("foldy_lax", operation, "rhs", f"expected shape {(n, 3)}, got {rhs.shape}")
    pot = np.broadcast_to(np.asarray(potential, dtype=complex), (n,))
    system = np.eye(3 * n, dtype=complex) + operator.matrix * np.repeat(pot, 3)[None, :]
    try:
        sol = scipy.linalg.solve(system, rhs.reshape(-1).astype(complex))
    except (ValueError, scipy.linalg.LinAlgError) as e:
        logger.error(f"Error solving the Lippmann-Schwinger system: {e}")
        raise NumericalError("foldy_lax", operation, f"dense solve failed: {e}") from e
    return sol.reshape(n, 3)


def solve_continuous_lse(p2: float, green: GreenFunction, rule_vol: QuadratureRule, s: VolumeField,
                         operator: Optional[BlockOperator] = None) -> VolumeField:
    """Nyström solution of Y + 𝒫²∫ Γ(·, y)Y(y) dy = S over the region the rule covers."""
    if s.rule.digest() != rule_vol.digest():
        raise ValidationError("foldy_lax", "solve_continuous_lse", "s", "source field is not on the volume rule")
    if p2 == 0:
        return VolumeField(rule=rule_vol, values=s.values.astype(complex), kind="Y")
    operator = operator or green.volume_operator(rule_vol)
    values = solve_lse(operator, p2, s.values, "solve_continuous_lse")
    return VolumeField(rule=rule_vol, values=values, kind="Y")


def lse_at_points(points, p2: float, green: GreenFunction, y_cont: VolumeField, s_at_points) -> np.ndarray:
    """Y(z) = S(z) − 𝒫²Σ_i w_i Γ(z, y_i)Y_i by one local re-quadrature."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    rule = y_cont.rule
    blocks = volume_potential_at(points, rule, green.bg).astype(complex)
    blocks += green.remainder(points, rule.nodes) * rule.weights[None, :, None, None]
    applied = (blocks_to_matrix(blocks) @ y_cont.values.reshape(-1)).reshape(-1, 3)
    return np.asarray(s_at_points, dtype=complex).reshape(-1, 3) - p2 * applied


def discrete_continuous_gap(ys, y_at_centers) -> float:
    """RMS_m |Y_m − Y(z_m)| normalized by RMS_m |Y(z_m)|."""
    ys = np.asarray(ys).reshape(-1, 3)
    yc = np.asarray(y_at_centers).reshape(-1, 3)
    if ys.shape != yc.shape:
        raise ValidationError("foldy_lax", "discrete_continuous_gap", "y_at_centers",
                              f"shape {yc.shape} does not match {ys.shape}")
    scale = math.sqrt(float(np.mean(np.sum(np.abs(yc) ** 2, axis=1))))
    if scale == 0:
        raise ValidationError("foldy_lax", "discrete_continuous_gap", "y_at_centers", "reference field vanishes")
    return math.sqrt(float(np.mean(np.sum(np.abs(ys - yc) ** 2, axis=1)))) / scale
