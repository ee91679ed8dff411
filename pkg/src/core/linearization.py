"""
First-order linearization of the effective N–D map in the density ρ.

    Q^f = SL^𝒫(f)                         (L − 𝒫²)Q = 0,  ∂_νQ = f
    𝒲^{Q^f} = 𝒩^𝒫(ρQ^f)
    q^f = (I − ω²𝒩^𝒫ρ)^{-1}Q^f             effective field, traction f
    Λ_P(f) − γQ^f = ω²γ𝒲^{Q^f} + remainder

The remainder starts with the second Born term ω⁴γ𝒩^𝒫(ρ𝒩^𝒫(ρQ^f)).
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from src.core.densities import density_sup
from src.core.elastic_kernels import ElasticBackground
from src.core.errors import ValidationError
from src.core.foldy_lax import VolumeField, solve_lse
from src.core.geometry import QuadratureRule
from src.core.potentials import ShiftedNewtonian, assemble_np, l2_norm, surface_norm

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
ETA_LIMIT = 1.0


@dataclass(frozen=True)
class QfField:
    """Q^f on the volume rule together with its trace on the boundary nodes."""
    volume: VolumeField
    boundary: np.ndarray
    p2: float

    def l2_norm(self) -> float:
        return self.volume.l2_norm()


@dataclass(frozen=True)
class LinearizedRecord:
    qf: QfField
    wqf: VolumeField
    boundary_lhs: np.ndarray
    boundary_rhs: np.ndarray
    remainder: np.ndarray
    remainder_norm: float
    second_born: np.ndarray
    second_born_norm: float
    eta: float
    f_norm: float

    @property
    def p2(self) -> float:
        return self.qf.p2

    @property
    def remainder_times_p4(self) -> float:
        """remainder_norm·𝒫⁴/‖f‖."""
        return self.remainder_norm * self.p2 ** 2 / self.f_norm

    def to_dict(self) -> Dict:
        return {
            "p2": self.p2,
            "eta": self.eta,
            "remainder_norm": self.remainder_norm,
            "remainder_times_p4": self.remainder_times_p4,
            "second_born_norm": self.second_born_norm,
            "norm": "surface_h1_surrogate",
        }


def _sample(rho: Callable, rule: QuadratureRule) -> np.ndarray:
    values = np.asarray(rho(rule.nodes), dtype=float).reshape(-1)
    if values.shape != (rule.size,):
        raise ValidationError("linearization", "sample_density", "rho",
                              f"sampler returned {values.shape}, expected ({rule.size},)")
    return values


def solve_qf(f, p2: float, bg: Optional[ElasticBackground], rule_vol: QuadratureRule, rule_bdry: QuadratureRule,
             np_op: Optional[ShiftedNewtonian] = None) -> QfField:
    """Q^f = SL^𝒫(f) on the volume rule and on the boundary nodes."""
    f = np.asarray(f)
    if f.shape != (rule_bdry.size, 3):
        raise ValidationError("linearization", "solve_qf", "f", f"expected shape {(rule_bdry.size, 3)}, got {f.shape}")
    if np_op is None:
        if bg is None:
            raise ValidationError("linearization", "solve_qf", "bg", "a background is needed to assemble SL^𝒫")
        np_op = assemble_np(rule_vol, rule_bdry, bg, p2)
    if not math.isclose(np_op.p2, p2, rel_tol=1e-12):
        raise ValidationError("linearization", "solve_qf", "np_op", f"assembled at 𝒫²={np_op.p2}, requested {p2}")
    volume = VolumeField(rule=rule_vol, values=np_op.single_layer.apply(f), kind="Q")
    boundary = np_op.boundary_single_layer.apply(f)
    return QfField(volume=volume, boundary=boundary, p2=p2)


def solve_wqf(qf: VolumeField, rho: Callable, np_op: ShiftedNewtonian) -> VolumeField:
    """𝒲^{Q^f} = 𝒩^𝒫(ρ·Q^f) by one operator application."""
    if qf.rule.digest() != np_op.volume.source_rule.digest():
        raise ValidationError("linearization", "solve_wqf", "np_op", "operator and Q^f live on different rules")
    weighted = _sample(rho, qf.rule)[:, None] * qf.values
    return VolumeField(rule=qf.rule, values=np_op.volume.apply(weighted), kind="W")


def compute_eta(omega: float, rho: Callable, np_op: ShiftedNewtonian) -> float:
    """η = ω²‖ρ‖_∞‖𝒩^𝒫‖, the ratio of the geometric series for q^f."""
    return omega ** 2 * density_sup(rho, np_op.volume.source_rule) * np_op.volume.norm()


def solve_qf_effective(qf: QfField, omega: float, rho: Callable, np_op: ShiftedNewtonian) -> VolumeField:
    """q^f = Q^f + ω²𝒩^𝒫(ρq^f) through the shared Lippmann–Schwinger solve."""
    rho_values = _sample(rho, qf.volume.rule)
    values = solve_lse(np_op.volume, -omega ** 2 * rho_values, qf.volume.values, "solve_qf_effective")
    return VolumeField(rule=qf.volume.rule, values=values, kind="q")


def linearization_check(f, omega: float, rho: Callable, np_op: ShiftedNewtonian,
                        rule_bdry: QuadratureRule) -> LinearizedRecord:
    """Both sides of Λ_P(f) − γQ^f = ω²γ𝒲^{Q^f} + remainder, with the remainder's surrogate norm.

    Λ_P(f) is the trace of the effective field q^f, whose traction is f.
    """
    eta = compute_eta(omega, rho, np_op)
    if not eta < ETA_LIMIT:
        raise ValidationError("linearization", "linearization_check", "omega",
                              f"geometric-series ratio η = {eta:.4g} must be below 1")
    rule_vol = np_op.volume.source_rule
    qf = solve_qf(f, np_op.p2, None, rule_vol, rule_bdry, np_op)
    rho_values = _sample(rho, rule_vol)[:, None]
    wqf = solve_wqf(qf.volume, rho, np_op)
    q_eff = solve_qf_effective(qf, omega, rho, np_op)

    omega2 = omega ** 2
    lhs = omega2 * np_op.trace(rho_values * q_eff.values)
    rhs = omega2 * np_op.trace(rho_values * qf.volume.values)
    remainder = lhs - rhs
    second_born = omega2 ** 2 * np_op.trace(rho_values * wqf.values)

    f_norm = l2_norm(f, rule_bdry)
    record = LinearizedRecord(
        qf=qf,
        wqf=wqf,
        boundary_lhs=lhs,
        boundary_rhs=rhs,
        remainder=remainder,
        remainder_norm=surface_norm(remainder, rule_bdry),
        second_born=second_born,
        second_born_norm=surface_norm(second_born, rule_bdry),
        eta=eta,
        f_norm=f_norm,
    )
    logger.info(f"Linearization check: P2={np_op.p2}, eta={eta:.3g}, "
                f"remainder*P4/|f|={record.remainder_times_p4:.4g}")
    return record


def duality_gap(phi, f, np_op: ShiftedNewtonian, rule_bdry: QuadratureRule) -> float:
    """|∫_Ω φ·SL^𝒫(f) − ∫_∂Ω f·γ𝒩^𝒫(φ)| relative to the larger side."""
    rule_vol = np_op.volume.source_rule
    volume_side = np.sum(rule_vol.weights * np.sum(np.asarray(phi) * np_op.single_layer.apply(f), axis=1))
    boundary_side = np.sum(rule_bdry.weights * np.sum(np.asarray(f) * np_op.trace(phi), axis=1))
    scale = max(abs(volume_side), abs(boundary_side), 1e-300)
    return float(abs(volume_side - boundary_side) / scale)
