"""
Neumann-to-Dirichlet pairings of the background, cluster and effective problems.

All three maps share one discretization. Their differences from the background
map are quadrature sums over the inclusions or over the cluster cells:

    ⟨Λ_D f; g⟩ = ⟨Λ_e f; g⟩ + ω²⟨(ρ₁ − ρ)v^g; u^f⟩_D
    ⟨Λ_P f; g⟩ = ⟨Λ_e f; g⟩ − 𝒫²⟨q^g; u^f⟩_{∪Ω_j}

The effective coefficient 𝒫² lives on the cluster cells ∪Ω_j, sampled by a
cell-aligned rule.

Pairings are bilinear (no conjugation).
"""
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.errors import ValidationError
from src.core.foldy_lax import VolumeField, background_field, solve_continuous_lse, solve_lse
from src.core.geometry import (
    DEFAULT_CELL_SUBDIVISION,
    ClusterGeometry,
    QuadratureRule,
    cluster_support_rule,
    concatenate_rules,
    inclusion_rules,
)
from src.core.green import GreenFunction
from src.core.potentials import BlockOperator
from src.core.resonance import FrequencySetting
from src.utils.helpers import fit_loglog

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
PAIRING_KINDS = ("e", "D", "P", "gap")
FAMILY_NAMES = (
    "traction_e1", "traction_e2", "traction_e3",
    "normal",
    "shear_e1", "shear_e2", "shear_e3",
    "harmonic_xy", "harmonic_quad",
)
REFERENCE_EPSILON = 0.1
MIN_SWEEP_POINTS = 3


@dataclass(frozen=True)
class NdPairing:
    value: complex
    kind: str
    inputs_hash: str
    parts: Dict[str, complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PAIRING_KINDS:
            raise ValidationError("nd_maps", "NdPairing", "kind", f"expected one of {PAIRING_KINDS}, got '{self.kind}'")

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "value": [self.value.real, self.value.imag],
            "inputs_hash": self.inputs_hash,
        }


def inputs_digest(*arrays, **settings) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype=complex).tobytes())
    for key in sorted(settings):
        h.update(f"{key}={settings[key]!r}".encode())
    return h.hexdigest()[:16]


def _check_density(values, rule_bdry: QuadratureRule, name: str, operation: str) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != (rule_bdry.size, 3):
        raise ValidationError("nd_maps", operation, name,
                              f"expected shape {(rule_bdry.size, 3)}, got {values.shape}")
    return values


def boundary_pairing(u, g, rule_bdry: QuadratureRule) -> complex:
    """Σ_j w_j u(y_j)·g(y_j)."""
    return complex(np.sum(rule_bdry.weights * np.sum(np.asarray(u) * np.asarray(g), axis=1)))


# ──────────────────────── TEST DENSITIES ────────────────────────

def density_family(rule_bdry: QuadratureRule, count: Optional[int] = None) -> List[np.ndarray]:
    """Fixed library of tractions, each normalized in L²(∂Ω).

    Constant tractions e_k, the normal traction ν, shear tractions ν × e_k and
    the vector harmonics x₁e₂ + x₂e₁ and (x₁² − x₂²)e₃.
    """
    if not rule_bdry.is_boundary:
        raise ValidationError("nd_maps", "density_family", "rule_bdry", "boundary rule must carry normals")
    count = len(FAMILY_NAMES) if count is None else count
    if not 1 <= count <= len(FAMILY_NAMES):
        raise ValidationError("nd_maps", "density_family", "count",
                              f"must lie in [1, {len(FAMILY_NAMES)}], got {count}")
    x = rule_bdry.nodes
    nu = rule_bdry.normals
    eye = np.eye(3)
    members = [np.tile(eye[k], (rule_bdry.size, 1)) for k in range(3)]
    members.append(nu.copy())
    members += [np.cross(nu, eye[k]) for k in range(3)]
    xy = np.zeros_like(x)
    xy[:, 0] = x[:, 1]
    xy[:, 1] = x[:, 0]
    members.append(xy)
    quad = np.zeros_like(x)
    quad[:, 2] = x[:, 0] ** 2 - x[:, 1] ** 2
    members.append(quad)

    out = []
    for values in members[:count]:
        norm = math.sqrt(float(np.sum(rule_bdry.weights * np.sum(values ** 2, axis=1))))
        out.append(values / norm)
    return out


# ──────────────────────── PAIRINGS ────────────────────────

def pairing_lambda_e(f, g, green: GreenFunction, rule_bdry: QuadratureRule,
                     expected_mode: Optional[str] = None) -> NdPairing:
    """⟨Λ_e f; g⟩ = Σ w·(u^f·g) with u^f = SL_Γ(f) on the boundary nodes."""
    if expected_mode is not None and green.mode != expected_mode:
        raise ValidationError("nd_maps", "pairing_lambda_e", "green",
                              f"Green evaluator is '{green.mode}' but the experiment expects '{expected_mode}'")
    f = _check_density(f, rule_bdry, "f", "pairing_lambda_e")
    g = _check_density(g, rule_bdry, "g", "pairing_lambda_e")
    if rule_bdry.digest() != green.rule_bdry.digest():
        raise ValidationError("nd_maps", "pairing_lambda_e", "rule_bdry",
                              "density rule differs from the Green evaluator's boundary rule")
    uf = green.single_layer(f, rule_bdry.nodes)
    value = boundary_pairing(uf, g, rule_bdry)
    return NdPairing(value=value, kind="e", inputs_hash=inputs_digest(f, g, mode=green.mode))


def inclusion_union(cluster: ClusterGeometry, rule_b: QuadratureRule) -> QuadratureRule:
    return concatenate_rules(inclusion_rules(cluster, rule_b), label=f"union(M={cluster.count})")


def solve_vg(cluster: ClusterGeometry, setting: FrequencySetting, rho: Callable, g, green: GreenFunction,
             rule_b: QuadratureRule, operator: Optional[BlockOperator] = None) -> List[VolumeField]:
    """v^g − ω²∫_D Γ(·, y)(ρ₁ − ρ(y))v^g(y) dy = S on all inclusion nodes at once."""
    union = operator.source_rule if operator is not None else inclusion_union(cluster, rule_b)
    if union.size != cluster.count * rule_b.size:
        raise ValidationError("nd_maps", "solve_vg", "operator",
                              "operator is not assembled on the union of inclusion rules")
    s = background_field(g, green.rule_bdry, green, union)
    contrast = setting.rho1 - np.asarray(rho(union.nodes), dtype=float)
    potential = -setting.omega ** 2 * contrast
    if not np.any(contrast):
        values = s.values.astype(complex)
    else:
        operator = operator or green.volume_operator(union)
        values = solve_lse(operator, potential, s.values, "solve_vg")
    logger.debug(f"Inclusion fields solved: M={cluster.count}, nodes={union.size}")
    return VolumeField(rule=union, values=values, kind="v").split(cluster.count)


def _joined(parts: Sequence[VolumeField]) -> VolumeField:
    rule = concatenate_rules([p.rule for p in parts], label="union")
    return VolumeField(rule=rule, values=np.vstack([p.values for p in parts]), kind=parts[0].kind)


def contrast_term(vg: Sequence[VolumeField], uf: VolumeField, setting: FrequencySetting,
                  rho: Callable) -> Tuple[complex, complex]:
    """(ω²ρ₁⟨v^g; u^f⟩_D, ω²⟨ρv^g; u^f⟩_D)."""
    v = _joined(vg)
    if v.rule.size != uf.rule.size or not np.allclose(v.rule.nodes, uf.rule.nodes):
        raise ValidationError("nd_maps", "pairing_lambda_d", "uf", "u^f is not sampled on the inclusion nodes")
    products = np.sum(v.values * uf.values, axis=1)
    weights = uf.rule.weights
    omega2 = setting.omega ** 2
    heavy = omega2 * setting.rho1 * complex(np.sum(weights * products))
    light = omega2 * complex(np.sum(weights * np.asarray(rho(uf.rule.nodes)) * products))
    return heavy, light


def pairing_lambda_d(f, g, vg: Sequence[VolumeField], uf: VolumeField, setting: FrequencySetting,
                     rho: Callable, base: NdPairing) -> NdPairing:
    """⟨Λ_D f; g⟩ = ⟨Λ_e f; g⟩ + ω²⟨(ρ₁ − ρ)v^g; u^f⟩_D."""
    if base.kind != "e":
        raise ValidationError("nd_maps", "pairing_lambda_d", "base", "expects the background pairing")
    heavy, light = contrast_term(vg, uf, setting, rho)
    return NdPairing(value=base.value + heavy - light, kind="D",
                     inputs_hash=inputs_digest(f, g, a=setting.a, omega=setting.omega),
                     parts={"e": base.value, "heavy": heavy, "light": light})


def pairing_lambda_p(f, g, qg: VolumeField, uf: VolumeField, p2: float, base: NdPairing) -> NdPairing:
    """⟨Λ_P f; g⟩ = ⟨Λ_e f; g⟩ − 𝒫²⟨q^g; u^f⟩ on the rule q^g and u^f share."""
    if base.kind != "e":
        raise ValidationError("nd_maps", "pairing_lambda_p", "base", "expects the background pairing")
    if qg.rule.digest() != uf.rule.digest():
        raise ValidationError("nd_maps", "pairing_lambda_p", "qg", "q^g and u^f live on different rules")
    effective = p2 * qg.inner(uf)
    return NdPairing(value=base.value - effective, kind="P", inputs_hash=inputs_digest(f, g, p2=p2),
                     parts={"e": base.value, "effective": effective})


# ──────────────────────── FULL STATE ────────────────────────

@dataclass
class NdState:
    """Everything one sweep point shares across (f, g) pairs."""
    cluster: ClusterGeometry
    setting: FrequencySetting
    p2: float
    green: GreenFunction
    rule_b: QuadratureRule
    rho: Callable
    subdivision: int = DEFAULT_CELL_SUBDIVISION
    _operators: Dict[str, BlockOperator] = field(default_factory=dict, repr=False)
    _rules: Dict[str, QuadratureRule] = field(default_factory=dict, repr=False)

    @property
    def rule_bdry(self) -> QuadratureRule:
        return self.green.rule_bdry

    def union_operator(self) -> BlockOperator:
        if "union" not in self._operators:
            self._operators["union"] = self.green.volume_operator(inclusion_union(self.cluster, self.rule_b))
        return self._operators["union"]

    @property
    def support_rule(self) -> QuadratureRule:
        if "support_rule" not in self._rules:
            self._rules["support_rule"] = cluster_support_rule(self.cluster, self.subdivision)
        return self._rules["support_rule"]

    def support_operator(self) -> BlockOperator:
        if "support" not in self._operators:
            self._operators["support"] = self.green.volume_operator(self.support_rule)
        return self._operators["support"]


def nd_fields(f, g, state: NdState) -> Dict:
    """u^f on D and on the cluster cells, v^g on D and q^g on the cluster cells."""
    green = state.green
    union_op = state.union_operator()
    uf_d = VolumeField(rule=union_op.source_rule, values=green.single_layer(f, union_op.source_rule.nodes), kind="u")
    support = state.support_rule
    uf_vol = VolumeField(rule=support, values=green.single_layer(f, support.nodes), kind="u")
    vg = solve_vg(state.cluster, state.setting, state.rho, g, green, state.rule_b, union_op)
    sg = background_field(g, state.rule_bdry, green, support)
    qg = solve_continuous_lse(state.p2, green, support, sg, state.support_operator())
    return {"uf_d": uf_d, "uf_vol": uf_vol, "vg": vg, "qg": qg}


def nd_gap(f, g, state: NdState, fields: Optional[Dict] = None) -> NdPairing:
    """𝖩 = ω²ρ₁⟨v^g; u^f⟩_D + 𝒫²⟨q^g; u^f⟩_{∪Ω_j} − ω²⟨ρv^g; u^f⟩_D."""
    fields = fields or nd_fields(f, g, state)
    heavy, light = contrast_term(fields["vg"], fields["uf_d"], state.setting, state.rho)
    effective = state.p2 * fields["qg"].inner(fields["uf_vol"])
    value = heavy + effective - light
    return NdPairing(value=value, kind="gap",
                     inputs_hash=inputs_digest(f, g, a=state.setting.a, p2=state.p2),
                     parts={"heavy": heavy, "effective": effective, "light": light})


def nd_pairings(f, g, state: NdState) -> Dict[str, NdPairing]:
    """Λ_e, Λ_D, Λ_P and 𝖩 for one (f, g) from a single set of fields."""
    fields = nd_fields(f, g, state)
    base = pairing_lambda_e(f, g, state.green, state.rule_bdry)
    return {
        "e": base,
        "D": pairing_lambda_d(f, g, fields["vg"], fields["uf_d"], state.setting, state.rho, base),
        "P": pairing_lambda_p(f, g, fields["qg"], fields["uf_vol"], state.p2, base),
        "gap": nd_gap(f, g, state, fields),
    }


# ──────────────────────── CONVERGENCE IN a ────────────────────────

def reference_slope(h: float, epsilon: float = REFERENCE_EPSILON) -> float:
    """Decay exponent (1 − h)(9 − 5ε)/(18(3 − ε)) drawn as a reference line."""
    return (1.0 - h) * (9.0 - 5.0 * epsilon) / (18.0 * (3.0 - epsilon))


def convergence_study(a_list: Sequence[float], build_state: Callable[[float], NdState], f, g,
                      workers: int = 1, progress: bool = False) -> Tuple[pd.DataFrame, Dict]:
    """|𝖩| along a sweep in a, with a log–log fit of |𝖩| against a.

    build_state maps a to the sweep point's NdState. Points are independent and
    may run concurrently; each point's solves stay sequential.
    """
    a_list = [float(a) for a in a_list]
    if len(a_list) < MIN_SWEEP_POINTS:
        raise ValidationError("nd_maps", "convergence_study", "a_list",
                              f"need ≥ {MIN_SWEEP_POINTS} points, got {len(a_list)}")

    def one(a: float) -> Dict:
        state = build_state(a)
        fields = nd_fields(f, g, state)
        gap = nd_gap(f, g, state, fields)
        return {
            "a": a,
            "M": state.cluster.count,
            "P2": state.p2,
            "h": state.cluster.h,
            "J_abs": abs(gap.value),
            "uf_norm_d": fields["uf_d"].l2_norm(),
            "vg_norm_d": math.sqrt(sum(v.l2_norm() ** 2 for v in fields["vg"])),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(one, a_list), total=len(a_list), desc="N-D sweep", disable=not progress))
    else:
        rows = [one(a) for a in tqdm(a_list, desc="N-D sweep", disable=not progress)]

    table = pd.DataFrame(rows).sort_values("a", ascending=False).reset_index(drop=True)
    log_a = np.log(table["a"].to_numpy())
    log_j = np.log(np.where(table["J_abs"] > 0, table["J_abs"], np.nan))
    running = np.full(len(table), np.nan)
    running[1:] = np.diff(log_j) / np.diff(log_a)
    table["exponent_running"] = running

    h = float(table["h"].iloc[0])
    summary = {"reference_slope": reference_slope(h), "epsilon": REFERENCE_EPSILON}
    if np.all(table["J_abs"].to_numpy() == 0):
        summary.update({"slope": None, "intercept": None, "note": "slope undefined: gap vanishes identically"})
        logger.warning("Convergence study: the gap vanishes for every a; slope undefined")
    else:
        slope, intercept = fit_loglog(table["a"].to_numpy(), table["J_abs"].to_numpy())
        p6 = float(table["P2"].iloc[0]) ** 3
        summary.update({
            "slope": slope,
            "intercept": intercept,
            "p6_prefactor": p6,
            "prefactor_ratio": float(np.max(table["J_abs"] / (p6 * table["a"] ** summary["reference_slope"]))),
        })
        logger.info(f"Convergence study: slope={slope:.4g}, reference={summary['reference_slope']:.4g}")
    return table.drop(columns=["h"]), summary
