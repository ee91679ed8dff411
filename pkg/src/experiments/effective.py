"""
Effective-medium experiment: per cluster size a, the tuned frequency, the
effective coefficients (𝒫², α, β) and the gap between the Foldy–Lax solution at
the centres and the continuous Lippmann–Schwinger solution sampled there. The
α law is fitted separately on single inclusions over larger a.
"""
import logging
import math
from typing import Dict

import numpy as np
import pandas as pd

from src.core.errors import ValidationError
from src.core.foldy_lax import (
    assemble_system,
    background_field,
    discrete_continuous_gap,
    lse_at_points,
    solve_continuous_lse,
    solve_system,
)
from src.core.nd_maps import FAMILY_NAMES, density_family
from src.core.resonance import alpha_law_fit, alpha_sweep, effective_parameters, spectral_gaps
from src.experiments.common import ExperimentResult, Workspace, tagged
from src.utils.helpers import fit_loglog

logger = logging.getLogger(__name__)


def source_density(ws: Workspace) -> np.ndarray:
    """The f_family-th member of the boundary density library."""
    index = ws.config.f_family
    if index > len(FAMILY_NAMES):
        raise ValidationError("experiment_cli", "run_effective", "f_family",
                              f"must not exceed {len(FAMILY_NAMES)}, got {index}")
    return density_family(ws.rule_bdry, index)[index - 1]


def effective_point(ws: Workspace, a: float, g: np.ndarray) -> Dict:
    spectrum = ws.spectrum()
    cluster = ws.cluster(a)
    setting = ws.setting(a)
    green = ws.green(setting.omega)
    params, w_field = effective_parameters(spectrum, setting, ws.bg, cluster, green, ws.threads)

    s_centers = background_field(g, ws.rule_bdry, green, cluster.centers)
    system = solve_system(assemble_system(cluster, green, params.p2, params.beta, s_centers.values))

    support = ws.support_rule(cluster)
    s_vol = background_field(g, ws.rule_bdry, green, support)
    y_cont = solve_continuous_lse(params.p2, green, support, s_vol)
    y_at_centers = lse_at_points(cluster.centers, params.p2, green, y_cont, s_centers.values)
    gap = discrete_continuous_gap(system.solution, y_at_centers)

    gaps = np.abs(spectral_gaps(setting, spectrum))
    beta = np.asarray(params.beta)
    row = {
        "a": a,
        "M": cluster.count,
        "count_ratio": cluster.count_ratio,
        "cell_edge": cluster.cell_edge,
        "omega": setting.omega,
        "P2": params.p2,
        "alpha": params.alpha,
        "alpha_over_cell": params.alpha / cluster.cell_volume,
        "w_norm": w_field.l2_norm(),
        "min_spectral_gap": float(gaps.min()),
        "beta_mean_re": float(np.mean(beta.real)),
        "beta_max_dev": float(np.max(np.abs(beta - 1.0))),
        "condition": system.condition,
        "residual": system.residual(),
        "stability_ratio": system.stability_ratio(),
        "neumann_bound": system.neumann_bound(),
        "fl_gap": gap,
    }
    logger.info(f"Effective point a={a:.4g}: M={cluster.count}, alpha={params.alpha:.4g}, gap={gap:.4g}")
    return row


def run_effective(ws: Workspace) -> ExperimentResult:
    g = source_density(ws)
    rows = []
    for a in ws.config.cluster.a_list:
        rows.append(effective_point(ws, a, g))
    table = pd.DataFrame(rows).sort_values("a", ascending=False).reset_index(drop=True)

    h = ws.config.cluster.h
    tuning = ws.config.tuning
    alpha_table = pd.DataFrame(alpha_sweep(ws.spectrum(), ws.bg, tuning.n0, tuning.c_n0, h,
                                           rho_tilde1=tuning.rho_tilde1))
    fit = alpha_law_fit(alpha_table["a"], alpha_table["alpha"], float(alpha_table["P2"].iloc[0]), h)
    gap_slope = None
    if len(table) >= 2 and np.all(table["fl_gap"] > 0):
        gap_slope, _ = fit_loglog(table["cell_edge"], table["fl_gap"])

    p2 = float(table["P2"].iloc[0])
    payload = {
        "P2": tagged(p2, "resonance_model.effective_p2"),
        "n0": ws.config.tuning.n0,
        "source_density": FAMILY_NAMES[ws.config.f_family - 1],
        "alpha_fit": tagged(fit, "resonance_model.alpha_law_fit"),
        "points": tagged(table.to_dict(orient="records"), "foldy_lax.solve_system"),
        "fl_gap_slope_in_cell_edge": tagged(gap_slope, "foldy_lax.discrete_continuous_gap"),
        "max_stability_ratio": tagged(float(table["stability_ratio"].max()), "foldy_lax.FoldyLaxSystem.stability_ratio"),
    }
    result = ExperimentResult(payload=payload, tables={"effective": table, "alpha": alpha_table})
    result.metric("P2", p2, "resonance_model.effective_p2")
    result.metric("alpha_fit_relative_to_p2", fit["relative_to_p2"], "resonance_model.alpha_law_fit")
    result.metric("fl_gap_last", float(table["fl_gap"].iloc[-1]), "foldy_lax.discrete_continuous_gap")
    if gap_slope is not None and not math.isfinite(gap_slope):
        gap_slope = None
    result.metric("fl_gap_slope", gap_slope, "foldy_lax.discrete_continuous_gap")
    return result
