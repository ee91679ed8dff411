"""
N–D convergence experiment: |𝖩| = |⟨(Λ_D − Λ_P)f; g⟩| along the a-sweep for
every pair drawn from the first f_family boundary densities.
"""
import logging
from itertools import combinations_with_replacement
from typing import Dict

import pandas as pd

from src.core.errors import ValidationError
from src.core.nd_maps import FAMILY_NAMES, NdState, convergence_study, density_family
from src.experiments.common import ExperimentResult, Workspace, tagged

logger = logging.getLogger(__name__)


def run_nd_convergence(ws: Workspace) -> ExperimentResult:
    count = ws.config.f_family
    if count > len(FAMILY_NAMES):
        raise ValidationError("experiment_cli", "run_nd_convergence", "f_family",
                              f"must not exceed {len(FAMILY_NAMES)}, got {count}")
    family = density_family(ws.rule_bdry, count)
    p2 = ws.effective_p2()
    states: Dict[float, NdState] = {}

    # --- one state per a, shared by every (f, g) pair ---
    def build_state(a: float) -> NdState:
        if a not in states:
            setting = ws.setting(a)
            states[a] = NdState(cluster=ws.cluster(a), setting=setting, p2=p2, green=ws.green(setting.omega),
                                rule_b=ws.rule_b, rho=ws.rho,
                                subdivision=ws.config.resolution.cell)
        return states[a]

    for a in ws.config.cluster.a_list:
        build_state(a)

    tables = []
    summaries = []
    for i, j in combinations_with_replacement(range(count), 2):
        pair = f"{FAMILY_NAMES[i]}|{FAMILY_NAMES[j]}"
        table, summary = convergence_study(ws.config.cluster.a_list, build_state, family[i], family[j],
                                           workers=ws.threads, progress=ws.progress)
        table.insert(0, "pair", pair)
        tables.append(table)
        summaries.append({"pair": pair, **summary})
        logger.info(f"N-D pair {pair}: slope={summary.get('slope')}")

    table = pd.concat(tables, ignore_index=True)
    slopes = [s["slope"] for s in summaries if s.get("slope") is not None]
    payload = {
        "P2": tagged(p2, "resonance_model.effective_p2"),
        "reference_slope": tagged(summaries[0]["reference_slope"], "nd_maps.reference_slope"),
        "pairs": tagged(summaries, "nd_maps.convergence_study"),
    }
    result = ExperimentResult(payload=payload, tables={"nd_convergence": table})
    result.metric("P2", p2, "resonance_model.effective_p2")
    result.metric("slope_min", min(slopes) if slopes else None, "nd_maps.convergence_study")
    result.metric("slope_max", max(slopes) if slopes else None, "nd_maps.convergence_study")
    return result
