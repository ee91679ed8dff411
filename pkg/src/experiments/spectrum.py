"""
Spectrum experiment: leading eigenpairs of N_B, their couplings to constants and
the scaling law λ_n(aB) = a²λ_n(B).
"""
import logging

import pandas as pd

from src.core.potentials import newton_spectrum
from src.experiments.common import ExperimentResult, Workspace, tagged

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
SCALING_FACTORS = (0.5, 0.25)


def run_spectrum(ws: Workspace) -> ExperimentResult:
    spectrum = ws.spectrum()
    n0 = ws.config.tuning.n0
    table = pd.DataFrame({
        "n": range(1, len(spectrum.eigenvalues) + 1),
        "eigenvalue": spectrum.eigenvalues,
        "coupling": spectrum.couplings,
    })

    rows = []
    for a in SCALING_FACTORS:
        scaled = newton_spectrum(ws.rule_b.transformed(scale=a), ws.bg, 1)
        ratio = float(scaled.eigenvalues[0] / (a ** 2 * spectrum.eigenvalues[0]))
        rows.append({"a": a, "lambda1": float(scaled.eigenvalues[0]), "ratio_to_a2_lambda1": ratio})
    scaling = pd.DataFrame(rows)

    provenance = "potential_operators.newton_spectrum"
    payload = {
        "eigenvalues": tagged(spectrum.eigenvalues.tolist(), provenance),
        "couplings": tagged(spectrum.couplings.tolist(), provenance),
        "resonant_cluster": tagged([int(i) + 1 for i in spectrum.cluster(n0)], "potential_operators.NewtonSpectrum.cluster"),
        "coupling_n0": tagged(spectrum.coupling(n0), "potential_operators.NewtonSpectrum.coupling"),
        "scaling": tagged(rows, provenance),
    }
    result = ExperimentResult(payload=payload, tables={"spectrum": table, "scaling": scaling})
    result.metric("lambda_1", spectrum.eigenvalues[0], provenance)
    result.metric("coupling_n0", spectrum.coupling(n0), "potential_operators.NewtonSpectrum.coupling")
    logger.info(f"Spectrum experiment: lambda_1={spectrum.eigenvalues[0]:.6g}")
    return result
