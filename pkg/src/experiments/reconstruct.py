"""
Reconstruction experiment: Fourier data of ρ from CGO pairs, synthesis on the
period cube and, when p2_list is given, the linearization check along 𝒫².
"""
import logging
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.cgo import (
    acquire_data,
    cgo_field,
    fourier_datum_boundary,
    fourier_datum_volume_oracle,
    fourier_lattice,
    lattice_vector,
    make_cgo_pair,
    reconstruct_density,
    synthesis_remainder,
)
from src.core.errors import UnsupportedVariantError, ValidationError
from src.core.linearization import linearization_check
from src.core.nd_maps import density_family
from src.core.potentials import ShiftedNewtonian, assemble_np
from src.experiments.common import ExperimentResult, Workspace, tagged
from src.services.exporters import scalar_field

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
DEFAULT_OMEGA = 1.0


def _datum(ws: Workspace, p2: float, np_op: Optional[ShiftedNewtonian] = None) -> Callable:
    cgo = ws.config.cgo

    def oracle(n):
        pair = make_cgo_pair(lattice_vector(n, cgo.period), p2, ws.bg, cgo.variant, cgo.iota)
        return fourier_datum_volume_oracle(pair, ws.rho, ws.rule_vol) / pair.divisor

    def boundary(n):
        pair = make_cgo_pair(lattice_vector(n, cgo.period), p2, ws.bg, cgo.variant, cgo.iota)
        q1 = cgo_field(pair, 1, ws.rule_vol.nodes)
        rho = np.asarray(ws.rho(ws.rule_vol.nodes), dtype=float)[:, None]
        return fourier_datum_boundary(pair, np_op.trace(rho * q1), ws.rule_bdry, ws.bg)

    return oracle if ws.config.data_source == "oracle" else boundary


def linearization_records(ws: Workspace, omega: float) -> List[Dict]:
    f = density_family(ws.rule_bdry, 1)[0]
    rows = []
    for p2 in sorted(ws.config.p2_list):
        np_op = assemble_np(ws.rule_vol, ws.rule_bdry, ws.bg, p2)
        try:
            record = linearization_check(f, omega, ws.rho, np_op, ws.rule_bdry)
        except ValidationError as e:
            logger.warning(f"Linearization skipped at P2={p2}: {e}")
            rows.append({"p2": p2, "eta": None, "remainder_norm": None, "remainder_times_p4": None,
                         "second_born_norm": None, "norm": "surface_h1_surrogate", "skipped": str(e)})
            continue
        rows.append({**record.to_dict(), "skipped": None})
    return rows


def run_reconstruct(ws: Workspace) -> ExperimentResult:
    cgo = ws.config.cgo
    if cgo.variant != "remark":
        raise UnsupportedVariantError("experiment_cli", "run_reconstruct", "cgo.variant",
                                      "only the remark variant produces data; the theorem variant is a parameter skeleton")
    p2 = cgo.p2_override if cgo.p2_override is not None else ws.effective_p2()
    provenance = "cgo_reconstruction.fourier_datum_volume_oracle" if ws.config.data_source == "oracle" \
        else "cgo_reconstruction.fourier_datum_boundary"

    np_op = assemble_np(ws.rule_vol, ws.rule_bdry, ws.bg, p2) if ws.config.data_source == "boundary" else None
    indices = fourier_lattice(cgo.lattice_cut)
    data = acquire_data(indices, _datum(ws, p2, np_op), ws.threads)
    recon = reconstruct_density(data, cgo.lattice_cut, ws.rule_vol, cgo.period, truth=ws.rho)

    fourier = pd.DataFrame([
        {"xi1": n[0], "xi2": n[1], "xi3": n[2], "re": value.real, "im": value.imag}
        for n, value in recon.coeffs.items()
    ])
    omega = ws.config.omega if ws.config.omega is not None else DEFAULT_OMEGA
    remainder = synthesis_remainder(p2, cgo.iota, cgo.lattice_cut, omega, ws.bg, cgo.period)

    payload = {
        "P2": tagged(p2, "config.cgo.p2_override" if cgo.p2_override is not None else "resonance_model.effective_p2"),
        "data_source": ws.config.data_source,
        "reconstruction": tagged(recon.to_dict(), "cgo_reconstruction.reconstruct_density"),
        "synthesis_remainder": tagged(remainder, "cgo_reconstruction.synthesis_remainder"),
        "data_provenance": provenance,
    }
    tables = {"fourier": fourier}
    if ws.config.p2_list:
        records = linearization_records(ws, omega)
        payload["linearization"] = tagged(records, "linearization.linearization_check")
        tables["linearization"] = pd.DataFrame(records)

    result = ExperimentResult(payload=payload, tables=tables)
    result.fields["rho_reconstructed"] = scalar_field(ws.rule_vol, recon.values, "rho_centred")
    result.metric("relative_error", recon.relative_error, "cgo_reconstruction.reconstruct_density")
    result.metric("truncation_error_estimate", recon.truncation_error_estimate,
                  "cgo_reconstruction.reconstruct_density")
    result.metric("synthesis_remainder", remainder, "cgo_reconstruction.synthesis_remainder")
    return result
