import pytest

from src.config.settings import SCHEMA_VERSION, ExperimentConfig
from src.core.cgo import (
    cgo_field,
    cgo_traction,
    fourier_datum_boundary,
    fourier_datum_volume_oracle,
    lattice_vector,
    make_cgo_pair,
)
from src.core.densities import make_density
from src.core.geometry import boundary_quadrature, volume_quadrature
from src.core.potentials import assemble_np, l2_norm
from src.experiments.common import build_workspace
from src.experiments.reconstruct import linearization_records, run_reconstruct

P2 = 4.0


def reconstruct_config(**overrides) -> ExperimentConfig:
    raw = {
        "schema": SCHEMA_VERSION,
        "experiment": "reconstruct",
        "domain": "cube",
        "resolution": {"vol": 4, "bdry": 4, "inclusion": 2},
        "cgo": {"lattice_cut": 2, "p2_override": P2},
        "density": "cosine",
    }
    raw.update(overrides)
    return ExperimentConfig.model_validate(raw)


@pytest.mark.slow
def test_oracle_data_reconstruct_the_cosine_density():
    ws = build_workspace(reconstruct_config(resolution={"vol": 6, "bdry": 2, "inclusion": 2}))
    result = run_reconstruct(ws)
    metrics = {m["key"]: m["value"] for m in result.metrics}
    assert metrics["relative_error"] < 0.05
    assert result.payload["data_provenance"] == "cgo_reconstruction.fourier_datum_volume_oracle"
    fourier = result.tables["fourier"].set_index(["xi1", "xi2", "xi3"])
    assert fourier.loc[(1, 0, 0), "re"] == pytest.approx(0.15, abs=1e-3)
    assert fourier.loc[(0, 1, 0), "re"] == pytest.approx(0.0, abs=1e-3)
    assert result.fields["rho_reconstructed"].values.shape[0] == ws.rule_vol.size


@pytest.mark.parametrize("index", [(1, 0, 0), (0, 1, 0), (1, 1, 0)])
def test_boundary_datum_differs_from_the_oracle_by_the_neumann_residual(cube, bg, index):
    rule_vol, rule_bdry = volume_quadrature(cube, 4), boundary_quadrature(cube, 6)
    np_op = assemble_np(rule_vol, rule_bdry, bg, P2)
    rho = make_density("cosine")
    pair = make_cgo_pair(lattice_vector(index), P2, bg)
    weighted = rho(rule_vol.nodes)[:, None] * cgo_field(pair, 1, rule_vol.nodes)

    oracle = fourier_datum_volume_oracle(pair, rho, rule_vol) / pair.divisor
    boundary = fourier_datum_boundary(pair, np_op.trace(weighted), rule_bdry, bg)

    traction = cgo_traction(pair, 2, rule_bdry.nodes, rule_bdry.normals, bg)
    residual = np_op.single_layer.apply(traction) - cgo_field(pair, 2, rule_vol.nodes)
    bound = l2_norm(weighted, rule_vol) * l2_norm(residual, rule_vol) / abs(pair.divisor)
    assert abs(boundary - oracle) <= bound * (1.0 + 1e-9) + 1e-12


def test_neumann_residual_of_the_second_cgo_field_is_small(cube, bg):
    rule_vol, rule_bdry = volume_quadrature(cube, 4), boundary_quadrature(cube, 8)
    np_op = assemble_np(rule_vol, rule_bdry, bg, P2)
    pair = make_cgo_pair(lattice_vector((1, 0, 0)), P2, bg)
    exact = cgo_field(pair, 2, rule_vol.nodes)
    rebuilt = np_op.single_layer.apply(cgo_traction(pair, 2, rule_bdry.nodes, rule_bdry.normals, bg))
    assert l2_norm(rebuilt - exact, rule_vol) < 0.5 * l2_norm(exact, rule_vol)


def test_linearization_records_skip_shifts_where_the_series_diverges():
    ws = build_workspace(reconstruct_config(p2_list=[900.0, 9.0], omega=10.0))
    rows = linearization_records(ws, 10.0)
    assert [row["p2"] for row in rows] == [9.0, 900.0]
    skipped, kept = rows
    assert "below 1" in skipped["skipped"]
    assert skipped["remainder_times_p4"] is None
    assert kept["skipped"] is None
    assert kept["eta"] < 1.0
    assert kept["remainder_times_p4"] == pytest.approx(kept["remainder_norm"] * 900.0 ** 2, rel=1e-6)
    assert kept["norm"] == "surface_h1_surrogate"
