import math

import numpy as np
import pytest

from src.core.densities import make_density
from src.core.errors import ValidationError
from src.core.geometry import build_cluster
from src.core.green import FreeSpaceGreen
from src.core.nd_maps import (
    FAMILY_NAMES,
    NdPairing,
    NdState,
    convergence_study,
    density_family,
    nd_pairings,
    pairing_lambda_d,
    pairing_lambda_e,
    reference_slope,
)
from src.core.potentials import newton_spectrum
from src.core.resonance import effective_p2, tune_frequency

H = 0.5
C_N0 = -1.0


@pytest.fixture
def state_factory(cube, cube_rules, cube_b, bg):
    _, rule_bdry = cube_rules
    spectrum = newton_spectrum(cube_b, bg, 4)
    green = FreeSpaceGreen(rule_bdry, bg, cube)
    p2 = effective_p2(spectrum, 1, C_N0)

    def build(a: float) -> NdState:
        return NdState(
            cluster=build_cluster(cube, H, a, shape_b="cube"),
            setting=tune_frequency(spectrum, 1, C_N0, a, H),
            p2=p2,
            green=green,
            rule_b=cube_b,
            rho=make_density("uniform"),
        )

    return build


def test_density_family_is_normalized(cube_rules):
    _, rule_bdry = cube_rules
    family = density_family(rule_bdry)
    assert len(family) == len(FAMILY_NAMES)
    for values in family:
        norm = math.sqrt(float(np.sum(rule_bdry.weights * np.sum(values ** 2, axis=1))))
        assert norm == pytest.approx(1.0)
    assert len(density_family(rule_bdry, 2)) == 2
    with pytest.raises(ValidationError, match="count"):
        density_family(rule_bdry, 10)


def test_density_family_needs_normals(cube_rules):
    rule_vol, _ = cube_rules
    with pytest.raises(ValidationError, match="normals"):
        density_family(rule_vol)


def test_background_pairing_is_symmetric(cube_rules, bg, cube):
    _, rule_bdry = cube_rules
    green = FreeSpaceGreen(rule_bdry, bg, cube)
    f, g = density_family(rule_bdry, 5)[3:5]
    fg = pairing_lambda_e(f, g, green, rule_bdry)
    gf = pairing_lambda_e(g, f, green, rule_bdry)
    assert fg.kind == "e"
    assert fg.value == pytest.approx(gf.value, rel=1e-12)


def test_pairing_checks_the_expected_mode(cube_rules, bg):
    _, rule_bdry = cube_rules
    green = FreeSpaceGreen(rule_bdry, bg)
    f = density_family(rule_bdry, 1)[0]
    with pytest.raises(ValidationError, match="expects 'corrected'"):
        pairing_lambda_e(f, f, green, rule_bdry, expected_mode="corrected")
    with pytest.raises(ValidationError, match="f"):
        pairing_lambda_e(f[:-1], f, green, rule_bdry)


def test_pairing_kind_is_validated():
    with pytest.raises(ValidationError, match="kind"):
        NdPairing(value=0j, kind="X", inputs_hash="")


def test_gap_is_the_difference_of_the_cluster_and_effective_maps(state_factory, cube_rules):
    _, rule_bdry = cube_rules
    state = state_factory((1.0 / 4.0) ** 6)
    f, g = density_family(rule_bdry, 2)
    pairings = nd_pairings(f, g, state)
    assert set(pairings) == {"e", "D", "P", "gap"}
    difference = pairings["D"].value - pairings["P"].value
    assert difference == pytest.approx(pairings["gap"].value, rel=1e-10, abs=1e-14)
    assert pairings["D"].parts["e"] == pairings["e"].value


def test_cluster_pairing_needs_the_background_pairing(state_factory, cube_rules):
    _, rule_bdry = cube_rules
    state = state_factory((1.0 / 4.0) ** 6)
    f = density_family(rule_bdry, 1)[0]
    bogus = NdPairing(value=0j, kind="P", inputs_hash="")
    with pytest.raises(ValidationError, match="background pairing"):
        pairing_lambda_d(f, f, [], None, state.setting, state.rho, bogus)


def test_convergence_study_table(state_factory, cube_rules):
    _, rule_bdry = cube_rules
    f = density_family(rule_bdry, 1)[0]
    a_list = [1.0e-3, (1.0 / 3.0) ** 6, 1.2e-3]
    table, summary = convergence_study(a_list, state_factory, f, f)
    assert list(table["a"]) == sorted(a_list, reverse=True)
    assert list(table["M"]) == [1, 1, 1]
    assert np.isnan(table["exponent_running"].iloc[0])
    assert summary["reference_slope"] == pytest.approx(reference_slope(H))
    assert "slope" in summary


def test_convergence_study_needs_three_points(state_factory, cube_rules):
    _, rule_bdry = cube_rules
    f = density_family(rule_bdry, 1)[0]
    with pytest.raises(ValidationError, match="need ≥ 3 points"):
        convergence_study([1e-3, 2e-3], state_factory, f, f)


def test_reference_slope_value():
    assert reference_slope(0.5) == pytest.approx(0.5 * 8.5 / (18.0 * 2.9))
