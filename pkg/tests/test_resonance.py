from dataclasses import replace

import numpy as np
import pytest

from src.core import resonance
from src.core.densities import make_density
from src.core.errors import NumericalError, ValidationError
from src.core.geometry import build_cluster
from src.core.green import FreeSpaceGreen, neumann_green
from src.core.potentials import assemble_newtonian, newton_spectrum
from src.core.resonance import (
    ALPHA_SWEEP,
    alpha_law_fit,
    alpha_sweep,
    beta_coefficients,
    effective_p2,
    effective_parameters,
    scattering_alpha,
    solve_w,
    spectral_gaps,
    spectral_projection,
    tune_frequency,
)

H = 0.5
C_N0 = -1.0


@pytest.fixture
def spectrum(cube_b, bg):
    return newton_spectrum(cube_b, bg, 6)


@pytest.fixture
def corrected_green(cube_rules, bg, cube):
    rule_vol, rule_bdry = cube_rules

    def build(omega: float):
        return neumann_green(rule_vol, rule_bdry, bg, density_field=make_density("uniform"),
                             omega=omega, domain=cube)

    return build


def tuned_beta(spectrum, bg, cube, green_factory, n: int):
    a = (1.0 / n) ** 6
    cluster = build_cluster(cube, H, a, shape_b="cube")
    setting = tune_frequency(spectrum, 1, C_N0, a, H)
    params, w = effective_parameters(spectrum, setting, bg, cluster, green_factory(setting.omega))
    return cluster, params, w


def test_tuned_gap_is_c_times_a_to_the_h(spectrum):
    a = 1e-4
    setting = tune_frequency(spectrum, 1, C_N0, a, H)
    gaps = spectral_gaps(setting, spectrum)
    assert gaps[0] == pytest.approx(C_N0 * a ** H, rel=1e-9)
    assert setting.omega > setting.omega0
    assert setting.rho1 == pytest.approx(1e8)
    assert setting.to_dict()["lambda_b"] == spectrum.eigenvalues[0]


@pytest.mark.parametrize("kwargs, parameter", [
    ({"c_n0": 1.0}, "c_n0"),
    ({"h": 0.2}, "h"),
    ({"a": 0.0}, "a"),
    ({"n0": 7}, "n0"),
    ({"rho_tilde1": -1.0}, "rho_tilde1"),
])
def test_tuning_preconditions(spectrum, kwargs, parameter):
    args = {"n0": 1, "c_n0": C_N0, "a": 1e-4, "h": H}
    args.update(kwargs)
    with pytest.raises(ValidationError) as info:
        tune_frequency(spectrum, **args)
    assert info.value.parameter == parameter


def test_effective_p2_formula(spectrum):
    p2 = effective_p2(spectrum, 1, -2.0)
    assert p2 == pytest.approx(spectrum.coupling(1) / (2.0 * spectrum.eigenvalues[0]))
    assert p2 > 0
    with pytest.raises(ValidationError, match="negative"):
        effective_p2(spectrum, 1, 0.5)


def test_resolvent_solves_its_equation(spectrum, bg):
    a = 1e-3
    setting = tune_frequency(spectrum, 1, C_N0, a, H)
    rule_d = spectrum.rule.transformed(scale=a)
    w = solve_w(rule_d, setting, bg)
    newton = assemble_newtonian(rule_d, bg).matrix
    flat = w.values.reshape(-1, 3)
    residual = flat / setting.contrast - newton @ flat - np.tile(np.eye(3), (rule_d.size, 1))
    assert np.max(np.abs(residual)) < 1e-8 * np.max(np.abs(flat / setting.contrast))


def test_scattering_coefficient_follows_the_effective_shift(spectrum, bg):
    a = 1e-6
    setting = tune_frequency(spectrum, 1, C_N0, a, H)
    rule_d = spectrum.rule.transformed(scale=a)
    alpha = scattering_alpha(solve_w(rule_d, setting, bg), rule_d)
    p2 = effective_p2(spectrum, 1, C_N0)
    assert alpha < 0
    assert alpha / a ** (1.0 - H) == pytest.approx(-p2, rel=5e-2)


def test_alpha_rejects_a_foreign_rule(spectrum, bg):
    setting = tune_frequency(spectrum, 1, C_N0, 1e-3, H)
    w = solve_w(spectrum.rule.transformed(scale=1e-3), setting, bg)
    with pytest.raises(ValidationError, match="different rule"):
        scattering_alpha(w, spectrum.rule)
    with pytest.raises(ValidationError, match="share one rule"):
        spectral_projection(w, spectrum)


def test_resolvent_concentrates_on_the_resonant_cluster(spectrum, bg):
    setting = tune_frequency(spectrum, 1, C_N0, 1e-6, H)
    setting = replace(setting, a=1.0)
    w = solve_w(spectrum.rule, setting, bg)
    projections = spectral_projection(w, spectrum)
    strength = np.array([np.linalg.norm(p) for p in projections])
    resonant = spectrum.cluster(1)
    assert strength[resonant].max() > 10.0 * np.delete(strength, resonant).max(initial=0.0)


def test_effective_parameters_with_free_space_coupling(spectrum, bg, cube, cube_rules):
    a = (1.0 / 4.0) ** 6
    cluster = build_cluster(cube, H, a, shape_b="cube")
    setting = tune_frequency(spectrum, 1, C_N0, a, H)
    params, w = effective_parameters(spectrum, setting, bg, cluster, FreeSpaceGreen(cube_rules[1], bg))
    assert np.all(params.beta == 1.0)
    assert params.alpha == pytest.approx(scattering_alpha(w))
    assert params.p2 == pytest.approx(effective_p2(spectrum, 1, C_N0))
    assert params.to_dict()["beta_stats"]["max_dev"] == 0.0


def test_alpha_law_fit_recovers_exact_coefficients():
    a = np.array([0.04, 0.02, 0.01])
    fit = alpha_law_fit(a, -2.0 * a ** 0.5 + 3.0 * a, 2.0, 0.5)
    assert fit["c_cell"] == pytest.approx(-2.0)
    assert fit["c_linear"] == pytest.approx(3.0)
    assert fit["relative_to_p2"] == pytest.approx(0.0, abs=1e-10)
    assert alpha_law_fit([0.04], [-0.4], 2.0, 0.5)["c_cell"] is None


def test_alpha_sweep_recovers_the_effective_shift(spectrum, bg):
    rows = alpha_sweep(spectrum, bg, 1, C_N0, H)
    assert [row["a"] for row in rows] == list(ALPHA_SWEEP)
    assert all(row["alpha"] < 0 for row in rows)
    p2 = effective_p2(spectrum, 1, C_N0)
    fit = alpha_law_fit([row["a"] for row in rows], [row["alpha"] for row in rows], p2, H)
    assert fit["c_cell"] == pytest.approx(-p2, rel=0.1)
    assert fit["relative_to_p2"] < 0.1


def test_beta_is_one_without_a_boundary_correction(spectrum, bg, cube, cube_rules):
    cluster = build_cluster(cube, H, (1.0 / 5.0) ** 6, shape_b="cube")
    setting = tune_frequency(spectrum, 1, C_N0, cluster.a, H)
    w = solve_w(spectrum.rule.transformed(scale=cluster.a), setting, bg)
    beta = beta_coefficients(cluster, w, FreeSpaceGreen(cube_rules[1], bg, cube))
    assert beta.shape == (27,)
    assert np.all(beta == 1.0)


def test_beta_deviates_most_next_to_the_collar(spectrum, bg, cube, corrected_green):
    cluster, params, _ = tuned_beta(spectrum, bg, cube, corrected_green, 6)
    deviation = np.abs(params.beta - 1.0)
    inner = np.max(np.abs(cluster.centers), axis=1) < 0.5 * cluster.cell_edge + 1e-9
    assert inner.sum() == 8
    assert deviation[~inner].max() > deviation[inner].max()
    assert np.all(np.abs(params.beta) > resonance.BETA_FLOOR)


@pytest.mark.slow
def test_beta_deviation_shrinks_with_the_cell_area(spectrum, bg, cube, corrected_green):
    a_values, deviations = [], []
    for n in (4, 5, 6):
        cluster, params, _ = tuned_beta(spectrum, bg, cube, corrected_green, n)
        a_values.append(cluster.a)
        deviations.append(float(np.max(np.abs(params.beta - 1.0))))
    slope = np.polyfit(np.log(a_values), np.log(deviations), 1)[0]
    assert slope == pytest.approx(2.0 * (1.0 - H) / 3.0, abs=0.3)


def test_small_beta_is_reported_as_a_numerical_failure(spectrum, bg, cube, corrected_green, monkeypatch):
    cluster = build_cluster(cube, H, (1.0 / 4.0) ** 6, shape_b="cube")
    setting = tune_frequency(spectrum, 1, C_N0, cluster.a, H)
    w = solve_w(spectrum.rule.transformed(scale=cluster.a), setting, bg)
    monkeypatch.setattr(resonance, "BETA_FLOOR", 10.0)
    with pytest.raises(NumericalError, match="too small") as info:
        beta_coefficients(cluster, w, corrected_green(setting.omega))
    assert info.value.diagnostics["min_abs_beta"] < 10.0
