import math

import numpy as np
import pytest

from src.core.elastic_kernels import (
    ElasticBackground,
    far_field_tensors,
    kelvin_tensor,
    kupradze_series,
    kupradze_tensor,
    lame_residual_fd,
    longitudinal_part,
    plane_wave,
    shifted_tensor,
    traction_fd,
    traction_kernel,
)
from src.core.errors import SingularEvaluationError, ValidationError


def _random_pairs(rng, count, r_min=0.5, r_max=2.0):
    y = rng.uniform(-0.5, 0.5, size=(count, 3))
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = rng.uniform(r_min, r_max, size=count)
    return y + r[:, None] * d, y


def test_kelvin_entries_at_unit_separation(bg):
    g = kelvin_tensor([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], bg)
    assert g[0, 0] == pytest.approx(1.0 / (4.0 * math.pi * bg.mu))
    assert g[1, 1] == pytest.approx(bg.gamma1 / (4.0 * math.pi))
    assert g[0, 1] == pytest.approx(0.0)


def test_kelvin_is_symmetric_and_reciprocal(bg_stiff, rng):
    x, y = _random_pairs(rng, 10)
    g_xy = kelvin_tensor(x, y, bg_stiff)
    g_yx = kelvin_tensor(y, x, bg_stiff)
    assert np.allclose(g_xy, np.swapaxes(g_xy, -1, -2), atol=1e-14)
    assert np.allclose(g_xy, g_yx, atol=1e-14)


def test_coincident_points_are_rejected(bg):
    with pytest.raises(SingularEvaluationError, match="kupradze_tensor"):
        kupradze_tensor([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], bg, omega=1.0)


@pytest.mark.parametrize("omega", [0.7, 2.0])
def test_kupradze_columns_solve_the_navier_equation(bg_stiff, rng, omega):
    x, y = _random_pairs(rng, 25)
    shift = omega ** 2 * bg_stiff.rho0
    worst = 0.0
    for xi, yi in zip(x, y):
        for col in range(3):
            def column(p, yi=yi, col=col):
                return kupradze_tensor(p, yi, bg_stiff, omega)[..., :, col]

            residual, scale = lame_residual_fd(column, xi, bg_stiff, shift=shift)
            worst = max(worst, float(np.linalg.norm(residual) / scale))
    assert worst < 1e-4


def test_shifted_tensor_solves_the_shifted_system(bg, rng):
    p2 = 4.0
    x, y = _random_pairs(rng, 10)
    for xi, yi in zip(x, y):
        def column(p, yi=yi):
            return shifted_tensor(p, yi, bg, p2)[..., :, 0]

        residual, scale = lame_residual_fd(column, xi, bg, shift=-p2)
        assert np.linalg.norm(residual) / scale < 1e-4
        assert np.max(np.abs(shifted_tensor(xi, yi, bg, p2).imag)) < 1e-12


@pytest.mark.parametrize("r", [0.3, 0.8, 3.0])
def test_series_matches_closed_form(bg, r):
    direction = np.array([1.0, 2.0, -2.0]) / 3.0
    x = r * direction
    closed = kupradze_tensor(x, np.zeros(3), bg, omega=1.0)
    series = kupradze_series(x, np.zeros(3), bg, omega=1.0, n_max=45)
    assert np.max(np.abs(series - closed)) < 1e-10 * np.max(np.abs(closed))


def test_series_at_zero_frequency_is_kelvin(bg_stiff):
    x = np.array([0.3, -0.2, 0.5])
    static = kupradze_series(x, np.zeros(3), bg_stiff, omega=0.0, n_max=5)
    assert np.allclose(static, kelvin_tensor(x, np.zeros(3), bg_stiff), atol=1e-14)


def test_series_rejects_negative_truncation(bg):
    with pytest.raises(ValidationError, match="n_max"):
        kupradze_series([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], bg, 1.0, -1)


def test_traction_kernel_matches_finite_differences(bg_stiff, rng):
    x, y = _random_pairs(rng, 5)
    k = bg_stiff.wavenumbers(1.3)
    nu = np.array([0.0, 0.6, 0.8])
    for xi, yi in zip(x, y):
        analytic = traction_kernel(xi, yi, nu, bg_stiff, k)
        for col in range(3):
            def column(p, yi=yi, col=col):
                return kupradze_tensor(p, yi, bg_stiff, wavenumbers=k)[..., :, col]

            fd = traction_fd(column, xi, nu, bg_stiff)
            assert np.linalg.norm(fd - analytic[:, col]) < 1e-6 * np.linalg.norm(analytic[:, col])


def test_far_field_asymptotics(bg):
    omega = 1.0
    xhat = np.array([0.0, 0.6, 0.8])
    y = np.array([0.1, -0.2, 0.05])
    r = 1e4
    near = kupradze_tensor(r * xhat, y, bg, omega) * r
    gp, gs = far_field_tensors(xhat, y, bg, omega)
    k_p, k_s = bg.wavenumbers(omega)
    approx = np.exp(1j * k_p * r) * gp + np.exp(1j * k_s * r) * gs
    assert np.max(np.abs(near - approx)) < 1e-2 * np.max(np.abs(approx))


def test_far_field_requires_unit_direction(bg):
    with pytest.raises(ValidationError, match="xhat"):
        far_field_tensors([1.0, 1.0, 0.0], [0.0, 0.0, 0.0], bg, 1.0)


@pytest.mark.parametrize("kind", ["p", "s"])
def test_plane_waves_solve_the_navier_equation(bg_stiff, rng, kind):
    omega = 2.0
    wave = plane_wave([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], bg_stiff, omega, kind)
    x = rng.uniform(-1.0, 1.0, size=(6, 3))
    residual, scale = lame_residual_fd(wave, x, bg_stiff, shift=omega ** 2 * bg_stiff.rho0)
    assert np.max(np.linalg.norm(residual, axis=-1) / scale) < 1e-5


def test_longitudinal_part_separates_wave_types(bg):
    omega = 2.0
    direction = np.array([0.6, 0.0, 0.8])
    p_wave = plane_wave(direction, None, bg, omega, "p")
    s_wave = plane_wave(direction, [0.0, 1.0, 0.0], bg, omega, "s")
    x = np.array([[0.1, 0.2, 0.3], [-0.4, 0.0, 0.25]])
    assert np.max(np.abs(longitudinal_part(p_wave, x, bg, omega) - p_wave(x))) < 1e-5
    assert np.max(np.abs(longitudinal_part(s_wave, x, bg, omega))) < 1e-5


def test_plane_wave_validation(bg):
    with pytest.raises(ValidationError, match="direction"):
        plane_wave([1.0, 1.0, 0.0], None, bg, 1.0)
    with pytest.raises(ValidationError, match="polarization"):
        plane_wave([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], bg, 1.0, "s")


def test_background_validation():
    with pytest.raises(ValidationError, match="mu"):
        ElasticBackground(lam=1.0, mu=0.0)
    with pytest.raises(ValidationError, match="lambda"):
        ElasticBackground(lam=-1.0, mu=1.0)
    with pytest.raises(ValidationError, match="omega"):
        ElasticBackground(lam=1.0, mu=1.0).wavenumbers(-1.0)
