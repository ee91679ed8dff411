import math

import numpy as np
import pytest

from src.core.cgo import (
    cgo_field,
    cgo_traction,
    fourier_datum_volume_oracle,
    fourier_lattice,
    lattice_vector,
    make_cgo_pair,
    reconstruct_density,
    remainder_bound,
    synthesis_remainder,
)
from src.core.densities import make_density
from src.core.elastic_kernels import lame_residual_fd, traction_fd
from src.core.errors import UnsupportedVariantError, ValidationError
from src.core.geometry import volume_quadrature

P2 = 4.0


@pytest.mark.parametrize("index", [(1, 0, 0), (1, 2, 0), (-2, 1, 2), (0, 0, 3)])
def test_remark_pair_invariants(bg_stiff, index):
    xi = lattice_vector(index)
    pair = make_cgo_pair(xi, P2, bg_stiff)
    scale = 1.0 + pair.s ** 2
    for name, value in pair.invariants().items():
        assert value < 1e-12 * scale, name
    assert pair.divisor.real == pytest.approx(-2.0 - 4.0 * P2 / (bg_stiff.mu * pair.s ** 2))


def test_theorem_pair_invariants(bg):
    pair = make_cgo_pair(lattice_vector((1, 1, 0)), P2, bg, variant="theorem", iota=0.5, omega=1.0)
    assert pair.t > pair.k_s
    for name, value in pair.invariants().items():
        assert value < 1e-10 * (1.0 + pair.t ** 2), name


def test_remark_fields_solve_the_shifted_system(bg):
    pair = make_cgo_pair(lattice_vector((1, 0, 0)), P2, bg)
    x = np.array([[0.1, -0.2, 0.3], [0.0, 0.4, -0.1]])
    for which in (1, 2):
        residual, scale = lame_residual_fd(lambda p, w=which: cgo_field(pair, w, p), x, bg, shift=-P2)
        assert np.max(np.linalg.norm(residual, axis=-1) / scale) < 1e-4


def test_cgo_traction_matches_finite_differences(bg_stiff):
    pair = make_cgo_pair(lattice_vector((0, 1, 1)), P2, bg_stiff)
    x = np.array([0.2, 0.1, -0.3])
    nu = np.array([0.0, 0.6, 0.8])
    analytic = cgo_traction(pair, 2, x, nu, bg_stiff)
    fd = traction_fd(lambda p: cgo_field(pair, 2, p), x, nu, bg_stiff)
    assert np.linalg.norm(fd - analytic) < 1e-6 * np.linalg.norm(analytic)


def test_product_of_the_pair_is_a_plane_wave(bg):
    xi = lattice_vector((1, -1, 2))
    pair = make_cgo_pair(xi, P2, bg)
    x = np.array([[0.3, 0.2, -0.1], [-0.4, 0.1, 0.25]])
    product = np.sum(cgo_field(pair, 1, x) * cgo_field(pair, 2, x), axis=1)
    expected = pair.divisor * np.exp(-1j * (x @ xi))
    assert np.allclose(product, expected, rtol=1e-10)


def test_pair_preconditions(bg):
    with pytest.raises(ValidationError, match="nonzero"):
        make_cgo_pair(np.zeros(3), P2, bg)
    with pytest.raises(ValidationError, match="positive"):
        make_cgo_pair(lattice_vector((1, 0, 0)), 0.0, bg)
    with pytest.raises(ValidationError, match="iota"):
        make_cgo_pair(lattice_vector((1, 0, 0)), P2, bg, variant="theorem")
    with pytest.raises(ValidationError, match="variant"):
        make_cgo_pair(lattice_vector((1, 0, 0)), P2, bg, variant="other")


def test_theorem_fields_are_not_available(bg):
    pair = make_cgo_pair(lattice_vector((1, 0, 0)), P2, bg, variant="theorem", iota=0.5)
    with pytest.raises(UnsupportedVariantError):
        cgo_field(pair, 1, np.zeros((1, 3)))


def test_fourier_lattice():
    assert len(fourier_lattice(2)) == 124
    assert len(fourier_lattice(2, include_zero=True)) == 125
    assert (0, 0, 0) not in fourier_lattice(1)
    with pytest.raises(ValidationError, match="lattice_cut"):
        fourier_lattice(0)


def test_oracle_reconstruction_of_a_single_mode(cube, bg):
    rule = volume_quadrature(cube, 6)
    rho = make_density("cosine")
    cut = 2

    def datum(n):
        pair = make_cgo_pair(lattice_vector(n), P2, bg)
        return fourier_datum_volume_oracle(pair, rho, rule) / pair.divisor

    data = {n: datum(n) for n in fourier_lattice(cut)}
    result = reconstruct_density(data, cut, rule, truth=rho)
    assert result.mean == pytest.approx(1.0)
    assert result.relative_error < 0.05
    assert result.conjugate_asymmetry < 1e-10
    assert data[(1, 0, 0)] == pytest.approx(0.15, abs=1e-10)
    assert result.to_dict()["coefficient_count"] == 124


def test_reconstruction_reports_missing_data(cube):
    rule = volume_quadrature(cube, 3)
    data = {n: 0j for n in fourier_lattice(1)}
    data.pop((1, 0, 0))
    with pytest.raises(ValidationError, match=r"missing lattice entries: \(1, 0, 0\)"):
        reconstruct_density(data, 1, rule)


def test_synthesis_remainder_decays_with_the_shift(bg):
    small = synthesis_remainder(10.0, 0.5, 2, 1.0, bg)
    large = synthesis_remainder(100.0, 0.5, 2, 1.0, bg)
    assert large < small
    xi = lattice_vector((1, 0, 0))
    expected = P2 / math.sqrt(P2 ** 2.5 + float(xi @ xi) / 4.0)
    assert remainder_bound(P2, 0.5, xi, 0.0, bg) == pytest.approx(expected)
    with pytest.raises(ValidationError, match="iota"):
        remainder_bound(P2, 0.0, xi, 0.0, bg)
