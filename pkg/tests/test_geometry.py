import math

import numpy as np
import pytest

from src.core.elastic_kernels import plane_wave
from src.core.errors import EmptyClusterError, ValidationError
from src.core.geometry import (
    ClusterGeometry,
    Domain,
    QuadratureRule,
    ball_mean_inversion,
    boundary_quadrature,
    build_cluster,
    cluster_support_rule,
    concatenate_rules,
    distance_sums,
    inclusion_quadrature,
    inclusion_rules,
    mean_value_factor,
    spherical_mean,
    volume_quadrature,
)


def test_rule_measures(cube, ball):
    assert volume_quadrature(cube, 5).measure == pytest.approx(1.0, rel=1e-12)
    assert volume_quadrature(ball, 6).measure == pytest.approx(4.0 * math.pi / 3.0, rel=1e-12)
    assert boundary_quadrature(cube, 5).measure == pytest.approx(6.0, rel=1e-12)
    assert boundary_quadrature(ball, 6).measure == pytest.approx(4.0 * math.pi, rel=1e-12)


def test_sphere_rule_second_moments(ball):
    rule = boundary_quadrature(ball, 4)
    moments = np.einsum("i,ik,il->kl", rule.weights, rule.normals, rule.normals)
    assert np.allclose(moments, 4.0 * math.pi / 3.0 * np.eye(3), atol=1e-12)


def test_cube_surface_normals_point_outward(cube):
    rule = boundary_quadrature(cube, 3)
    assert np.allclose(np.einsum("ik,ik->i", rule.nodes, rule.normals), 0.5)


def test_transformed_rule_scales_its_measure(cube_b, cube):
    scaled = cube_b.transformed(scale=0.1, shift=(1.0, 2.0, 3.0))
    assert scaled.measure == pytest.approx(1e-3, rel=1e-12)
    assert np.allclose(scaled.nodes.mean(axis=0), [1.0, 2.0, 3.0])
    surface = boundary_quadrature(cube, 3).transformed(scale=2.0)
    assert surface.measure == pytest.approx(24.0, rel=1e-12)


def test_concatenated_rules_add_up(cube_b):
    parts = [cube_b.transformed(scale=0.5, shift=(k, 0.0, 0.0)) for k in range(3)]
    joined = concatenate_rules(parts)
    assert joined.size == 3 * cube_b.size
    assert joined.measure == pytest.approx(3 * 0.125)
    with pytest.raises(ValidationError, match="nothing to concatenate"):
        concatenate_rules([])


def test_rule_rejects_bad_weights():
    with pytest.raises(ValidationError, match="positive"):
        QuadratureRule(nodes=np.zeros((2, 3)), weights=[1.0, 0.0])
    with pytest.raises(ValidationError, match="one weight per node"):
        QuadratureRule(nodes=np.zeros((2, 3)), weights=[1.0])


def test_unsupported_shapes():
    with pytest.raises(ValidationError, match="unsupported"):
        Domain("torus")
    with pytest.raises(ValidationError, match="shape_b"):
        inclusion_quadrature("torus", 4)
    with pytest.raises(ValidationError, match="resolution"):
        inclusion_quadrature("ball", 1)


@pytest.mark.parametrize("n, expected", [(3, 1), (4, 8), (5, 27), (6, 64)])
def test_cluster_counts_on_the_unit_cube(cube, n, expected):
    cluster = build_cluster(cube, 0.5, (1.0 / n) ** 6, shape_b="cube")
    assert cluster.count == expected
    assert cluster.cell_edge == pytest.approx(1.0 / n)
    assert np.all(cluster.inclusion_distances() > 0)


def test_cluster_spacing_and_collar(cube):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6)
    assert cluster.spacing == pytest.approx(0.25)
    assert cluster.kappa == pytest.approx(0.125)
    assert np.min(cube.boundary_distance(cluster.centers)) - 0.125 >= cluster.kappa - 1e-12


def test_cluster_without_surviving_cells(cube):
    with pytest.raises(EmptyClusterError):
        build_cluster(cube, 0.5, 0.6 ** 6)


def test_cluster_inclusion_must_fit_its_cell(cube):
    with pytest.raises(ValidationError, match="does not fit"):
        build_cluster(cube, 0.5, 0.5)


@pytest.mark.parametrize("h", [0.2, 1.0 / 3.0, 1.0])
def test_cluster_rejects_out_of_range_exponent(cube, h):
    with pytest.raises(ValidationError, match="1/3 < h < 1"):
        build_cluster(cube, h, 1e-4)


def test_cluster_serialization(cube):
    cluster = build_cluster(cube, 0.5, (1.0 / 5.0) ** 6, shape_b="cube")
    restored = ClusterGeometry.from_dict(cluster.to_dict())
    assert restored.count == cluster.count
    assert np.array_equal(restored.centers, cluster.centers)
    assert restored.shape_b == "cube"
    assert restored.to_json() == cluster.to_json()


def test_inclusion_rules_are_scaled_copies(cube, cube_b):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6, shape_b="cube")
    rules = inclusion_rules(cluster, cube_b)
    assert len(rules) == 8
    for rule, z in zip(rules, cluster.centers):
        assert rule.measure == pytest.approx(cluster.a ** 3)
        assert np.allclose(rule.nodes.mean(axis=0), z)


@pytest.mark.parametrize("subdivision", [1, 2, 3])
def test_support_rule_tiles_the_cluster_cells(cube, subdivision):
    cluster = build_cluster(cube, 0.5, (1.0 / 5.0) ** 6)
    rule = cluster_support_rule(cluster, subdivision)
    assert rule.size == cluster.count * subdivision ** 3
    assert rule.measure == pytest.approx(cluster.count * cluster.cell_volume)
    offsets = rule.nodes.reshape(cluster.count, -1, 3) - cluster.centers[:, None, :]
    assert np.all(np.abs(offsets) < 0.5 * cluster.cell_edge)
    assert np.all(cube.contains(rule.nodes, clearance=cluster.kappa))


def test_support_rule_needs_a_positive_subdivision(cube):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6)
    with pytest.raises(ValidationError, match="subdivision"):
        cluster_support_rule(cluster, 0)
    assert np.allclose(cluster_support_rule(cluster, 1).nodes, cluster.centers)

def test_distance_sums_for_eight_cells(cube):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6)
    sums = distance_sums(cluster, 1.0)
    expected = (3.0 + 3.0 / math.sqrt(2.0) + 1.0 / math.sqrt(3.0)) / 0.25
    assert sums["pair_sum"] == pytest.approx(expected)
    assert sums["count"] == 8


def test_spherical_mean_of_a_plane_wave(bg):
    omega = 2.0
    wave = plane_wave([0.0, 0.0, 1.0], None, bg, omega, "p")
    k_p, _ = bg.wavenumbers(omega)
    center = np.array([0.1, -0.2, 0.3])
    r = 0.7
    mean = spherical_mean(wave, center, r)
    expected = np.sin(k_p.real * r) / (k_p.real * r) * wave(center)
    assert np.max(np.abs(mean - expected)) < 1e-10


def test_ball_mean_inversion_recovers_the_centre_value(bg):
    omega = 1.5
    wave = plane_wave([0.0, 0.6, 0.8], [1.0, 0.0, 0.0], bg, omega, "s")
    _, k_s = bg.wavenumbers(omega)
    center = np.array([0.2, 0.0, -0.1])
    recovered = ball_mean_inversion(wave, center, 1.0, k_s, resolution=16)
    assert np.max(np.abs(recovered - wave(center))) < 3e-2


def test_mean_value_factor_small_argument():
    t = 0.02
    series = 4.0 * math.pi * (t ** 3 / 3.0 - t ** 5 / 30.0 + t ** 7 / 840.0)
    assert mean_value_factor(1.0, t) == pytest.approx(series, rel=1e-9)
    assert mean_value_factor(1.0, 1e-3) == pytest.approx(4.0 * math.pi * 1e-9 / 3.0, rel=1e-5)
    with pytest.raises(ValidationError, match="radius"):
        spherical_mean(lambda x: x, np.zeros(3), 0.0)


def test_domain_area_and_interior(cube, ball):
    assert cube.area == pytest.approx(boundary_quadrature(cube, 3).measure)
    assert ball.area == pytest.approx(4.0 * math.pi)
    inside = cube.contains(np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.45, 0.0, 0.0]]), clearance=0.1)
    assert list(inside) == [True, False, False]
