import numpy as np
import pytest

from src.core.errors import ValidationError
from src.core.foldy_lax import (
    VolumeField,
    assemble_system,
    background_field,
    discrete_continuous_gap,
    lse_at_points,
    solve_continuous_lse,
    solve_lse,
    solve_system,
)
from src.core.geometry import build_cluster
from src.core.green import FreeSpaceGreen
from src.core.potentials import assemble_newtonian

P2 = 3.0


@pytest.fixture
def green(cube_rules, bg, cube):
    return FreeSpaceGreen(cube_rules[1], bg, cube)


@pytest.fixture
def traction(cube_rules):
    _, rule_bdry = cube_rules
    g = np.zeros((rule_bdry.size, 3))
    g[:, 0] = rule_bdry.normals[:, 0]
    return g


def test_single_inclusion_system_is_the_identity(cube, green):
    cluster = build_cluster(cube, 0.5, (1.0 / 3.0) ** 6)
    rhs = np.array([[1.0, 2.0, 3.0]])
    system = solve_system(assemble_system(cluster, green, P2, [1.0], rhs))
    assert np.allclose(system.matrix, np.eye(3))
    assert np.allclose(system.solution, rhs)
    assert system.stability_ratio() == pytest.approx(1.0)
    assert system.neumann_bound() == 0.0


def test_cluster_system_is_solved_to_rounding(cube, green, rng):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6)
    rhs = rng.normal(size=(cluster.count, 3))
    system = assemble_system(cluster, green, P2, np.ones(cluster.count), rhs)
    assert system.weight == pytest.approx(P2 * cluster.cell_volume)
    with pytest.raises(ValidationError, match="not solved"):
        system.residual()
    solved = solve_system(system)
    assert solved.residual() < 1e-12
    assert solved.condition >= 1.0
    assert solved.neumann_bound() > 0.0


def test_system_checks_the_beta_count(cube, green):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6)
    with pytest.raises(ValidationError, match="coefficients"):
        assemble_system(cluster, green, P2, [1.0, 1.0], np.zeros((cluster.count, 3)))


def test_background_field_needs_interior_targets(cube_rules, green, traction):
    _, rule_bdry = cube_rules
    inside = background_field(traction, rule_bdry, green, np.array([[0.1, 0.0, 0.0]]))
    assert inside.values.shape == (1, 3)
    assert inside.kind == "S"
    with pytest.raises(ValidationError, match="strictly inside"):
        background_field(traction, rule_bdry, green, np.array([[0.5, 0.0, 0.0]]))


def test_zero_shift_returns_the_source(cube_rules, green, traction):
    rule_vol, rule_bdry = cube_rules
    s = background_field(traction, rule_bdry, green, rule_vol)
    y = solve_continuous_lse(0.0, green, rule_vol, s)
    assert np.allclose(y.values, s.values)


def test_point_evaluation_agrees_with_the_nystrom_solution(cube_rules, green, traction):
    rule_vol, rule_bdry = cube_rules
    s = background_field(traction, rule_bdry, green, rule_vol)
    y = solve_continuous_lse(P2, green, rule_vol, s)
    at_nodes = lse_at_points(rule_vol.nodes, P2, green, y, s.values)
    assert discrete_continuous_gap(at_nodes, y.values) < 1e-10


def test_lse_with_zero_potential_is_the_identity(cube_rules, bg, rng):
    rule_vol, _ = cube_rules
    rhs = rng.normal(size=(rule_vol.size, 3))
    out = solve_lse(assemble_newtonian(rule_vol, bg), 0.0, rhs)
    assert np.allclose(out, rhs)
    with pytest.raises(ValidationError, match="rhs"):
        solve_lse(assemble_newtonian(rule_vol, bg), 1.0, rhs[:-1])


def test_gap_needs_a_nonzero_reference():
    with pytest.raises(ValidationError, match="vanishes"):
        discrete_continuous_gap(np.ones((2, 3)), np.zeros((2, 3)))
    assert discrete_continuous_gap(np.ones((2, 3)), np.ones((2, 3))) == 0.0


def test_volume_field_helpers(cube_b):
    field = VolumeField(rule=cube_b, values=np.ones((cube_b.size, 3)))
    assert field.inner(field) == pytest.approx(3.0)
    assert field.l2_norm() == pytest.approx(np.sqrt(3.0))
    parts = field.split(cube_b.size)
    assert len(parts) == cube_b.size
    with pytest.raises(ValidationError, match="equal blocks"):
        field.split(2)
    with pytest.raises(ValidationError, match="value count"):
        VolumeField(rule=cube_b, values=np.ones((2, 3)))
