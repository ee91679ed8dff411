import json

import numpy as np
import pandas as pd
import pytest

from src.config.settings import SCHEMA_VERSION
from src.core.errors import ValidationError
from src.core.foldy_lax import VolumeField
from src.core.geometry import build_cluster
from src.core.potentials import assemble_newtonian
from src.services.exporters import (
    canonical_json,
    load_cluster,
    load_operator_matrix,
    load_result_json,
    load_table,
    load_volume_field,
    scalar_field,
    write_cluster,
    write_operator,
    write_result_json,
    write_table,
    write_volume_field,
)


def test_canonical_json_is_key_order_independent():
    first = canonical_json({"b": 1.0, "a": [1, 2], "c": {"y": 0.1, "x": None}})
    second = canonical_json({"c": {"x": None, "y": 0.1}, "a": [1, 2], "b": 1.0})
    assert first == second
    assert first.endswith("\n")


def test_canonical_json_plain_values():
    data = json.loads(canonical_json({
        "z": 1.5 - 2.0j,
        "nan": float("nan"),
        "arr": np.array([1.0, 2.0]),
        "n": np.int64(3),
        "flag": np.bool_(True),
    }))
    assert data["z"] == [1.5, -2.0]
    assert data["nan"] is None
    assert data["arr"] == [1.0, 2.0]
    assert data["n"] == 3
    assert data["flag"] is True


def test_result_json_carries_the_schema(tmp_path):
    path = write_result_json(tmp_path / "result.json", {"experiment": "spectrum"})
    assert load_result_json(path)["schema"] == SCHEMA_VERSION
    path.write_text(json.dumps({"schema": "ecl-0"}), encoding="utf-8")
    with pytest.raises(ValidationError, match="expected 'ecl-1'"):
        load_result_json(path)


def test_tables_keep_full_precision(tmp_path):
    table = pd.DataFrame({"a": [1.0 / 3.0, 2.0 ** -20], "M": [1, 8]})
    loaded = load_table(write_table(tmp_path / "t.csv", table))
    assert list(loaded["a"]) == pytest.approx(list(table["a"]), rel=1e-15)
    assert list(loaded["M"]) == [1, 8]


def test_operator_payload_and_sidecar(tmp_path, cube_b, bg):
    op = assemble_newtonian(cube_b, bg)
    bin_path, meta_path = write_operator(tmp_path / "newton", op)
    assert bin_path.stat().st_size == 16 * op.matrix.size
    matrix, meta = load_operator_matrix(tmp_path / "newton")
    assert np.array_equal(matrix, op.matrix)
    assert meta["source_rule_hash"] == cube_b.digest()


def test_truncated_payload_is_rejected(tmp_path, cube_b, bg):
    bin_path, _ = write_operator(tmp_path / "newton", assemble_newtonian(cube_b, bg))
    bin_path.write_bytes(bin_path.read_bytes()[:-16])
    with pytest.raises(ValidationError, match="sidecar declares"):
        load_operator_matrix(tmp_path / "newton")


def test_volume_field_is_restored_with_its_rule(tmp_path, cube_b, rng):
    values = rng.normal(size=(cube_b.size, 3)) + 1j * rng.normal(size=(cube_b.size, 3))
    write_volume_field(tmp_path / "q", VolumeField(rule=cube_b, values=values, kind="Q"))
    loaded = load_volume_field(tmp_path / "q")
    assert loaded.kind == "Q"
    assert loaded.rule.digest() == cube_b.digest()
    assert np.array_equal(loaded.values, values)


def test_scalar_field_fills_the_first_column(cube_b):
    field = scalar_field(cube_b, np.arange(cube_b.size, dtype=float), "rho")
    assert field.values.shape == (cube_b.size, 3)
    assert np.array_equal(field.values[:, 0].real, np.arange(cube_b.size))
    assert not np.any(field.values[:, 1:])


def test_cluster_file(tmp_path, cube):
    cluster = build_cluster(cube, 0.5, (1.0 / 4.0) ** 6, shape_b="cube")
    loaded = load_cluster(write_cluster(tmp_path / "cluster.json", cluster))
    assert loaded.count == 8
    assert np.array_equal(loaded.centers, cluster.centers)
    assert loaded.shape_b == "cube"
