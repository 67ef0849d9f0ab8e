import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatstab.exceptions import ConfigurationError
from heatstab.io import (RunManifest, canonical_config, parse_config, read_csv, read_json,
                         write_csv, write_json)

CANONICAL = """
[model]
n_grid = 400
potential = -2.0
length_unit = "pi"
domain_length = 1.0
omega = [0.2, 0.5]
omega1 = [0.55, 0.85]

[experiment]
gamma = 0.5
T = 1.0
"""


def test_canonical_toml_matches_builtin():
    cfg = parse_config(CANONICAL)
    ref = canonical_config()
    assert cfg.model.digest() == ref.model.digest()
    assert cfg.digest() == ref.digest()


def test_potential_forms():
    cfg = parse_config("[model]\nn_grid = 4\npotential = {values = [1, 2, 3, 4]}\n")
    np.testing.assert_array_equal(cfg.model.potential_values(), [1, 2, 3, 4])
    cfg = parse_config("[model]\nn_grid = 3\nlength_unit = \"pi\"\n"
                       "omega = [0.1, 0.5]\nomega1 = [0.5, 0.9]\n"
                       "potential = {x = [0, 1], v = [0, 4]}\n")
    np.testing.assert_allclose(cfg.model.potential_values(), [1, 2, 3])


@pytest.mark.parametrize("text, needle", [
    ("[model\n", "line 1"),
    ("[model]\nn_grid = \"big\"\n", "model.n_grid"),
    ("[model]\nomega = [1]\n", "model.omega"),
    ("[model]\nlength_unit = \"deg\"\n", "length_unit"),
    ("[model]\nn_grid = 4\npotential = {values = [1, 2]}\n", "potential.values"),
    ("[experiment]\nT_grid = [1.0, 0.5]\n", "T_grid"),
    ("[experiment]\ngamma = -1\n", "gamma"),
    ("[extra]\n", "unknown"),
])
def test_config_errors_name_the_field(text, needle):
    with pytest.raises(ConfigurationError, match=needle):
        parse_config(text)


def test_json_floats_round_trip(tmp_path):
    values = [0.1, 1 / 3, 1e-300, 2.0**-1074, 8127494.27549496, -0.0]
    path = write_json(tmp_path / "x.json", {"v": values, "arr": np.array(values)})
    back = read_json(path)
    assert back["v"] == values and back["arr"] == values
    assert path.read_bytes().decode("utf-8").endswith("\n")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_floats_round_trip(tmp_path_factory, xs):
    path = write_csv(tmp_path_factory.mktemp("csv") / "a.csv", ["x"], [[x] for x in xs])
    header, rows = read_csv(path)
    assert header == ["x"]
    assert [float(r[0]) for r in rows] == xs


def test_csv_format(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["t", "norm"], [(0.0, 1.0), (0.25, math.pi)])
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw == b"t,norm\n0.0,1.0\n0.25,3.141592653589793\n"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    write_json(tmp_path / "a.json", {"a": 1})
    write_json(tmp_path / "a.json", {"a": 2})
    assert [p.name for p in tmp_path.iterdir()] == ["a.json"]
    assert read_json(tmp_path / "a.json") == {"a": 2}


def test_manifest_merges_outputs(tmp_path):
    m = RunManifest(config_hash="c", model_hash="m")
    f = write_json(tmp_path / "a.json", {})
    m.record(f)
    m.write(tmp_path)
    m2 = RunManifest(config_hash="c", model_hash="m", calibration={"C0": 1.0})
    m2.record(write_json(tmp_path / "b.json", {}))
    m2.write(tmp_path)
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert set(data["outputs"]) == {"a.json", "b.json"}
    assert data["manifest_hash"] == m.manifest_hash
    assert data["calibration"] == {"C0": 1.0}


def test_shipped_config_is_canonical():
    from pathlib import Path
    from heatstab.io import load_config
    cfg = load_config(Path(__file__).parents[1] / "configs" / "canonical.toml")
    assert cfg.digest() == canonical_config().digest()
    assert cfg.output_dir == "runs/canonical"
