import json

import numpy as np
import pytest

from designcover import formats as fm
from designcover.cover import ParamPoint
from designcover.errors import DataError
from designcover.shape import Measurement, MeasurementSpec, ParameterizedMesh

OBJ = """# a square
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vn 0 0 1
f 1 2 3
f 1/1/1 3/3/1 4//1
"""


def test_read_obj_one_based_to_zero_based(tmp_path):
    path = tmp_path / "sq.obj"
    path.write_text(OBJ)
    V, F = fm.read_obj(path)
    assert V.shape == (4, 3)
    assert F.tolist() == [[0, 1, 2], [0, 2, 3]]


@pytest.mark.parametrize(
    "body, msg",
    [
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 1\nf 1 2 3 4\n", "triangular"),
        ("v 0 0\n", "malformed"),
        ("v 0 0 0\nf 1 2 3\n", "out of range"),
    ],
)
def test_read_obj_errors_name_the_file(tmp_path, body, msg):
    path = tmp_path / "bad.obj"
    path.write_text(body)
    with pytest.raises(DataError, match=msg) as info:
        fm.read_obj(path)
    assert "bad.obj" in str(info.value)


def test_read_obj_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing.obj"):
        fm.read_obj(tmp_path / "missing.obj")


def test_obj_round_trip_is_exact(tmp_path, rng):
    V = rng.normal(size=(5, 3))
    mesh = ParameterizedMesh(0, V, np.array([[0, 1, 2], [2, 3, 4]]), np.array([0]))
    fm.write_obj(tmp_path / "m.obj", mesh, comment="hello")
    V2, F2 = fm.read_obj(tmp_path / "m.obj")
    assert np.array_equal(V2, V)
    assert np.array_equal(F2, mesh.faces)


def test_landmarks_round_trip(tmp_path):
    fm.write_landmarks(tmp_path / "lm.txt", [4, 0, 17])
    assert fm.read_landmarks(tmp_path / "lm.txt").tolist() == [4, 0, 17]
    (tmp_path / "bad.txt").write_text("1 x\n")
    with pytest.raises(DataError):
        fm.read_landmarks(tmp_path / "bad.txt")


def test_measurement_spec_round_trip(tmp_path):
    spec = MeasurementSpec((Measurement("w", 0, 1, 0.0299), Measurement("h", 2, 3, 0.0333)))
    fm.write_measurement_spec(tmp_path / "s.json", spec)
    back = fm.read_measurement_spec(tmp_path / "s.json")
    assert back == spec
    raw = json.loads((tmp_path / "s.json").read_text())
    assert raw[0]["tolerance_m"] == 0.0299


def test_measurement_spec_errors(tmp_path):
    (tmp_path / "a.json").write_text("{")
    with pytest.raises(DataError, match="invalid JSON"):
        fm.read_measurement_spec(tmp_path / "a.json")
    (tmp_path / "b.json").write_text('{"name": "w"}')
    with pytest.raises(DataError, match="JSON list"):
        fm.read_measurement_spec(tmp_path / "b.json")
    (tmp_path / "c.json").write_text('[{"name": "w"}]')
    with pytest.raises(DataError, match="bad measurement"):
        fm.read_measurement_spec(tmp_path / "c.json")


def test_points_csv_round_trip_is_exact(tmp_path, rng):
    pts = [ParamPoint(i, tuple(rng.normal(size=3))) for i in (5, 2, 9)]
    fm.write_points_csv(tmp_path / "p.csv", pts)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "id,m0,m1,m2"
    assert fm.read_points_csv(tmp_path / "p.csv") == pts


@pytest.mark.parametrize(
    "body, msg",
    [
        ("", "empty"),
        ("x,y\n1,2\n", "header"),
        ("id,m0\n1,2,3\n", "fields"),
        ("id,m0\n1,abc\n", "malformed"),
        ("id,m0\n1,1\n1,2\n", "duplicate"),
    ],
)
def test_points_csv_errors(tmp_path, body, msg):
    (tmp_path / "p.csv").write_text(body)
    with pytest.raises(DataError, match=msg):
        fm.read_points_csv(tmp_path / "p.csv")


def test_manifest_paths_relative_to_manifest(tmp_path):
    sub = tmp_path / "corpus"
    sub.mkdir()
    (sub / "m.json").write_text(json.dumps({"mesh_paths": ["a.obj", "b.obj"], "landmark_path": "lm.txt"}))
    man = fm.read_manifest(sub / "m.json")
    assert man.resolve("a.obj") == sub / "a.obj"
    assert man.subject_ids() == [0, 1]


def test_manifest_explicit_ids_round_trip(tmp_path):
    man = fm.CorpusManifest(["a.obj", "b.obj"], "lm.txt", [10, 20], str(tmp_path))
    fm.write_manifest(tmp_path / "m.json", man)
    back = fm.read_manifest(tmp_path / "m.json")
    assert back.subject_ids() == [10, 20]
    assert back.mesh_paths == ["a.obj", "b.obj"]


def test_manifest_errors(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"mesh_paths": ["a.obj"], "landmark_path": "l", "ids": [1, 2]}))
    with pytest.raises(DataError, match="differ in length"):
        fm.read_manifest(tmp_path / "m.json")
    (tmp_path / "n.json").write_text(json.dumps({"landmark_path": "l"}))
    with pytest.raises(DataError, match="bad manifest"):
        fm.read_manifest(tmp_path / "n.json")
