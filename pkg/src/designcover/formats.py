"""Flat-file formats: ASCII OBJ meshes, landmark lists, measurement specs,
points CSV and corpus manifests."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cover import ParamPoint
from .errors import DataError
from .shape import Measurement, MeasurementSpec, ParameterizedMesh


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangles of an ASCII OBJ (faces converted to 0-based)."""
    verts, faces = [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot read mesh file {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "f" and len(parts) != 4:
                raise DataError(f"{path}:{lineno}: only triangular faces are supported")
            try:
                if tag == "v":
                    if len(parts) < 4:
                        raise ValueError(tag)
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed {tag!r} record") from None
    V = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    F = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if F.size and (F.min() < 0 or F.max() >= len(V)):
        raise DataError(f"{path}: face index out of range")
    return V, F


def write_obj(path, mesh: ParameterizedMesh, comment: str | None = None):
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.extend("v %.17g %.17g %.17g" % tuple(v) for v in mesh.vertices.tolist())
    lines.extend("f %d %d %d" % tuple(f) for f in (mesh.faces + 1).tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_landmarks(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read landmark file {path}: {exc.strerror}") from None
    try:
        return np.array([int(tok) for tok in text.split()], dtype=np.int64)
    except ValueError:
        raise DataError(f"{path}: landmark file must hold integer vertex indices") from None


def write_landmarks(path, landmarks):
    Path(path).write_text("".join(f"{int(i)}\n" for i in landmarks))


def read_measurement_spec(path) -> MeasurementSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read measurement spec {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, list):
        raise DataError(f"{path}: measurement spec must be a JSON list")
    try:
        entries = [
            Measurement(str(e["name"]), int(e["landmark_a"]), int(e["landmark_b"]),
                        float(e["tolerance_m"]))
            for e in raw
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad measurement entry ({exc})") from None
    return MeasurementSpec(tuple(entries))


def write_measurement_spec(path, spec: MeasurementSpec):
    data = [
        {"name": e.name, "landmark_a": e.landmark_a, "landmark_b": e.landmark_b,
         "tolerance_m": e.tolerance}
        for e in spec.entries
    ]
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def read_points_csv(path) -> list[ParamPoint]:
    """Points from ``id,m0,...,m{d-1}`` CSV."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read points file {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty points file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header[0] != "id" or header[1:] != [f"m{i}" for i in range(d)]:
        raise DataError(f"{path}: header must be id,m0,...,m{{d-1}}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 1:
            raise DataError(f"{path}:{lineno}: expected {d + 1} fields")
        try:
            out.append(ParamPoint(int(row[0]), tuple(float(x) for x in row[1:])))
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed number") from None
    if len({p.id for p in out}) != len(out):
        raise DataError(f"{path}: duplicate point id")
    return out


def write_points_csv(path, points: Sequence[ParamPoint]):
    if not points:
        raise DataError("empty input")
    d = points[0].d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"m{i}" for i in range(d)])
        for p in points:
            w.writerow([p.id] + [repr(c) for c in p.coords])


@dataclass
class CorpusManifest:
    """Mesh files plus the shared landmark file.

    Relative paths are resolved against ``base_dir`` (the manifest's folder
    when loaded from disk). Ids default to file order.
    """

    mesh_paths: list[str]
    landmark_path: str
    ids: list[int] | None = None
    base_dir: str = field(default=".", repr=False)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def subject_ids(self) -> list[int]:
        return list(range(len(self.mesh_paths))) if self.ids is None else [int(i) for i in self.ids]

    def to_json(self) -> dict:
        out = {"mesh_paths": list(self.mesh_paths), "landmark_path": self.landmark_path}
        if self.ids is not None:
            out["ids"] = [int(i) for i in self.ids]
        return out


def read_manifest(path) -> CorpusManifest:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        man = CorpusManifest(list(raw["mesh_paths"]), str(raw["landmark_path"]),
                             raw.get("ids"), os.path.dirname(os.path.abspath(path)))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: bad manifest ({exc})") from None
    if man.ids is not None and len(man.ids) != len(man.mesh_paths):
        raise DataError(f"{path}: ids and mesh_paths differ in length")
    return man


def write_manifest(path, manifest: CorpusManifest):
    Path(path).write_text(json.dumps(manifest.to_json(), indent=1) + "\n")
