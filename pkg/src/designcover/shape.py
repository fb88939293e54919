"""Corresponded meshes, landmark measurements, rigid superimposition and
Procrustes means.

A corpus is a list of :class:`ParameterizedMesh` sharing vertex count,
triangulation and landmark indices, so vertex ``v`` means the same anatomical
spot on every subject.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cover import CoverSolution, ParamPoint, ToleranceBox
from .errors import DataError, UsageError

log = logging.getLogger(__name__)

GPA_TOL = 1e-9
GPA_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class ParameterizedMesh:
    id: int | str
    vertices: np.ndarray
    faces: np.ndarray
    landmarks: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        lm = np.array(self.landmarks, dtype=np.int64).reshape(-1)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"mesh {self.id}: vertices must be V x 3")
        if not np.all(np.isfinite(v)):
            raise DataError(f"mesh {self.id}: non-finite vertex coordinate")
        nv = v.shape[0]
        if f.size and (f.min() < 0 or f.max() >= nv):
            raise DataError(f"mesh {self.id}: face index out of range")
        if lm.size and (lm.min() < 0 or lm.max() >= nv):
            raise DataError(f"mesh {self.id}: landmark index out of range")
        for name, arr in (("vertices", v), ("faces", f), ("landmarks", lm)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def same_topology(self, other: "ParameterizedMesh") -> bool:
        return (
            self.vertices.shape == other.vertices.shape
            and np.array_equal(self.faces, other.faces)
            and np.array_equal(self.landmarks, other.landmarks)
        )

    def with_vertices(self, vertices, id=None) -> "ParameterizedMesh":
        return ParameterizedMesh(self.id if id is None else id, vertices, self.faces, self.landmarks)


def check_topology(meshes: Sequence[ParameterizedMesh]):
    if not meshes:
        raise DataError("empty input")
    ref = meshes[0]
    for m in meshes[1:]:
        if not ref.same_topology(m):
            raise DataError(f"topology mismatch: mesh {m.id} differs from mesh {ref.id}")


@dataclass(frozen=True)
class Measurement:
    name: str
    landmark_a: int
    landmark_b: int
    tolerance: float


@dataclass(frozen=True)
class MeasurementSpec:
    """Ordered landmark-pair distances and their tolerances (meters).

    ``landmark_a``/``landmark_b`` index into the corpus landmark list, not
    directly into the vertex array.
    """

    entries: tuple[Measurement, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise DataError("measurement spec needs at least one entry")
        for e in entries:
            if not (e.tolerance > 0 and np.isfinite(e.tolerance)):
                raise DataError(f"measurement {e.name!r}: invalid tolerance")
            if e.landmark_a == e.landmark_b:
                raise DataError(f"measurement {e.name!r}: landmark_a == landmark_b")
            if e.landmark_a < 0 or e.landmark_b < 0:
                raise DataError(f"measurement {e.name!r}: negative landmark index")
        object.__setattr__(self, "entries", entries)

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def tolerances(self) -> tuple[float, ...]:
        return tuple(e.tolerance for e in self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)


def _landmark_pairs(mesh: ParameterizedMesh, spec: MeasurementSpec):
    L = mesh.landmarks.size
    a = np.array([e.landmark_a for e in spec.entries])
    b = np.array([e.landmark_b for e in spec.entries])
    if a.max() >= L or b.max() >= L:
        raise DataError(
            f"mesh {mesh.id}: measurement refers to landmark index beyond the {L} landmarks"
        )
    return mesh.landmarks[a], mesh.landmarks[b]


def measure(mesh: ParameterizedMesh, spec: MeasurementSpec) -> ParamPoint:
    """Euclidean landmark-pair distances as a parameter-space point."""
    va, vb = _landmark_pairs(mesh, spec)
    diff = mesh.vertices[va] - mesh.vertices[vb]
    return ParamPoint(mesh.id, tuple(np.sqrt(np.einsum("ij,ij->i", diff, diff)).tolist()))


def measure_all(meshes: Sequence[ParameterizedMesh], spec: MeasurementSpec) -> list[ParamPoint]:
    return [measure(m, spec) for m in meshes]


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1) > 1e-9:
            raise DataError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def _proper_rotations(H: np.ndarray) -> np.ndarray:
    """Rotations R maximizing trace(R H) for a stack of 3x3 cross-covariances.

    ``H = Xc^T Yc`` for source ``Xc`` and target ``Yc``; the result maps
    source onto target.
    """
    U, _, Vt = np.linalg.svd(H)
    V = np.swapaxes(Vt, -1, -2)
    Ut = np.swapaxes(U, -1, -2)
    sign = np.sign(np.linalg.det(V @ Ut))
    sign = np.where(sign == 0, 1.0, sign)
    D = np.zeros(H.shape)
    D[..., 0, 0] = 1.0
    D[..., 1, 1] = 1.0
    D[..., 2, 2] = sign
    return V @ D @ Ut


def _check_nondegenerate(x: np.ndarray, what) -> None:
    s = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
    if x.shape[0] < 3 or s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise DataError(f"degenerate configuration: {what} needs 3 non-collinear vertices")


def rigid_align(
    source: ParameterizedMesh, target: ParameterizedMesh
) -> tuple[RigidTransform, ParameterizedMesh]:
    """Least-squares rotation + translation taking ``source`` onto ``target``."""
    if not source.same_topology(target):
        raise DataError(f"topology mismatch: mesh {source.id} vs mesh {target.id}")
    X, Y = source.vertices, target.vertices
    _check_nondegenerate(X, f"mesh {source.id}")
    _check_nondegenerate(Y, f"mesh {target.id}")
    xbar, ybar = X.mean(axis=0), Y.mean(axis=0)
    R = _proper_rotations((X - xbar).T @ (Y - ybar))
    tf = RigidTransform(R, ybar - R @ xbar)
    return tf, source.with_vertices(tf.apply(X))


def residual(a: ParameterizedMesh | np.ndarray, b: ParameterizedMesh | np.ndarray) -> float:
    """Sum of squared distances between corresponding vertices."""
    va = a.vertices if isinstance(a, ParameterizedMesh) else np.asarray(a)
    vb = b.vertices if isinstance(b, ParameterizedMesh) else np.asarray(b)
    return float(np.sum((va - vb) ** 2))


def procrustes_residual(source: ParameterizedMesh, target: ParameterizedMesh) -> float:
    """Residual left after rigidly aligning ``source`` onto ``target``."""
    _, aligned = rigid_align(source, target)
    return residual(aligned, target)


@dataclass
class GPAResult:
    mean: np.ndarray
    aligned: np.ndarray
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def generalized_procrustes(
    shapes, tol: float = GPA_TOL, max_iter: int = GPA_MAX_ITER
) -> GPAResult:
    """Alternate averaging and rigid alignment of ``m`` corresponded shapes.

    ``shapes`` is an ``(m, V, 3)`` array. The mean starts as the first
    shape, centered. ``objective[t]`` is the summed squared residual of the
    shapes aligned in iteration ``t`` against the mean they were aligned to;
    it never increases. Iteration stops once the mean moves less than ``tol``
    (max vertex displacement) or after ``max_iter`` iterations.
    """
    X = np.asarray(shapes, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0 or X.shape[2] != 3:
        raise DataError("expected a nonempty (m, V, 3) shape stack")
    X = X - X.mean(axis=1, keepdims=True)
    mean = X[0].copy()
    out = GPAResult(mean, X.copy())
    for it in range(1, max_iter + 1):
        R = _proper_rotations(np.einsum("mvi,vj->mij", X, mean))
        # a shape already equal to the mean aligns by the identity; keep it exact
        same = np.all(X == mean, axis=(1, 2))
        R[same] = np.eye(3)
        aligned = np.einsum("mij,mvj->mvi", R, X)
        aligned[same] = X[same]
        out.objective.append(float(np.sum((aligned - mean) ** 2)))
        if same.all():
            out.aligned, out.iterations, out.converged = aligned, it, True
            break
        new_mean = aligned.mean(axis=0)
        new_mean -= new_mean.mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_mean - mean, axis=1)))
        mean = new_mean
        out.aligned = aligned
        out.iterations = it
        if shift < tol:
            out.converged = True
            break
    else:
        log.warning("Procrustes mean hit the %d-iteration cap without converging", max_iter)
    out.mean = mean
    return out


def procrustes_mean(
    meshes: Sequence[ParameterizedMesh],
    tol: float = GPA_TOL,
    max_iter: int = GPA_MAX_ITER,
    id=0,
) -> ParameterizedMesh:
    """Rigid (rotation + translation, no scaling) Procrustes mean, centroid at the origin."""
    check_topology(meshes)
    for m in meshes[:1]:
        _check_nondegenerate(m.vertices, f"mesh {m.id}")
    res = generalized_procrustes(np.stack([m.vertices for m in meshes]), tol, max_iter)
    return meshes[0].with_vertices(res.mean, id=id)


ExtrapolationHook = Callable[[list[ParamPoint]], list[ParameterizedMesh]]


@dataclass(frozen=True)
class BoxSupport:
    """Whether a box's own members suffice to represent it."""

    n_members: int
    member_mean: tuple[float, ...] | None
    sufficient: bool


def box_support(
    box: ToleranceBox,
    member_points: Sequence[ParamPoint],
    min_members: int = 3,
    center_tolerance_fraction: float = 0.5,
) -> BoxSupport:
    if len(member_points) == 0:
        return BoxSupport(0, None, False)
    mean = np.mean([p.coords for p in member_points], axis=0)
    limit = center_tolerance_fraction * np.asarray(box.side_lengths) / 2
    centered = bool(np.all(np.abs(mean - np.asarray(box.center)) <= limit))
    ok = len(member_points) >= min_members and centered
    return BoxSupport(len(member_points), tuple(mean.tolist()), ok)


def sample_in_box(box: ToleranceBox, count: int, rng: np.random.Generator) -> list[ParamPoint]:
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    u = rng.random((count, box.d))
    return [ParamPoint(-(i + 1), tuple(row)) for i, row in enumerate(lo + u * (hi - lo))]


def design_models(
    corpus: Sequence[ParameterizedMesh],
    solution: CoverSolution,
    spec: MeasurementSpec,
    min_members: int = 3,
    center_tolerance_fraction: float = 0.5,
    extrapolate: ExtrapolationHook | None = None,
    n_samples: int = 20,
    seed: int = 0,
    supports: list | None = None,
) -> list[ParameterizedMesh]:
    """One representative mesh per selected box, in selection order.

    A box whose members are numerous enough and centered enough gets the
    Procrustes mean of its members. Otherwise ``n_samples`` points are drawn
    uniformly inside the box, turned into meshes by ``extrapolate``, and the
    mean is taken over members plus those meshes. Each output is rigidly
    placed onto its box's first member when there is one. Box ``i`` draws
    from ``default_rng([seed, i])``. If ``supports`` is a list, the
    per-box :class:`BoxSupport` records are appended to it.
    """
    if min_members < 1:
        raise UsageError("min_members must be >= 1")
    check_topology(corpus)
    by_id = {m.id: m for m in corpus}
    if len(by_id) != len(corpus):
        raise DataError("duplicate mesh id in corpus")
    out = []
    for i, (box, member_ids) in enumerate(zip(solution.selected, solution.members)):
        unknown = [mid for mid in member_ids if mid not in by_id]
        if unknown:
            raise DataError(f"box {i}: unknown member ids {unknown}")
        members = [by_id[mid] for mid in member_ids]
        support = box_support(box, measure_all(members, spec), min_members, center_tolerance_fraction)
        if supports is not None:
            supports.append(support)
        shapes = list(members)
        if not support.sufficient:
            if extrapolate is None:
                raise UsageError(
                    f"box {i} has too few or off-center members ({support.n_members}); "
                    "enable extrapolation to synthesize substitute shapes"
                )
            rng = np.random.default_rng([seed, i])
            shapes += list(extrapolate(sample_in_box(box, n_samples, rng)))
        mean = procrustes_mean(shapes, id=i)
        if members:
            _, mean = rigid_align(mean, members[0])
        out.append(mean.with_vertices(mean.vertices, id=i))
    return out
