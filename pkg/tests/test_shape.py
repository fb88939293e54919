import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from designcover import cover as cv
from designcover import shape as sh
from designcover.errors import DataError, UsageError

from .conftest import make_points

TRI = np.array([[0, 1, 2]])


def mesh(vertices, id=0, faces=TRI, landmarks=(0, 1, 2)):
    return sh.ParameterizedMesh(id, np.asarray(vertices, dtype=float), faces, np.asarray(landmarks))


def random_rotation(rng):
    return Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()


def random_shape(rng, v=6):
    return rng.normal(size=(v, 3))


def blob(rng, v=6, id=0):
    faces = np.array([[i, (i + 1) % v, (i + 2) % v] for i in range(v)])
    return sh.ParameterizedMesh(id, random_shape(rng, v), faces, np.arange(min(v, 4)))


# --- mesh and measurement types ------------------------------------------------

def test_mesh_validation():
    with pytest.raises(DataError, match="V x 3"):
        mesh(np.zeros((3, 2)))
    with pytest.raises(DataError, match="face index"):
        mesh(np.zeros((3, 3)), faces=np.array([[0, 1, 3]]))
    with pytest.raises(DataError, match="landmark index"):
        mesh(np.zeros((3, 3)), landmarks=(0, 5))
    with pytest.raises(DataError, match="non-finite"):
        mesh([[0, 0, np.inf], [1, 0, 0], [0, 1, 0]])


def test_mesh_arrays_are_read_only():
    m = mesh(np.eye(3))
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_check_topology():
    a = mesh(np.eye(3))
    b = mesh(np.eye(3), id=1, landmarks=(0, 2, 1))
    with pytest.raises(DataError, match="topology mismatch"):
        sh.check_topology([a, b])
    with pytest.raises(DataError, match="empty input"):
        sh.check_topology([])


def test_spec_validation():
    with pytest.raises(DataError, match="invalid tolerance"):
        sh.MeasurementSpec((sh.Measurement("w", 0, 1, 0.0),))
    with pytest.raises(DataError, match="landmark_a == landmark_b"):
        sh.MeasurementSpec((sh.Measurement("w", 1, 1, 1.0),))
    with pytest.raises(DataError):
        sh.MeasurementSpec(())


def test_measure_is_landmark_distance():
    verts = [[0, 0, 0], [3, 4, 0], [0, 0, 2]]
    spec = sh.MeasurementSpec((sh.Measurement("a", 0, 1, 1.0), sh.Measurement("b", 0, 2, 0.5)))
    p = sh.measure(mesh(verts, id=41), spec)
    assert p.id == 41
    assert p.coords == (5.0, 2.0)
    assert spec.d == 2 and spec.tolerances == (1.0, 0.5) and spec.names == ("a", "b")


def test_measure_unknown_landmark():
    spec = sh.MeasurementSpec((sh.Measurement("a", 0, 7, 1.0),))
    with pytest.raises(DataError):
        sh.measure(mesh(np.eye(3)), spec)


def test_measure_invariant_under_rigid_motion(rng):
    m = blob(rng, 8)
    spec = sh.MeasurementSpec((sh.Measurement("a", 0, 1, 1.0), sh.Measurement("b", 2, 3, 1.0)))
    R, t = random_rotation(rng), rng.normal(size=3)
    moved = m.with_vertices(m.vertices @ R.T + t)
    np.testing.assert_allclose(sh.measure(moved, spec).coords, sh.measure(m, spec).coords, rtol=1e-12)


# --- rigid alignment ---------------------------------------------------------

def test_rigid_transform_rejects_reflection():
    with pytest.raises(DataError):
        sh.RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_align_identity():
    m = mesh([[0, 0, 0], [1, 0, 0], [0, 2, 0]])
    tf, aligned = sh.rigid_align(m, m)
    np.testing.assert_allclose(tf.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(tf.translation, 0, atol=1e-12)
    np.testing.assert_allclose(aligned.vertices, m.vertices, atol=1e-12)


def test_align_recovers_known_motion(rng):
    for _ in range(20):
        src = blob(rng, 10)
        R, t = random_rotation(rng), rng.normal(size=3) * 5
        tgt = src.with_vertices(src.vertices @ R.T + t)
        tf, aligned = sh.rigid_align(src, tgt)
        np.testing.assert_allclose(tf.rotation, R, atol=1e-9)
        np.testing.assert_allclose(tf.translation, t, atol=1e-9)
        assert sh.residual(aligned, tgt) < 1e-16 * 1e6


def test_align_reflected_target_gives_proper_rotation(rng):
    src = blob(rng, 10)
    tgt = src.with_vertices(src.vertices * np.array([1, 1, -1]))
    tf, _ = sh.rigid_align(src, tgt)
    assert np.linalg.det(tf.rotation) == pytest.approx(1.0)


def test_align_degenerate_inputs():
    collinear = mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    ok = mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(DataError, match="degenerate configuration"):
        sh.rigid_align(collinear, ok)
    other = sh.ParameterizedMesh(1, np.eye(4, 3), np.array([[0, 1, 2]]), np.array([0]))
    with pytest.raises(DataError, match="topology mismatch"):
        sh.rigid_align(ok, other)


def _brute_force_residual(X, Y, starts=12, seed=0):
    """Minimum rigid residual by multi-start optimization over rotation vectors."""
    Xc, Yc = X - X.mean(0), Y - Y.mean(0)
    rng = np.random.default_rng(seed)

    def f(rv):
        return float(np.sum((Xc @ Rotation.from_rotvec(rv).as_matrix().T - Yc) ** 2))

    best = np.inf
    for _ in range(starts):
        x0 = Rotation.random(random_state=int(rng.integers(1 << 31))).as_rotvec()
        best = min(best, minimize(f, x0, method="BFGS", options={"gtol": 1e-12}).fun)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_align_is_optimal_against_search(seed):
    rng = np.random.default_rng(seed)
    src, tgt = blob(rng, 7), blob(rng, 7, id=1)
    ours = sh.procrustes_residual(src, tgt)
    ref = _brute_force_residual(src.vertices, tgt.vertices)
    assert ours <= ref + 1e-9
    # scipy's own solver for the same problem
    Xc = src.vertices - src.vertices.mean(0)
    Yc = tgt.vertices - tgt.vertices.mean(0)
    rot, _ = Rotation.align_vectors(Yc, Xc)
    assert ours == pytest.approx(float(np.sum((rot.apply(Xc) - Yc) ** 2)), rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_align_residual_never_worse_than_identity(seed):
    rng = np.random.default_rng(seed)
    src, tgt = blob(rng, 6), blob(rng, 6, id=1)
    _, aligned = sh.rigid_align(src, tgt)
    centered = src.vertices - src.vertices.mean(0) + tgt.vertices.mean(0)
    assert sh.residual(aligned, tgt) <= sh.residual(centered, tgt.vertices) + 1e-12


# --- generalized Procrustes --------------------------------------------------

def test_gpa_identical_inputs_fixed_point(rng):
    X = random_shape(rng, 9) + 3.0
    for m in (1, 4, 5):
        res = sh.generalized_procrustes(np.stack([X] * m))
        assert np.array_equal(res.mean, X - X.mean(axis=0))
        assert np.array_equal(res.aligned[-1], res.mean)
        assert res.objective == [0.0]
        assert res.converged and res.iterations == 1


def test_gpa_collapses_rigid_copies(rng):
    X = random_shape(rng, 9)
    shapes = np.stack([X @ random_rotation(rng).T + rng.normal(size=3) for _ in range(5)])
    res = sh.generalized_procrustes(shapes)
    assert res.converged
    assert np.sum((res.aligned - res.mean) ** 2) < 1e-8
    # mean is a rigid copy of the input
    assert sh.procrustes_residual(mesh(X, faces=np.array([[0, 1, 2]]), landmarks=()),
                                  mesh(res.mean, faces=np.array([[0, 1, 2]]), landmarks=())) < 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_gpa_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    base = random_shape(rng, 8)
    shapes = np.stack([(base + 0.3 * rng.normal(size=base.shape)) @ random_rotation(rng).T for _ in range(5)])
    res = sh.generalized_procrustes(shapes)
    assert res.converged and res.iterations <= 100
    obj = np.array(res.objective)
    assert np.all(np.diff(obj) <= 1e-12 * max(obj[0], 1.0))
    np.testing.assert_allclose(res.mean.mean(0), 0, atol=1e-12)


def test_gpa_iteration_cap_reports_unconverged(rng):
    shapes = np.stack([random_shape(rng, 8) for _ in range(4)])
    res = sh.generalized_procrustes(shapes, tol=0.0, max_iter=3)
    assert not res.converged and res.iterations == 3


@pytest.mark.parametrize("seed", range(4))
def test_gpa_matches_global_search(seed):
    # three shapes: fix the first, search the other two rotations jointly
    rng = np.random.default_rng(seed)
    base = random_shape(rng, 5)
    shapes = np.stack([(base + 0.2 * rng.normal(size=base.shape)) @ random_rotation(rng).T for _ in range(3)])
    C = shapes - shapes.mean(1, keepdims=True)
    res = sh.generalized_procrustes(shapes)
    ours = float(np.sum((res.aligned - res.aligned.mean(0)) ** 2))

    def f(z):
        al = [C[0], C[1] @ Rotation.from_rotvec(z[:3]).as_matrix().T, C[2] @ Rotation.from_rotvec(z[3:]).as_matrix().T]
        al = np.stack(al)
        return float(np.sum((al - al.mean(0)) ** 2))

    best = min(
        minimize(f, np.concatenate([Rotation.random(random_state=s).as_rotvec() for s in (2 * i, 2 * i + 1)]),
                 method="BFGS").fun
        for i in range(10)
    )
    assert ours <= best + 1e-6


def test_procrustes_mean_is_centered(rng):
    ms = [blob(rng, 6, id=i) for i in range(3)]
    ms = [m.with_vertices(ms[0].vertices + 0.1 * rng.normal(size=(6, 3)) + 4.0) for m in ms]
    mean = sh.procrustes_mean(ms, id="mean")
    assert mean.id == "mean"
    np.testing.assert_allclose(mean.vertices.mean(0), 0, atol=1e-12)
    assert mean.same_topology(ms[0])


# --- design models ------------------------------------------------------------

SPEC1 = sh.MeasurementSpec((sh.Measurement("w", 0, 1, 1.0),))


def line_mesh(width, id):
    return mesh([[0, 0, 0], [width, 0, 0], [0, 1, 0]], id=id)


def test_box_support_rules():
    box = cv.ToleranceBox((0.0,), (2.0,))
    assert not sh.box_support(box, []).sufficient
    assert sh.box_support(box, make_points([0.0, 0.1, -0.1])).sufficient
    assert not sh.box_support(box, make_points([0.0, 0.1])).sufficient
    assert not sh.box_support(box, make_points([0.9, 0.8, 0.95])).sufficient


def test_design_model_single_member_is_itself():
    corpus = [line_mesh(2.0, 7)]
    sol = cv.greedy_cover_all(cv.candidate_boxes_centered(sh.measure_all(corpus, SPEC1), [1.0]))
    out = sh.design_models(corpus, sol, SPEC1, min_members=1)
    assert len(out) == 1 and out[0].id == 0
    np.testing.assert_allclose(out[0].vertices, corpus[0].vertices, atol=1e-12)


def test_design_model_identical_members():
    corpus = [line_mesh(2.0, i) for i in range(3)]
    sol = cv.greedy_cover_all(cv.candidate_boxes_centered(sh.measure_all(corpus, SPEC1), [1.0]))
    out = sh.design_models(corpus, sol, SPEC1)
    np.testing.assert_allclose(out[0].vertices, corpus[0].vertices, atol=1e-12)


def test_design_model_requires_hook_for_sparse_box():
    corpus = [line_mesh(2.0, 0)]
    sol = cv.greedy_cover_all(cv.candidate_boxes_centered(sh.measure_all(corpus, SPEC1), [1.0]))
    with pytest.raises(UsageError, match="enable extrapolation"):
        sh.design_models(corpus, sol, SPEC1)


def test_design_model_hook_is_called_deterministically():
    corpus = [line_mesh(2.0, 0)]
    sol = cv.greedy_cover_all(cv.candidate_boxes_centered(sh.measure_all(corpus, SPEC1), [1.0]))
    calls = []

    def hook(points):
        calls.append([p.coords for p in points])
        return [line_mesh(p.coords[0], p.id) for p in points]

    a = sh.design_models(corpus, sol, SPEC1, extrapolate=hook, n_samples=5, seed=3)
    b = sh.design_models(corpus, sol, SPEC1, extrapolate=hook, n_samples=5, seed=3)
    assert calls[0] == calls[1] and len(calls[0]) == 5
    assert all(1.5 <= c[0] <= 2.5 for c in calls[0])
    assert np.array_equal(a[0].vertices, b[0].vertices)


def test_design_model_measures_inside_box(rng):
    # corpus varying only in width; the mean width of members stays in the box
    corpus = [line_mesh(w, i) for i, w in enumerate(rng.uniform(1.0, 3.0, 40))]
    sol = cv.greedy_cover_all(cv.candidate_boxes_centered(sh.measure_all(corpus, SPEC1), [1.0]))
    out = sh.design_models(corpus, sol, SPEC1, min_members=1, center_tolerance_fraction=1.0)
    assert len(out) == sol.k
    for model, box in zip(out, sol.selected):
        assert box.contains(sh.measure(model, SPEC1).coords)
