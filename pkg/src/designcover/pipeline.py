"""End-to-end pipeline: corpus ingestion, covering runs, reports, held-out
evaluation, synthetic corpora and extrapolation."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import cover as cv
from .errors import DataError, UsageError
from .formats import (
    CorpusManifest, read_landmarks, read_manifest, read_obj, read_points_csv,
    write_landmarks, write_manifest, write_measurement_spec, write_obj, write_points_csv,
)
from .shape import (
    MeasurementSpec, ParameterizedMesh, check_topology, design_models, measure_all,
)
from .stats import (
    GaussianModel, feature_fit, gaussian_fit, gaussian_sample, level_set_sample,
    pca_fit, pca_project, save_model, synthesize, synthesizer,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1
GLASSES_NOTE = (
    "glasses face-width tolerance: the source quotes both 2.76 cm and 2.67 cm; "
    "fixtures use 2.67 cm"
)


def load_corpus(manifest: CorpusManifest) -> list[ParameterizedMesh]:
    """Load every mesh of a manifest; all must share topology and landmarks."""
    lm_path = manifest.resolve(manifest.landmark_path)
    landmarks = read_landmarks(lm_path)
    ids = manifest.subject_ids()
    if len(set(ids)) != len(ids):
        raise DataError("manifest: duplicate subject ids")
    meshes = []
    ref_faces = ref_nv = None
    for pid, rel in zip(ids, manifest.mesh_paths):
        path = manifest.resolve(rel)
        V, F = read_obj(path)
        if landmarks.size and (landmarks.min() < 0 or landmarks.max() >= len(V)):
            raise DataError(f"{path}: landmark index out of range for {len(V)} vertices")
        if ref_faces is None:
            ref_faces, ref_nv = F, len(V)
        elif len(V) != ref_nv or not np.array_equal(F, ref_faces):
            raise DataError(f"{path}: topology mismatch with {manifest.resolve(manifest.mesh_paths[0])}")
        meshes.append(ParameterizedMesh(pid, V, F, landmarks))
    if not meshes:
        raise DataError("manifest lists no meshes")
    return meshes


@dataclass
class RunReport:
    algorithm: str
    parameters: dict
    tolerances: list[float]
    measurement_names: list[str]
    boxes: list[dict]
    point_ids: list[int]
    train_coverage: float
    heldout_coverage: float | None = None
    timings: dict | None = None
    seed: int = 0
    design_models: list[str] = field(default_factory=list)
    comment: str = ""
    version: int = REPORT_VERSION

    def __post_init__(self):
        for name in ("train_coverage", "heldout_coverage"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise DataError(f"report {name} outside [0, 1]")
        known = set(self.point_ids)
        for b in self.boxes:
            bad = [m for m in b["members"] if m not in known]
            if bad:
                raise DataError(f"report box references unknown ids {bad}")

    @property
    def d(self) -> int:
        return len(self.tolerances)

    def tolerance_boxes(self) -> list[cv.ToleranceBox]:
        return [cv.ToleranceBox(tuple(b["center"]), tuple(b["side_lengths"])) for b in self.boxes]

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, obj: dict) -> "RunReport":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise DataError(f"malformed report ({exc})") from None

    @classmethod
    def load(cls, path) -> "RunReport":
        try:
            obj = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read report {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
        return cls.from_json(obj)


def render_svg(report: RunReport, points: Sequence[cv.ParamPoint], size: int = 640) -> str:
    """Scatter of the points (gray triangles), box centers (black squares)
    and box outlines. Only for two measurements."""
    if report.d != 2:
        raise UsageError("SVG output is only available for d=2")
    P = np.array([p.coords for p in points], dtype=np.float64).reshape(-1, 2)
    boxes = report.tolerance_boxes()
    lo = np.vstack([P, [b.lower for b in boxes]] if boxes else [P]).min(axis=0)
    hi = np.vstack([P, [b.upper for b in boxes]] if boxes else [P]).max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    margin = 50
    inner = size - 2 * margin

    def xy(p):
        u = (np.asarray(p) - lo) / span
        return margin + u[0] * inner, size - margin - u[1] * inner

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{margin}" y="{margin / 2:.1f}" font-size="12" font-family="sans-serif">'
        f"{report.algorithm}: {len(boxes)} boxes, train coverage "
        f"{report.train_coverage:.3f} (unit: meters)</text>",
    ]
    for b in boxes:
        (x0, y0), (x1, y1) = xy(b.lower), xy(b.upper)
        out.append(f'<rect x="{x0:.3f}" y="{y1:.3f}" width="{x1 - x0:.3f}" height="{y0 - y1:.3f}" '
                   'fill="none" stroke="black" stroke-width="1"/>')
    for p in P:
        x, y = xy(p)
        out.append(f'<polygon points="{x:.3f},{y - 4:.3f} {x - 3.5:.3f},{y + 2:.3f} '
                   f'{x + 3.5:.3f},{y + 2:.3f}" fill="gray"/>')
    for b in boxes:
        x, y = xy(b.center)
        out.append(f'<rect x="{x - 3:.3f}" y="{y - 3:.3f}" width="6" height="6" fill="black"/>')
    ax = [report.measurement_names[i] if i < len(report.measurement_names) else f"m{i}" for i in range(2)]
    out.append(f'<text x="{size / 2:.1f}" y="{size - 12}" font-size="12" text-anchor="middle" '
               f'font-family="sans-serif">{ax[0]} [{lo[0]:.4f}, {hi[0]:.4f}]</text>')
    out.append(f'<text x="14" y="{size / 2:.1f}" font-size="12" text-anchor="middle" '
               f'font-family="sans-serif" transform="rotate(-90 14 {size / 2:.1f})">'
               f"{ax[1]} [{lo[1]:.4f}, {hi[1]:.4f}]</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _solve(points, tolerances, mode, k, l, candidates):
    if mode == "shift":
        if k is not None:
            raise UsageError("shift mode does not take k")
        if l is None:
            raise UsageError("shift mode needs l")
        if len(tolerances) != 2:
            raise UsageError("shifting implemented for d=2 only")
        sol = cv.shifting_cover_2d(points, tolerances, l)
        return sol, {"mode": "shift", "l": int(l), "epsilon": sol.params["epsilon"],
                     "shift": sol.params["shift"], "candidates": "combinatorial-blocks"}
    if l is not None:
        raise UsageError(f"{mode} mode does not take l")
    if candidates == "centered":
        cands = cv.candidate_boxes_centered(points, tolerances)
    elif candidates == "combinatorial":
        cands = cv.candidate_boxes_combinatorial(points, tolerances)
    else:
        raise UsageError(f"unknown candidate mode {candidates!r}")
    if mode == "all":
        if k is not None:
            raise UsageError("all mode does not take k")
        sol = cv.greedy_cover_all(cands)
        return sol, {"mode": "all", "candidates": candidates, "n_candidates": len(cands)}
    if mode == "k":
        if k is None:
            raise UsageError("k mode needs k")
        sol = cv.greedy_cover_k(cands, k)
        return sol, {"mode": "k", "k": int(k), "candidates": candidates, "n_candidates": len(cands)}
    raise UsageError(f"unknown mode {mode!r}")


def run_cover(
    spec: MeasurementSpec,
    mode: str,
    *,
    corpus: Sequence[ParameterizedMesh] | None = None,
    points: Sequence[cv.ParamPoint] | None = None,
    k: int | None = None,
    l: int | None = None,
    candidates: str = "centered",
    out_dir=None,
    seed: int = 0,
    min_members: int = 3,
    center_tolerance_fraction: float = 0.5,
    extrapolate: bool = False,
    n_samples: int = 20,
    variance_fraction: float = 0.99,
    test_points: Sequence[cv.ParamPoint] | None = None,
    record_timings: bool = False,
    comment: str = "",
) -> RunReport:
    """Cover the measurement points of a corpus (or given points) and write outputs.

    With ``out_dir`` set, writes ``report.json``, ``points.csv``, one
    ``design_model_<i>.obj`` per box when meshes are available, and
    ``cover.svg`` when d = 2.
    """
    if (corpus is None) == (points is None):
        raise UsageError("supply exactly one of corpus or points")
    t0 = time.perf_counter()
    if corpus is not None:
        check_topology(corpus)
        points = measure_all(corpus, spec)
    points = list(points)
    if any(p.d != spec.d for p in points):
        raise DataError("dimension mismatch between points and measurement spec")
    t1 = time.perf_counter()
    sol, params = _solve(points, spec.tolerances, mode, k, l, candidates)
    t2 = time.perf_counter()

    models = []
    supports = []
    if corpus is not None:
        hook = None
        if extrapolate:
            hook = _extrapolation_hook(corpus, points, variance_fraction)
        models = design_models(corpus, sol, spec, min_members, center_tolerance_fraction,
                               hook, n_samples, seed, supports)
    t3 = time.perf_counter()

    boxes = []
    for i, (box, mem) in enumerate(zip(sol.selected, sol.members)):
        entry = {"center": list(box.center), "side_lengths": list(box.side_lengths),
                 "members": list(mem)}
        if supports:
            entry["extrapolated"] = not supports[i].sufficient
        boxes.append(entry)
    if corpus is not None:
        params.update(min_members=min_members, center_tolerance_fraction=center_tolerance_fraction,
                      extrapolate=bool(extrapolate), n_samples=n_samples)
    report = RunReport(
        algorithm=sol.algorithm,
        parameters=params,
        tolerances=list(spec.tolerances),
        measurement_names=list(spec.names),
        boxes=boxes,
        point_ids=[p.id for p in points],
        train_coverage=sol.coverage,
        seed=int(seed),
        design_models=[f"design_model_{i}.obj" for i in range(len(models))],
        comment=comment,
    )
    if test_points is not None:
        report.heldout_coverage = evaluate_holdout(report, test_points)
    if record_timings:
        report.timings = {"measure_s": t1 - t0, "cover_s": t2 - t1, "design_models_s": t3 - t2}

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.save(out / "report.json")
        write_points_csv(out / "points.csv", points)
        for name, mesh in zip(report.design_models, models):
            write_obj(out / name, mesh)
        if spec.d == 2:
            (out / "cover.svg").write_text(render_svg(report, points))
    return report


def _extrapolation_hook(corpus, points, variance_fraction):
    basis = pca_fit(corpus, variance_fraction)
    weights = np.array([pca_project(basis, m) for m in corpus]).reshape(len(corpus), basis.p)
    fmap = feature_fit(points, weights)
    return synthesizer(basis, fmap)


def evaluate_holdout(report: RunReport, test_points: Sequence[cv.ParamPoint]) -> float:
    """Fraction of test points inside at least one report box."""
    test_points = list(test_points)
    if not test_points:
        raise DataError("empty input")
    if any(p.d != report.d for p in test_points):
        raise DataError(f"dimension mismatch: report has d={report.d}")
    coords = np.array([p.coords for p in test_points], dtype=np.float64)
    return cv.coverage_fraction(report.tolerance_boxes(), coords)


def synth_corpus(
    template: ParameterizedMesh,
    modes,
    weight_model: GaussianModel,
    n: int,
    seed: int,
    out_dir,
    holdout: int = 0,
    spec: MeasurementSpec | None = None,
):
    """Write ``n`` meshes ``template + sum_j w_j mode_j`` with ``w`` drawn from
    ``weight_model``, plus ``holdout`` more from the same draw into a test set.

    Returns the training manifest, or ``(train, test)`` when ``holdout > 0``.
    Weights go to ``weights.csv`` for ground truth.
    """
    modes = np.asarray(modes, dtype=np.float64)
    if modes.ndim == 2:
        modes = modes[None]
    if modes.shape[1:] != template.vertices.shape:
        raise DataError("dimension mismatch: modes do not match the template vertices")
    if modes.shape[0] != weight_model.d:
        raise DataError("dimension mismatch: weight model and mode count differ")
    if n < 1 or holdout < 0:
        raise UsageError("n must be >= 1 and holdout >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    W = np.array([p.coords for p in gaussian_sample(weight_model, n + holdout, seed)])
    write_landmarks(out / "landmarks.txt", template.landmarks)
    if spec is not None:
        write_measurement_spec(out / "measurements.json", spec)
    names = []
    with open(out / "weights.csv", "w") as fh:
        fh.write("id,split," + ",".join(f"w{j}" for j in range(modes.shape[0])) + "\n")
        for i, w in enumerate(W):
            split = "train" if i < n else "test"
            name = f"mesh_{i:05d}.obj"
            V = template.vertices + np.tensordot(w, modes, axes=1)
            write_obj(out / name, template.with_vertices(V, id=i))
            names.append(name)
            fh.write(f"{i},{split}," + ",".join(repr(float(x)) for x in w) + "\n")
    train = CorpusManifest(names[:n], "landmarks.txt", list(range(n)), str(out))
    write_manifest(out / "manifest.json", train)
    if holdout == 0:
        return train
    test = CorpusManifest(names[n:], "landmarks.txt", list(range(n, n + holdout)), str(out))
    write_manifest(out / "test_manifest.json", test)
    return train, test


@dataclass
class ExtrapolationResult:
    points: list[cv.ParamPoint]
    meshes: list[ParameterizedMesh]
    requested: list[cv.ParamPoint]
    manifest: CorpusManifest | None = None


def run_extrapolate(
    corpus: Sequence[ParameterizedMesh],
    spec: MeasurementSpec,
    count: int | None = None,
    level: float | None = None,
    seed: int = 0,
    out_dir=None,
    variance_fraction: float = 0.99,
    manifest: CorpusManifest | None = None,
) -> ExtrapolationResult:
    """Add synthesized subjects drawn from a Gaussian over the measurements.

    ``count`` alone samples the density; ``level`` samples the Mahalanobis
    shell of radius ``level`` (``count`` defaults to 20 there). The returned
    points cover the original corpus followed by the new subjects, whose
    ids continue after the largest corpus id.
    """
    corpus = list(corpus)
    check_topology(corpus)
    if count is None and level is None:
        raise UsageError("extrapolate needs --count or --level")
    if count is None:
        count = 20
    if count < 0:
        raise UsageError("count must be >= 0")
    points = measure_all(corpus, spec)
    if len(corpus) < spec.d + 1:
        raise DataError(f"underdetermined feature map: {len(corpus)} subjects for d={spec.d}")

    new_meshes, requested = [], []
    models = None
    if count > 0:
        basis = pca_fit(corpus, variance_fraction)
        weights = np.array([pca_project(basis, m) for m in corpus]).reshape(len(corpus), basis.p)
        fmap = feature_fit(points, weights)
        gauss = gaussian_fit(points)
        if level is None:
            samples = gaussian_sample(gauss, count, seed)
        else:
            samples = level_set_sample(gauss, level, count, seed)
        start = max(int(m.id) for m in corpus) + 1
        requested = [cv.ParamPoint(start + i, p.coords) for i, p in enumerate(samples)]
        new_meshes = [synthesize(basis, fmap, p) for p in requested]
        models = (basis, fmap, gauss)
    new_points = measure_all(new_meshes, spec)
    result = ExtrapolationResult(points + new_points, new_meshes, requested)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = [f"extrap_{p.id:05d}.obj" for p in requested]
        for name, mesh in zip(names, new_meshes):
            write_obj(out / name, mesh)
        write_points_csv(out / "points.csv", result.points)
        if requested:
            write_points_csv(out / "requested_points.csv", requested)
        if models is not None:
            for name, model in zip(("shape_basis", "feature_map", "gaussian"), models):
                save_model(model, out / f"{name}.json", seed=seed)
        if manifest is not None:
            orig = [os.path.relpath(manifest.resolve(p), out) for p in manifest.mesh_paths]
            lm = os.path.relpath(manifest.resolve(manifest.landmark_path), out)
            ids = [int(m.id) for m in corpus] + [p.id for p in requested]
            aug = CorpusManifest(orig + names, lm, ids, str(out))
        else:
            write_landmarks(out / "landmarks.txt", corpus[0].landmarks)
            for m in corpus:
                write_obj(out / f"subject_{int(m.id):05d}.obj", m)
            orig = [f"subject_{int(m.id):05d}.obj" for m in corpus]
            aug = CorpusManifest(orig + names, "landmarks.txt",
                                 [int(m.id) for m in corpus] + [p.id for p in requested], str(out))
        write_manifest(out / "manifest.json", aug)
        result.manifest = aug
    return result


def load_test_points(path, spec: MeasurementSpec | None = None) -> list[cv.ParamPoint]:
    """Test subjects from a points CSV or a corpus manifest (needs ``spec``)."""
    if str(path).endswith(".json"):
        if spec is None:
            raise UsageError("a manifest test set needs --measurements")
        return measure_all(load_corpus(read_manifest(path)), spec)
    return read_points_csv(path)
