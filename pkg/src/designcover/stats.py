"""Shape-space statistics used to synthesize subjects from measurements.

PCA over stacked vertex coordinates gives ``x = A w + mu``; an affine
least-squares map takes measurements to PCA weights; a Gaussian fitted by
maximum likelihood supplies new measurement points, either as density
samples or on a constant-density ellipsoid.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64) with
numpy's standard normal sampler, so outputs are reproducible per seed for a
given numpy release.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cover import ParamPoint
from .errors import DataError
from .shape import ParameterizedMesh, check_topology

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ShapeBasis:
    mean_shape: np.ndarray  # (3V,)
    basis: np.ndarray  # (3V, p), orthonormal columns
    variances: np.ndarray  # (p,), descending
    faces: np.ndarray
    landmarks: np.ndarray

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.mean_shape.size // 3


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Linear map from measurements (plus a constant 1 when affine) to PCA weights."""

    matrix: np.ndarray  # (p, d + 1) when affine, else (p, d)
    affine: bool = True

    @property
    def d(self) -> int:
        return self.matrix.shape[1] - (1 if self.affine else 0)

    def weights(self, coords) -> np.ndarray:
        x = np.asarray(coords, dtype=np.float64).reshape(-1)
        if x.size != self.d:
            raise DataError(f"dimension mismatch: feature map expects d={self.d}, got {x.size}")
        if self.affine:
            x = np.append(x, 1.0)
        return self.matrix @ x


@dataclass(frozen=True, eq=False)
class GaussianModel:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mean, dtype=np.float64).reshape(-1)
        cov = np.array(self.covariance, dtype=np.float64).reshape(mu.size, mu.size)
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise DataError("covariance is not symmetric")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)

    @property
    def d(self) -> int:
        return self.mean.size

    def log_likelihood(self, coords) -> float:
        X = np.atleast_2d(np.asarray(coords, dtype=np.float64)) - self.mean
        sign, logdet = np.linalg.slogdet(self.covariance)
        if sign <= 0:
            return -np.inf
        maha = np.einsum("ij,ij->i", X @ np.linalg.inv(self.covariance), X)
        return float(-0.5 * np.sum(maha + logdet + self.d * np.log(2 * np.pi)))


def _stack(corpus: Sequence[ParameterizedMesh]) -> np.ndarray:
    return np.stack([m.vertices.reshape(-1) for m in corpus])


def pca_fit(corpus: Sequence[ParameterizedMesh], variance_fraction: float = 0.99) -> ShapeBasis:
    """PCA of the corpus as 3V-vectors; keeps the fewest components reaching
    ``variance_fraction`` of the total variance (zero-variance directions are
    never kept)."""
    if len(corpus) < 2:
        raise DataError("pca_fit needs at least 2 meshes")
    if not 0 < variance_fraction <= 1:
        raise DataError("variance_fraction must be in (0, 1]")
    check_topology(corpus)
    X = _stack(corpus)
    n = X.shape[0]
    mu = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mu, full_matrices=False)
    var = s**2 / n
    total = var.sum()
    rank = int(np.sum(s > max(s[0], 0) * 1e-10)) if total > 0 else 0
    if rank == 0:
        p = 0
    else:
        frac = np.cumsum(var[:rank]) / var[:rank].sum()
        p = int(np.searchsorted(frac, variance_fraction * (1 - 1e-12)) + 1)
        p = min(p, rank)
    basis = np.ascontiguousarray(Vt[:p].T)
    ref = corpus[0]
    return ShapeBasis(mu, basis, var[:p].copy(), ref.faces, ref.landmarks)


def pca_project(basis: ShapeBasis, mesh: ParameterizedMesh) -> np.ndarray:
    x = mesh.vertices.reshape(-1)
    if x.size != basis.mean_shape.size:
        raise DataError("dimension mismatch: mesh does not match the shape basis")
    return basis.basis.T @ (x - basis.mean_shape)


def pca_reconstruct(basis: ShapeBasis, weights, id=0) -> ParameterizedMesh:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != basis.p:
        raise DataError(f"expected {basis.p} weights, got {w.size}")
    x = basis.basis @ w + basis.mean_shape
    return ParameterizedMesh(id, x.reshape(-1, 3), basis.faces, basis.landmarks)


def feature_fit(points: Sequence[ParamPoint], weights, affine: bool = True) -> FeatureMap:
    """Least-squares (minimum-norm) map from measurement points to PCA weights."""
    W = np.asarray(weights, dtype=np.float64)
    n = len(points)
    if W.ndim == 1:
        W = W.reshape(n, -1)
    if W.shape[0] != n:
        raise DataError("points and weights differ in count")
    if n == 0:
        raise DataError("empty input")
    P = np.array([p.coords for p in points], dtype=np.float64)
    d = P.shape[1]
    if n < d + 1:
        raise DataError(f"underdetermined feature map: {n} subjects for d={d}")
    design = np.hstack([P, np.ones((n, 1))]) if affine else P
    if W.shape[1] == 0:
        return FeatureMap(np.zeros((0, design.shape[1])), affine)
    sol, *_ = np.linalg.lstsq(design, W, rcond=None)
    return FeatureMap(np.ascontiguousarray(sol.T), affine)


def synthesize(basis: ShapeBasis, fmap: FeatureMap, point: ParamPoint, id=None) -> ParameterizedMesh:
    """Mesh for a new measurement point: ``A (F [p; 1]) + mu``."""
    if fmap.matrix.shape[0] != basis.p:
        raise DataError("dimension mismatch: feature map and basis disagree on p")
    return pca_reconstruct(basis, fmap.weights(point.coords), id=point.id if id is None else id)


def synthesizer(basis: ShapeBasis, fmap: FeatureMap):
    """Extrapolation hook for :func:`designcover.shape.design_models`."""

    def hook(points):
        return [synthesize(basis, fmap, p) for p in points]

    return hook


def gaussian_fit(points: Sequence[ParamPoint]) -> GaussianModel:
    """Maximum-likelihood Gaussian (covariance normalized by n)."""
    if len(points) < 2:
        raise DataError("gaussian_fit needs at least 2 points")
    P = np.array([p.coords for p in points], dtype=np.float64)
    mu = P.mean(axis=0)
    C = P - mu
    cov = C.T @ C / P.shape[0]
    return GaussianModel(mu, (cov + cov.T) / 2)


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Square-root factor ``L`` with ``L L^T = cov`` for a PSD matrix."""
    vals, vecs = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size and vals.min() < -PSD_TOL * scale:
        raise DataError("covariance is not positive semi-definite")
    return vecs * np.sqrt(np.clip(vals, 0, None))


def gaussian_sample(model: GaussianModel, count: int, seed: int = 0) -> list[ParamPoint]:
    if count < 1:
        raise DataError("count must be >= 1")
    L = psd_sqrt(model.covariance)
    z = np.random.default_rng(seed).standard_normal((count, model.d))
    X = model.mean + z @ L.T
    return [ParamPoint(i, tuple(row)) for i, row in enumerate(X.tolist())]


def level_set_sample(model: GaussianModel, c: float, count: int, seed: int = 0) -> list[ParamPoint]:
    """Points at Mahalanobis distance exactly ``c`` from the mean.

    Directions are uniform on the unit sphere, pushed through the Cholesky
    factor of the covariance.
    """
    if c < 0:
        raise DataError("level c must be >= 0")
    if count < 1:
        raise DataError("count must be >= 1")
    try:
        L = np.linalg.cholesky(model.covariance)
    except np.linalg.LinAlgError:
        raise DataError("degenerate ellipsoid: covariance is singular") from None
    if np.min(np.abs(np.diag(L))) <= 1e-12 * max(1.0, np.max(np.abs(np.diag(L)))):
        raise DataError("degenerate ellipsoid: covariance is singular")
    z = np.random.default_rng(seed).standard_normal((count, model.d))
    u = z / np.linalg.norm(z, axis=1, keepdims=True)
    X = model.mean + c * (u @ L.T)
    return [ParamPoint(i, tuple(row)) for i, row in enumerate(X.tolist())]


def mahalanobis(model: GaussianModel, coords) -> np.ndarray:
    X = np.atleast_2d(np.asarray(coords, dtype=np.float64)) - model.mean
    sol = np.linalg.solve(model.covariance, X.T)
    return np.sqrt(np.einsum("ij,ji->i", X, sol))


# --- JSON container -------------------------------------------------------

def _matrix(a: np.ndarray) -> dict:
    a2 = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return {"rows": a2.shape[0], "cols": a2.shape[1], "data": a2.reshape(-1).tolist()}


def _unmatrix(m: dict) -> np.ndarray:
    return np.asarray(m["data"], dtype=np.float64).reshape(m["rows"], m["cols"])


def model_to_json(model, seed: int | None = None) -> dict:
    """Serialize a fitted model; matrices are stored row-major."""
    if isinstance(model, ShapeBasis):
        return {
            "type": "ShapeBasis",
            "dims": {"n_vertices": model.n_vertices, "p": model.p},
            "mean_shape": model.mean_shape.tolist(),
            "basis": _matrix(model.basis),
            "variances": model.variances.tolist(),
            "faces": model.faces.tolist(),
            "landmarks": model.landmarks.tolist(),
            "seed": seed,
        }
    if isinstance(model, FeatureMap):
        return {
            "type": "FeatureMap",
            "dims": {"p": model.matrix.shape[0], "d": model.d, "affine": model.affine},
            "matrix": _matrix(model.matrix),
            "seed": seed,
        }
    if isinstance(model, GaussianModel):
        return {
            "type": "GaussianModel",
            "dims": {"d": model.d},
            "mean": model.mean.tolist(),
            "covariance": _matrix(model.covariance),
            "seed": seed,
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(obj: dict):
    kind = obj.get("type")
    if kind == "ShapeBasis":
        mu = np.asarray(obj["mean_shape"], dtype=np.float64)
        p = obj["dims"]["p"]
        basis = np.asarray(obj["basis"]["data"], dtype=np.float64).reshape(mu.size, p)
        return ShapeBasis(mu, basis, np.asarray(obj["variances"], dtype=np.float64),
                          np.asarray(obj["faces"], dtype=np.int64).reshape(-1, 3),
                          np.asarray(obj["landmarks"], dtype=np.int64))
    if kind == "FeatureMap":
        dims = obj["dims"]
        cols = dims["d"] + (1 if dims["affine"] else 0)
        mat = np.asarray(obj["matrix"]["data"], dtype=np.float64).reshape(dims["p"], cols)
        return FeatureMap(mat, bool(dims["affine"]))
    if kind == "GaussianModel":
        return GaussianModel(np.asarray(obj["mean"]), _unmatrix(obj["covariance"]))
    raise DataError(f"unknown model type {kind!r}")


def save_model(model, path, seed: int | None = None):
    with open(path, "w") as fh:
        json.dump(model_to_json(model, seed), fh, indent=1)


def load_model(path):
    with open(path) as fh:
        return model_from_json(json.load(fh))
