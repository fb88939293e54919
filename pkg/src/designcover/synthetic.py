"""Synthetic corresponded corpora (head and face proxies).

Each proxy is an ellipsoid mesh with landmark pairs along coordinate axes
and deformation modes built so every landmark distance is an exact affine
function of the mode weights. That makes the measurement -> shape pipeline
exactly linear on these corpora, which the tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shape import Measurement, MeasurementSpec, ParameterizedMesh
from .stats import GaussianModel


@dataclass(frozen=True, eq=False)
class ProxyModel:
    template: ParameterizedMesh
    modes: np.ndarray  # (q, V, 3)
    weight_model: GaussianModel
    spec: MeasurementSpec
    mode_names: tuple[str, ...]


def ellipsoid_mesh(a: float, b: float, c: float, nlat: int = 11, nlon: int = 16):
    """Latitude/longitude triangulated ellipsoid.

    Vertex 0 is the south pole, then ``nlat`` rings of ``nlon`` vertices
    (ring ``i`` at latitude ``pi * (i / (nlat + 1) - 1/2)``), then the north
    pole. Longitude 0 faces +y. Returns ``(vertices, faces, ring_index)``
    where ``ring_index(i, k)`` gives the vertex id on ring ``i`` (1-based),
    longitude step ``k``.
    """
    verts = [(0.0, 0.0, -c)]
    for i in range(1, nlat + 1):
        phi = np.pi * (i / (nlat + 1) - 0.5)
        for k in range(nlon):
            th = 2 * np.pi * k / nlon
            verts.append((a * np.cos(phi) * np.sin(th), b * np.cos(phi) * np.cos(th), c * np.sin(phi)))
    verts.append((0.0, 0.0, c))
    north = len(verts) - 1

    def ring(i, k):
        return 1 + (i - 1) * nlon + (k % nlon)

    faces = []
    for k in range(nlon):
        faces.append((0, ring(1, k + 1), ring(1, k)))
        faces.append((north, ring(nlat, k), ring(nlat, k + 1)))
    for i in range(1, nlat):
        for k in range(nlon):
            p, q = ring(i, k), ring(i, k + 1)
            r, s = ring(i + 1, k), ring(i + 1, k + 1)
            faces.append((p, q, s))
            faces.append((p, s, r))
    return np.array(verts), np.array(faces, dtype=np.int64), ring


def _axis_scale_mode(vertices, axis, half_len):
    """Moves the +/- ``half_len`` points on ``axis`` apart by one unit per unit weight."""
    mode = np.zeros_like(vertices)
    mode[:, axis] = 0.5 * vertices[:, axis] / half_len
    return mode


def _bump_mode(vertices, landmark_vertices, freq, phase):
    """Smooth radial bump that leaves every landmark vertex fixed."""
    norm = np.linalg.norm(vertices, axis=1, keepdims=True)
    normal = np.divide(vertices, norm, out=np.zeros_like(vertices), where=norm > 0)
    th = np.arctan2(vertices[:, 0], vertices[:, 1])
    amp = np.sin(freq * th + phase) * (1 - (vertices[:, 2] / np.abs(vertices[:, 2]).max()) ** 2)
    mode = normal * amp[:, None]
    mode[np.asarray(landmark_vertices)] = 0.0
    return mode


def head_proxy() -> ProxyModel:
    """Head stand-in with width, depth and face-height measurements.

    Tolerances are the helmet adjustments 2.99, 3.25 and 3.33 cm.
    """
    a, b, c = 0.078, 0.098, 0.12
    nlat, nlon = 11, 16
    V, F, ring = ellipsoid_mesh(a, b, c, nlat, nlon)
    eq = (nlat + 1) // 2
    lm = np.array([
        ring(eq, nlon // 4), ring(eq, 3 * nlon // 4),  # eurion R/L (+x/-x)
        ring(eq, 0), ring(eq, nlon // 2),  # glabella / opisthocranion (+y/-y)
        ring(eq + 2, 0), ring(eq - 2, 0),  # sellion / menton, same y
    ])
    template = ParameterizedMesh(0, V, F, lm)
    face_half = abs(V[lm[4], 2])
    modes = np.stack([
        _axis_scale_mode(V, 0, a),
        _axis_scale_mode(V, 1, b),
        _axis_scale_mode(V, 2, face_half),
        0.004 * _bump_mode(V, lm, 3, 0.3),
        0.004 * _bump_mode(V, lm, 2, 1.1),
    ])
    sd = np.array([0.0085, 0.0092, 0.0090, 1.0, 1.0])
    corr = np.eye(5)
    corr[0, 1] = corr[1, 0] = 0.35
    corr[0, 2] = corr[2, 0] = 0.2
    corr[1, 2] = corr[2, 1] = 0.25
    cov = corr * np.outer(sd, sd)
    spec = MeasurementSpec((
        Measurement("head_width", 0, 1, 0.0299),
        Measurement("head_depth", 2, 3, 0.0325),
        Measurement("face_height", 4, 5, 0.0333),
    ))
    return ProxyModel(template, modes, GaussianModel(np.zeros(5), cov), spec,
                      ("width", "depth", "face_height", "bump3", "bump2"))


def face_proxy() -> ProxyModel:
    """Face stand-in with face width and nose-bridge width (glasses fitting).

    Tolerances are 2.67 cm and 0.19 cm.
    """
    a, b, c = 0.07, 0.09, 0.11
    nlat, nlon = 11, 32
    V, F, ring = ellipsoid_mesh(a, b, c, nlat, nlon)
    eq = (nlat + 1) // 2
    lm = np.array([
        ring(eq, nlon // 4), ring(eq, 3 * nlon // 4),  # zygion R/L
        ring(eq + 1, 1), ring(eq + 1, -1),  # nose bridge R/L, same y and z
    ])
    template = ParameterizedMesh(0, V, F, lm)
    bridge_half = abs(V[lm[2], 0])
    nose = V[lm[2]]
    # localized x-stretch around the nose, equal weight at both bridge points
    dist = np.hypot(V[:, 1] - nose[1], V[:, 2] - nose[2])
    falloff = np.exp(-((dist / 0.02) ** 2))
    bridge = np.zeros_like(V)
    bridge[:, 0] = 0.5 * V[:, 0] / bridge_half * falloff
    modes = np.stack([
        _axis_scale_mode(V, 0, a),
        bridge,
        0.003 * _bump_mode(V, lm, 3, 0.7),
    ])
    sd = np.array([0.0062, 0.0016, 1.0])
    cov = np.diag(sd**2)
    cov[0, 1] = cov[1, 0] = 0.3 * sd[0] * sd[1]
    spec = MeasurementSpec((
        Measurement("face_width", 0, 1, 0.0267),
        Measurement("nose_bridge_width", 2, 3, 0.0019),
    ))
    return ProxyModel(template, modes, GaussianModel(np.zeros(3), cov), spec,
                      ("width", "bridge", "bump3"))


PROXIES = {"heads": head_proxy, "faces": face_proxy}
