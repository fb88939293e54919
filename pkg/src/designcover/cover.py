"""Covering a d-dimensional measurement space with translated tolerance boxes.

Every subject is a point in R^d. A tolerance box is an axis-aligned closed box
with fixed side lengths; a box "fits" every subject whose point it contains.
This module builds candidate box sets, runs the greedy full-cover and
fixed-k covers, the shifted-grid (1 + 1/l)^2 approximation in the plane, and
exhaustive oracles used to check them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DataError, SizeCapError, UsageError

COMBINATORIAL_CAP = 10**6
ORACLE_MAX_POINTS = 15
ORACLE_MAX_BOXES = 60
ORACLE_MAX_K = 4

ALGORITHMS = ("greedy-all", "greedy-k", "shifting", "oracle-min", "oracle-max-k")
FULL_COVER_ALGORITHMS = ("greedy-all", "shifting", "oracle-min")


@dataclass(frozen=True)
class ParamPoint:
    """One subject's ordered measurements (meters)."""

    id: int
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) < 1:
            raise DataError(f"point {self.id}: needs at least one coordinate")
        if not all(math.isfinite(c) for c in coords):
            raise DataError(f"point {self.id}: non-finite coordinate")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "id", int(self.id))

    @property
    def d(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class ToleranceBox:
    """Closed box ``{x : |x[i] - center[i]| <= side_lengths[i] / 2}``."""

    center: tuple[float, ...]
    side_lengths: tuple[float, ...]

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        sides = tuple(float(s) for s in self.side_lengths)
        if len(center) != len(sides) or not center:
            raise DataError("dimension mismatch")
        if not all(s > 0 and math.isfinite(s) for s in sides):
            raise DataError("invalid tolerance")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side_lengths", sides)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def lower(self) -> tuple[float, ...]:
        return tuple(c - s / 2 for c, s in zip(self.center, self.side_lengths))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(c + s / 2 for c, s in zip(self.center, self.side_lengths))

    def contains(self, coords: Sequence[float]) -> bool:
        if len(coords) != self.d:
            raise DataError("dimension mismatch")
        slack = kernels.MEMBERSHIP_REL_SLACK
        for x, c, s in zip(coords, self.center, self.side_lengths):
            h = s / 2
            if abs(x - c) > h + slack * (abs(c) + h):
                return False
        return True


@dataclass
class CandidateSet:
    """Candidate boxes (shared side lengths) and their point incidence.

    ``incidence[b, j]`` is True when box ``b`` contains point ``j`` (points
    in input order). ``members`` and ``reverse`` are the two incidence views
    keyed by point id.
    """

    point_ids: tuple[int, ...]
    coords: np.ndarray
    side_lengths: tuple[float, ...]
    centers: np.ndarray
    incidence: np.ndarray
    mode: str

    @property
    def n(self) -> int:
        return len(self.point_ids)

    @property
    def d(self) -> int:
        return len(self.side_lengths)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def boxes(self) -> list[ToleranceBox]:
        return [ToleranceBox(tuple(c), self.side_lengths) for c in self.centers]

    @property
    def members(self) -> list[frozenset[int]]:
        ids = np.asarray(self.point_ids)
        return [frozenset(ids[row].tolist()) for row in self.incidence]

    @property
    def reverse(self) -> dict[int, frozenset[int]]:
        return {
            pid: frozenset(np.flatnonzero(self.incidence[:, j]).tolist())
            for j, pid in enumerate(self.point_ids)
        }

    def masks(self) -> list[int]:
        """Covered-point bit mask per box (bit j = point j)."""
        out = [0] * len(self)
        for lo in range(0, self.n, 64):
            words = _pack64(self.incidence[:, lo:lo + 64]).tolist()
            out = [m | (w << lo) for m, w in zip(out, words)]
        return out


def _pack64(inc: np.ndarray) -> np.ndarray:
    """Rows of a boolean matrix with at most 64 columns as uint64 bit masks."""
    bits = np.left_shift(np.uint64(1), np.arange(inc.shape[1], dtype=np.uint64))
    return np.bitwise_or.reduce(np.where(inc, bits, np.uint64(0)), axis=1) if inc.shape[1] else \
        np.zeros(inc.shape[0], dtype=np.uint64)


@dataclass
class CoverSolution:
    selected: list[ToleranceBox]
    members: list[tuple[int, ...]]
    covered_ids: tuple[int, ...]
    uncovered_ids: tuple[int, ...]
    algorithm: str
    params: dict = field(default_factory=dict)
    box_indices: tuple[int, ...] | None = None

    @property
    def k(self) -> int:
        return len(self.selected)

    @property
    def coverage(self) -> float:
        total = len(self.covered_ids) + len(self.uncovered_ids)
        return len(self.covered_ids) / total if total else 1.0


def _prepare(points: Sequence[ParamPoint], tolerances: Sequence[float]):
    if len(points) == 0:
        raise DataError("empty input")
    tol = np.asarray([float(t) for t in tolerances], dtype=np.float64)
    if tol.ndim != 1 or tol.size == 0:
        raise DataError("invalid tolerance: need at least one dimension")
    if not np.all(np.isfinite(tol)) or np.any(tol <= 0):
        raise DataError("invalid tolerance")
    d = tol.size
    if any(p.d != d for p in points):
        raise DataError("dimension mismatch")
    ids = tuple(p.id for p in points)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate point id")
    coords = np.array([p.coords for p in points], dtype=np.float64).reshape(len(points), d)
    return ids, coords, tol


def _candidate_set(ids, coords, tol, centers, mode) -> CandidateSet:
    centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, tol.size)
    inc = kernels.box_incidence(coords, centers, tol / 2).astype(bool)
    return CandidateSet(ids, coords, tuple(tol.tolist()), centers, inc, mode)


def candidate_boxes_centered(points: Sequence[ParamPoint], tolerances: Sequence[float]) -> CandidateSet:
    """One box per point, centered on it."""
    ids, coords, tol = _prepare(points, tolerances)
    return _candidate_set(ids, coords, tol, coords.copy(), "centered")


def candidate_boxes_combinatorial(
    points: Sequence[ParamPoint],
    tolerances: Sequence[float],
    cap: int = COMBINATORIAL_CAP,
) -> CandidateSet:
    """All translates whose interval in every dimension ends at a point coordinate.

    Per dimension the intervals are ``[c - s, c]`` and ``[c, c + s]`` for
    every coordinate ``c``; boxes are their Cartesian product with duplicate
    centers removed.
    """
    ids, coords, tol = _prepare(points, tolerances)
    n, d = coords.shape
    if (2 * n) ** d > cap:
        raise SizeCapError(
            f"combinatorial candidates: (2n)^d = {(2 * n) ** d} exceeds cap {cap}"
        )
    axes = []
    for i in range(d):
        half = tol[i] / 2
        col = coords[:, i]
        axes.append(np.unique(np.concatenate([col - half, col + half])))
    centers = np.array(list(itertools.product(*axes)), dtype=np.float64).reshape(-1, d)
    return _candidate_set(ids, coords, tol, centers, "combinatorial")


def custom_candidates(
    points: Sequence[ParamPoint], tolerances: Sequence[float], centers
) -> CandidateSet:
    """Candidate set from caller-supplied box centers."""
    ids, coords, tol = _prepare(points, tolerances)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != tol.size:
        raise DataError("dimension mismatch")
    return _candidate_set(ids, coords, tol, centers, "custom")


def solution_from_centers(
    ids: Sequence[int],
    coords: np.ndarray,
    side_lengths: Sequence[float],
    centers,
    algorithm: str,
    params: dict | None = None,
    box_indices: Sequence[int] | None = None,
) -> CoverSolution:
    """Package selected box centers as a solution with members over all points."""
    tol = np.asarray(side_lengths, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, tol.size)
    inc = kernels.box_incidence(coords, centers, tol / 2).astype(bool)
    id_arr = np.asarray(ids)
    members = [tuple(id_arr[row].tolist()) for row in inc]
    hit = inc.any(axis=0) if len(centers) else np.zeros(len(ids), dtype=bool)
    return CoverSolution(
        selected=[ToleranceBox(tuple(c), tuple(tol.tolist())) for c in centers],
        members=members,
        covered_ids=tuple(id_arr[hit].tolist()),
        uncovered_ids=tuple(id_arr[~hit].tolist()),
        algorithm=algorithm,
        params=dict(params or {}),
        box_indices=None if box_indices is None else tuple(int(b) for b in box_indices),
    )


def _from_picks(cands: CandidateSet, picks, algorithm, params=None) -> CoverSolution:
    picks = [int(p) for p in picks]
    return solution_from_centers(
        cands.point_ids, cands.coords, cands.side_lengths,
        cands.centers[picks], algorithm, params, picks,
    )


def _orphans(cands: CandidateSet) -> list[int]:
    hit = cands.incidence.any(axis=0)
    return [pid for pid, h in zip(cands.point_ids, hit) if not h]


def greedy_cover_all(cands: CandidateSet) -> CoverSolution:
    """Repeatedly take the box covering the most uncovered points.

    Ties go to the lowest candidate index. Runs in O(d n r) including the
    incidence computation.
    """
    orphans = _orphans(cands)
    if orphans:
        raise DataError(f"points not covered by any candidate box: {orphans}")
    picks = kernels.greedy_select(cands.incidence.view(np.uint8), len(cands))
    return _from_picks(cands, picks, "greedy-all", {"candidates": cands.mode})


def greedy_cover_k(cands: CandidateSet, k: int) -> CoverSolution:
    """Greedy cover stopped after ``k`` boxes (or earlier once everything is covered)."""
    if int(k) != k or k < 1:
        raise UsageError("invalid k")
    picks = kernels.greedy_select(cands.incidence.view(np.uint8), int(k))
    return _from_picks(cands, picks, "greedy-k", {"candidates": cands.mode, "k": int(k)})


def reduced_candidates(cands: CandidateSet) -> list[int]:
    """Indices of the boxes whose covered set is nonempty and maximal.

    Among boxes with the same covered set only the lowest index is kept; a
    box whose set is strictly contained in another's is dropped. Optimal cover
    sizes and max-coverage counts are unchanged by the reduction.
    """
    masks = cands.masks()
    first: dict[int, int] = {}
    for b, m in enumerate(masks):
        if m and m not in first:
            first[m] = b
    distinct = sorted(first.items(), key=lambda kv: kv[1])
    if cands.n <= 64:
        M = np.array([m for m, _ in distinct], dtype=np.uint64)
        dominated = np.zeros(M.size, dtype=bool)
        for lo in range(0, M.size, 512):
            rows = M[lo:lo + 512, None]
            # distinct masks, so "contained in another" means strictly contained
            dominated[lo:lo + 512] = (((rows & M[None, :]) == rows) & (rows != M[None, :])).any(axis=1)
        return [b for (_, b), dom in zip(distinct, dominated) if not dom]
    keep = []
    for m, b in distinct:
        if not any(o != m and (m & o) == m for o, _ in distinct):
            keep.append(b)
    return keep


def _check_oracle_size(n: int, r: int, max_points: int, max_boxes: int):
    if n > max_points or r > max_boxes:
        raise SizeCapError(
            f"oracle size cap exceeded: {n} points (cap {max_points}), "
            f"{r} non-dominated boxes (cap {max_boxes})"
        )


def exact_min_cover(
    cands: CandidateSet,
    max_points: int = ORACLE_MAX_POINTS,
    max_boxes: int = ORACLE_MAX_BOXES,
) -> CoverSolution:
    """Minimum-cardinality cover by exhaustive search in increasing size.

    Works on the non-dominated candidates (:func:`reduced_candidates`); among
    minimum covers the lexicographically smallest index tuple of that reduced
    family is returned. The size caps apply after reduction.
    """
    orphans = _orphans(cands)
    if orphans:
        raise DataError(f"points not covered by any candidate box: {orphans}")
    keep = reduced_candidates(cands)
    _check_oracle_size(cands.n, len(keep), max_points, max_boxes)
    if cands.n > kernels.MAX_MASK_POINTS:
        raise SizeCapError("oracle size cap exceeded")
    masks = cands.masks()
    sub = np.array([masks[b] for b in keep], dtype=np.uint64)
    full = (1 << cands.n) - 1
    found = kernels.min_cover_search(sub, full, len(keep))
    picks = [keep[i] for i in found]
    return _from_picks(cands, picks, "oracle-min", {"candidates": cands.mode})


def exact_max_coverage(
    cands: CandidateSet,
    k: int,
    max_points: int = ORACLE_MAX_POINTS,
    max_boxes: int = ORACLE_MAX_BOXES,
    max_k: int = ORACLE_MAX_K,
) -> CoverSolution:
    """The ``k`` boxes covering the most points, by enumeration of k-subsets."""
    if int(k) != k or k < 1:
        raise UsageError("invalid k")
    keep = reduced_candidates(cands)
    _check_oracle_size(cands.n, len(keep), max_points, max_boxes)
    if k > max_k:
        raise SizeCapError(f"oracle size cap exceeded: k={k} (cap {max_k})")
    masks = cands.masks()
    sub = np.array([masks[b] for b in keep], dtype=np.uint64)
    full = (1 << cands.n) - 1
    found, _ = kernels.max_coverage_search(sub, full, int(k))
    picks = [keep[i] for i in found]
    return _from_picks(cands, picks, "oracle-max-k", {"candidates": cands.mode, "k": int(k)})


def shifting_epsilon(l: int, d: int = 2) -> float:
    """The epsilon with ``1 + epsilon = (1 + 1/l)^d``."""
    return (1.0 + 1.0 / l) ** d - 1.0


def _solve_block(coords: np.ndarray, tol: np.ndarray, max_size: int) -> np.ndarray:
    """Exact minimum cover of a small point set with endpoint-anchored boxes."""
    m = coords.shape[0]
    if m > kernels.MAX_MASK_POINTS:
        raise SizeCapError(
            f"shifting block holds {m} points; exact block solver is capped at "
            f"{kernels.MAX_MASK_POINTS}. Use a larger l or greedy covering."
        )
    ids = tuple(range(m))
    half = tol / 2
    axes = [np.unique(np.concatenate([coords[:, i] - half[i], coords[:, i] + half[i]]))
            for i in range(tol.size)]
    centers = np.array(list(itertools.product(*axes)), dtype=np.float64)
    block = _candidate_set(ids, coords, tol, centers, "combinatorial")
    keep = reduced_candidates(block)
    masks = block.masks()
    sub = np.array([masks[b] for b in keep], dtype=np.uint64)
    found = kernels.min_cover_search(sub, (1 << m) - 1, min(max_size, m))
    if found is None:  # cannot happen: every point has a box through it
        raise RuntimeError("block cover search failed")
    return centers[[keep[i] for i in found]]


def shifting_cover_2d(points: Sequence[ParamPoint], tolerances: Sequence[float], l: int) -> CoverSolution:
    """Shifted-grid covering in the plane with approximation factor (1 + 1/l)^2.

    The grid has cell widths equal to the tolerances and is anchored at the
    componentwise minimum. For each of the l^2 offsets the cells are grouped
    into l x l blocks, every nonempty block is covered optimally, and the
    offset with the fewest boxes overall wins (first offset on ties).
    """
    ids, coords, tol = _prepare(points, tolerances)
    if tol.size != 2:
        raise UsageError("shifting implemented for d=2 only")
    if int(l) != l or l < 1:
        raise UsageError("invalid l: must be an integer >= 1")
    l = int(l)
    cells = np.floor((coords - coords.min(axis=0)) / tol).astype(np.int64)
    max_size = (l + 1) ** 2
    memo: dict[tuple[int, ...], np.ndarray] = {}

    best = None
    for sx in range(l):
        for sy in range(l):
            keys = np.stack([(cells[:, 0] - sx) // l, (cells[:, 1] - sy) // l], axis=1)
            blocks: dict[tuple[int, int], list[int]] = {}
            for j, key in enumerate(map(tuple, keys.tolist())):
                blocks.setdefault(key, []).append(j)
            chosen = []
            for key in sorted(blocks):
                members = tuple(blocks[key])
                if members not in memo:
                    memo[members] = _solve_block(coords[list(members)], tol, max_size)
                chosen.append(memo[members])
            total = sum(len(c) for c in chosen)
            if best is None or total < best[0]:
                best = (total, (sx, sy), np.concatenate(chosen, axis=0))
    total, shift, centers = best
    params = {"l": l, "epsilon": shifting_epsilon(l, 2), "shift": list(shift)}
    return solution_from_centers(ids, coords, tol, centers, "shifting", params)


def points_array(points: Sequence[ParamPoint]) -> np.ndarray:
    return np.array([p.coords for p in points], dtype=np.float64)


def coverage_fraction(boxes: Sequence[ToleranceBox], coords) -> float:
    """Fraction of rows of ``coords`` inside at least one closed box."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise DataError("dimension mismatch")
    if coords.shape[0] == 0:
        raise DataError("empty input")
    if not boxes:
        return 0.0
    d = boxes[0].d
    if coords.shape[1] != d or any(b.d != d for b in boxes):
        raise DataError("dimension mismatch")
    # boxes may carry different side lengths (hand-edited reports)
    hit = np.zeros(coords.shape[0], dtype=bool)
    for sides in sorted({b.side_lengths for b in boxes}):
        centers = np.array([b.center for b in boxes if b.side_lengths == sides])
        inc = kernels.box_incidence(coords, centers, np.asarray(sides) / 2)
        hit |= inc.astype(bool).any(axis=0)
    return float(hit.sum()) / coords.shape[0]
