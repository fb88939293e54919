"""Pure-Python (numpy) implementations of the covering kernels.

These mirror ``_ckernels.pyx`` function for function and are used when the
compiled extension is unavailable or ``DESIGNCOVER_PURE_PYTHON=1`` is set.
Bit masks are plain Python ints here, so the 64-point limit of the compiled
path is enforced by the callers, not by this module.
"""

import numpy as np

_CHUNK = 256


def box_incidence(points, centers, half, rel_slack):
    """Closed-box membership matrix ``inc[b, j]`` (uint8, boxes x points)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    half = np.ascontiguousarray(half, dtype=np.float64)
    r = centers.shape[0]
    n = points.shape[0]
    out = np.empty((r, n), dtype=np.uint8)
    for lo in range(0, r, _CHUNK):
        c = centers[lo:lo + _CHUNK]
        limit = half + rel_slack * (np.abs(c) + half)
        diff = np.abs(points[None, :, :] - c[:, None, :])
        out[lo:lo + _CHUNK] = np.all(diff <= limit[:, None, :], axis=2)
    return out


def greedy_select(incidence, max_boxes):
    """Greedy max-uncovered selection; ties go to the lowest box index.

    Stops after ``max_boxes`` picks or when no box gains a new point.
    """
    inc = np.asarray(incidence, dtype=bool)
    counts = inc.sum(axis=1).astype(np.int64)
    covered = np.zeros(inc.shape[1], dtype=bool)
    picks = []
    while len(picks) < max_boxes:
        if counts.size == 0:
            break
        best = int(np.argmax(counts))
        if counts[best] <= 0:
            break
        picks.append(best)
        newly = inc[best] & ~covered
        covered |= newly
        counts -= inc[:, newly].sum(axis=1)
    return np.asarray(picks, dtype=np.int64)


def _suffix_tables(masks):
    r = len(masks)
    suffix_union = [0] * (r + 1)
    suffix_maxpop = [0] * (r + 1)
    for i in range(r - 1, -1, -1):
        suffix_union[i] = suffix_union[i + 1] | masks[i]
        suffix_maxpop[i] = max(suffix_maxpop[i + 1], bin(masks[i]).count("1"))
    return suffix_union, suffix_maxpop


def min_cover_search(masks, full, max_size):
    """Lexicographically first minimum-cardinality cover, or None.

    Subsets are tried in increasing size, and within one size in
    lexicographic index order, so the first hit is the answer.
    """
    masks = [int(m) for m in masks]
    full = int(full)
    if full == 0:
        return []
    r = len(masks)
    suffix_union, suffix_maxpop = _suffix_tables(masks)
    if suffix_union[0] & full != full:
        return None
    chosen = []

    def dfs(start, covered, remaining):
        if covered == full:
            return True
        if remaining == 0:
            return False
        if (covered | suffix_union[start]) & full != full:
            return False
        missing = bin(full & ~covered).count("1")
        if suffix_maxpop[start] * remaining < missing:
            return False
        for i in range(start, r - remaining + 1):
            chosen.append(i)
            if dfs(i + 1, covered | masks[i], remaining - 1):
                return True
            chosen.pop()
        return False

    for size in range(1, min(max_size, r) + 1):
        if dfs(0, 0, size):
            return list(chosen)
    return None


def max_coverage_search(masks, full, k):
    """Best ``k``-subset by covered count; the lexicographically first wins ties.

    Returns ``(indices, count)``.
    """
    masks = [int(m) & int(full) for m in masks]
    r = len(masks)
    k = min(k, r)
    _, suffix_maxpop = _suffix_tables(masks)
    best = [-1, []]
    chosen = []

    def dfs(start, covered, remaining):
        pop = bin(covered).count("1")
        if remaining == 0:
            if pop > best[0]:
                best[0] = pop
                best[1] = list(chosen)
            return
        if pop + remaining * suffix_maxpop[start] <= best[0]:
            return
        for i in range(start, r - remaining + 1):
            chosen.append(i)
            dfs(i + 1, covered | masks[i], remaining - 1)
            chosen.pop()

    dfs(0, 0, k)
    return best[1], max(best[0], 0)
