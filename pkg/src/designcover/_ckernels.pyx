# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled covering kernels.

Same contracts as ``_pykernels``. Exact searches work on uint64 bit masks,
so callers must keep point sets at or below 64 elements.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _pop(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


def box_incidence(points, centers, half, double rel_slack):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] H = np.ascontiguousarray(half, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], r = C.shape[0], d = P.shape[1]
    out = np.zeros((r, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] O = out
    cdef double[::1] lim = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t b, j, i
    cdef bint inside
    with nogil:
        for b in range(r):
            for i in range(d):
                lim[i] = H[i] + rel_slack * (fabs(C[b, i]) + H[i])
            for j in range(n):
                # branchless: hit rates near 50% make an early exit mispredict
                inside = True
                for i in range(d):
                    inside &= fabs(P[j, i] - C[b, i]) <= lim[i]
                O[b, j] = inside
    return out


def greedy_select(incidence, Py_ssize_t max_boxes):
    cdef const cnp.uint8_t[:, ::1] inc = np.ascontiguousarray(incidence, dtype=np.uint8)
    cdef Py_ssize_t r = inc.shape[0], n = inc.shape[1]
    cdef Py_ssize_t b, j, best
    cdef int64_t bestc
    # point-major copy so removing a covered point is one contiguous, branchless sweep
    cdef const cnp.uint8_t[:, ::1] incT = np.ascontiguousarray(np.asarray(inc).T)
    cdef cnp.int64_t[::1] counts = np.asarray(inc).sum(axis=1, dtype=np.int64)
    cdef cnp.uint8_t[::1] covered = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] picks = np.empty(max(0, min(max_boxes, r)), dtype=np.int64)
    cdef Py_ssize_t npick = 0
    with nogil:
        while npick < max_boxes:
            best = -1
            bestc = 0
            for b in range(r):
                if counts[b] > bestc:
                    bestc = counts[b]
                    best = b
            if best < 0:
                break
            picks[npick] = best
            npick += 1
            for j in range(n):
                if inc[best, j] and not covered[j]:
                    covered[j] = 1
                    for b in range(r):
                        counts[b] -= incT[j, b]
    return np.asarray(picks[:npick]).copy()


cdef bint _cover_dfs(const uint64_t* masks, const uint64_t* suf_union,
                     const int* suf_maxpop, Py_ssize_t r, uint64_t full,
                     Py_ssize_t start, uint64_t covered, int remaining,
                     Py_ssize_t* chosen, int depth) noexcept nogil:
    cdef Py_ssize_t i
    if covered == full:
        return True
    if remaining == 0:
        return False
    if ((covered | suf_union[start]) & full) != full:
        return False
    if suf_maxpop[start] * remaining < _pop(full & ~covered):
        return False
    for i in range(start, r - remaining + 1):
        chosen[depth] = i
        if _cover_dfs(masks, suf_union, suf_maxpop, r, full, i + 1,
                      covered | masks[i], remaining - 1, chosen, depth + 1):
            return True
    return False


cdef void _suffix(const uint64_t* masks, Py_ssize_t r, uint64_t* suf_union,
                  int* suf_maxpop) noexcept nogil:
    cdef Py_ssize_t i
    cdef int p
    suf_union[r] = 0
    suf_maxpop[r] = 0
    for i in range(r - 1, -1, -1):
        suf_union[i] = suf_union[i + 1] | masks[i]
        p = _pop(masks[i])
        suf_maxpop[i] = p if p > suf_maxpop[i + 1] else suf_maxpop[i + 1]


def min_cover_search(masks, full, int max_size):
    cdef const uint64_t[::1] M = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef uint64_t F = <uint64_t>int(full)
    cdef Py_ssize_t r = M.shape[0]
    if F == 0:
        return []
    if r == 0:
        return None
    cdef uint64_t* suf_union = <uint64_t*>malloc((r + 1) * sizeof(uint64_t))
    cdef int* suf_maxpop = <int*>malloc((r + 1) * sizeof(int))
    cdef Py_ssize_t* chosen = <Py_ssize_t*>malloc((r + 1) * sizeof(Py_ssize_t))
    cdef int size, limit
    cdef bint found = False
    try:
        _suffix(&M[0], r, suf_union, suf_maxpop)
        if (suf_union[0] & F) != F:
            return None
        limit = max_size if max_size < r else <int>r
        size = 1
        with nogil:
            while size <= limit:
                if _cover_dfs(&M[0], suf_union, suf_maxpop, r, F, 0, 0, size,
                              chosen, 0):
                    found = True
                    break
                size += 1
        if not found:
            return None
        return [int(chosen[i]) for i in range(size)]
    finally:
        free(suf_union)
        free(suf_maxpop)
        free(chosen)


cdef void _maxcov_dfs(const uint64_t* masks, const int* suf_maxpop, Py_ssize_t r,
                      Py_ssize_t start, uint64_t covered, int remaining,
                      Py_ssize_t* chosen, int depth, int* best,
                      Py_ssize_t* best_chosen) noexcept nogil:
    cdef Py_ssize_t i
    cdef int pop = _pop(covered)
    if remaining == 0:
        if pop > best[0]:
            best[0] = pop
            for i in range(depth):
                best_chosen[i] = chosen[i]
        return
    if pop + remaining * suf_maxpop[start] <= best[0]:
        return
    for i in range(start, r - remaining + 1):
        chosen[depth] = i
        _maxcov_dfs(masks, suf_maxpop, r, i + 1, covered | masks[i],
                    remaining - 1, chosen, depth + 1, best, best_chosen)


def max_coverage_search(masks, full, int k):
    cdef uint64_t F = <uint64_t>int(full)
    arr = np.ascontiguousarray(masks, dtype=np.uint64) & np.uint64(F)
    cdef const uint64_t[::1] M = arr
    cdef Py_ssize_t r = M.shape[0]
    if k > r:
        k = <int>r
    if r == 0:
        return [], 0
    cdef uint64_t* suf_union = <uint64_t*>malloc((r + 1) * sizeof(uint64_t))
    cdef int* suf_maxpop = <int*>malloc((r + 1) * sizeof(int))
    cdef Py_ssize_t* chosen = <Py_ssize_t*>malloc((r + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* best_chosen = <Py_ssize_t*>malloc((r + 1) * sizeof(Py_ssize_t))
    cdef int best = -1
    try:
        _suffix(&M[0], r, suf_union, suf_maxpop)
        with nogil:
            _maxcov_dfs(&M[0], suf_maxpop, r, 0, 0, k, chosen, 0, &best,
                        best_chosen)
        return [int(best_chosen[i]) for i in range(k)], max(best, 0)
    finally:
        free(suf_union)
        free(suf_maxpop)
        free(chosen)
        free(best_chosen)
