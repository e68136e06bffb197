# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled top-k selection kernel.

Same contract as ``_topk_py.top_k_desc``: indices of the k largest scores,
ordered by (score descending, index ascending). Implemented as a bounded
binary min-heap over (score, index) pairs, O(n log k) instead of the
fallback's full O(n log n) sort. Because both backends compare the same
float64 score array with the same total order (-score, index), their outputs
are bit-identical.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline bint _worse(double sa, Py_ssize_t ia, double sb, Py_ssize_t ib) nogil:
    # True when (sa, ia) ranks strictly below (sb, ib) in the
    # (score desc, index asc) total order.
    if sa != sb:
        return sa < sb
    return ia > ib


def top_k_desc(scores, Py_ssize_t k):
    """Indices of the k largest entries, score-descending with index tie-break."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    if k <= 0 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")

    cdef cnp.ndarray[cnp.float64_t, ndim=1] heap_s = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] heap_i = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(k, dtype=np.int64)

    cdef double[::1] sv = s
    cdef double[::1] hs = heap_s
    cdef cnp.int64_t[::1] hi = heap_i
    cdef cnp.int64_t[::1] ov = out

    cdef Py_ssize_t i, size, pos, child, parent, last
    cdef double val

    with nogil:
        # Min-heap keyed by the same total order: the root is the worst of
        # the current k best, so a new candidate replaces it when better.
        size = 0
        for i in range(n):
            val = sv[i]
            if size < k:
                pos = size
                hs[pos] = val
                hi[pos] = i
                size += 1
                while pos > 0:
                    parent = (pos - 1) >> 1
                    if _worse(hs[pos], hi[pos], hs[parent], hi[parent]):
                        hs[pos], hs[parent] = hs[parent], hs[pos]
                        hi[pos], hi[parent] = hi[parent], hi[pos]
                        pos = parent
                    else:
                        break
            elif _worse(hs[0], hi[0], val, i):
                hs[0] = val
                hi[0] = i
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= k:
                        break
                    if child + 1 < k and _worse(hs[child + 1], hi[child + 1], hs[child], hi[child]):
                        child += 1
                    if _worse(hs[child], hi[child], hs[pos], hi[pos]):
                        hs[pos], hs[child] = hs[child], hs[pos]
                        hi[pos], hi[child] = hi[child], hi[pos]
                        pos = child
                    else:
                        break

        # Repeated extract-min fills the output from worst to best.
        for last in range(k - 1, -1, -1):
            ov[last] = hi[0]
            size -= 1
            hs[0] = hs[size]
            hi[0] = hi[size]
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= size:
                    break
                if child + 1 < size and _worse(hs[child + 1], hi[child + 1], hs[child], hi[child]):
                    child += 1
                if _worse(hs[child], hi[child], hs[pos], hi[pos]):
                    hs[pos], hs[child] = hs[child], hs[pos]
                    hi[pos], hi[child] = hi[child], hi[pos]
                    pos = child
                else:
                    break

    return out
