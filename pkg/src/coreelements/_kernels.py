"""Compiled inner loops for per-column top-r selection and sparse Gram products.

Everything here works on plain numpy arrays; the public wrappers live in
``selection`` and ``matrix``.
"""

import numpy as np
from numba import njit

# strided sample used to guess a per-column lower threshold before the full pass
_SAMPLE_SIZE = 512


@njit(cache=True)
def kth_smallest(a, kth):
    """Introselect: partially reorder ``a`` in place and return its ``kth`` order statistic.

    Median-of-three Hoare quickselect; once the recursion budget
    (about 2*log2(n)) is spent, the remaining window is sorted outright so the
    worst case stays O(n log n).
    """
    lo = 0
    hi = a.shape[0] - 1
    depth = 4
    m = a.shape[0]
    while m > 1:
        depth += 2
        m >>= 1
    while hi > lo:
        if depth == 0:
            a[lo:hi + 1] = np.sort(a[lo:hi + 1])
            return a[kth]
        depth -= 1
        mid = (lo + hi) >> 1
        if a[mid] < a[lo]:
            a[mid], a[lo] = a[lo], a[mid]
        if a[hi] < a[lo]:
            a[hi], a[lo] = a[lo], a[hi]
        if a[hi] < a[mid]:
            a[hi], a[mid] = a[mid], a[hi]
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                a[i], a[j] = a[j], a[i]
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return a[kth]
    return a[kth]


@njit(cache=True)
def _sample_threshold(col, r, sample):
    """Lower bound for the r-th largest |col| value guessed from a strided sample.

    Returns 0.0 (meaning: keep everything) when the sample is not informative.
    A wrong guess only costs time; the caller falls back to a full pass.
    """
    n = col.shape[0]
    m = min(sample.shape[0], n // 8)
    if m < 64:
        return 0.0
    for q in range(m):
        sample[q] = abs(col[(q * n) // m])
    frac = r / n
    slack = 3.0 * np.sqrt(m * frac * (1.0 - frac)) + 4.0
    k = int(np.ceil(frac * m + slack))
    if k >= m:
        return 0.0
    # k-th largest of the sample
    return kth_smallest(sample[:m], m - k)


@njit(cache=True)
def _top_from_candidates(cand_val, cand_idx, c, r, scratch, out_row):
    """Write the r largest candidates (ties to the earlier index) into ``out_row``."""
    for q in range(c):
        scratch[q] = cand_val[q]
    v = kth_smallest(scratch[:c], c - r)
    n_gt = 0
    for q in range(c):
        if cand_val[q] > v:
            n_gt += 1
    need_eq = r - n_gt
    t = 0
    for q in range(c):
        a = cand_val[q]
        if a > v:
            out_row[t] = cand_idx[q]
            t += 1
        elif a == v and need_eq > 0:
            out_row[t] = cand_idx[q]
            t += 1
            need_eq -= 1


@njit(cache=True)
def select_top_abs(x, r, out_rows):
    """Per column j, write the row indices of the ``r`` largest ``|x[:, j]|`` into ``out_rows[j]``.

    Ties at the boundary keep the smaller row index; output rows are ascending.
    ``x`` should be column-major so each column is a contiguous stream.
    """
    n, p = x.shape
    if r >= n:
        for j in range(p):
            for i in range(n):
                out_rows[j, i] = i
        return out_rows
    # candidate buffers sized for the thresholded pass; the full-column
    # fallback allocates its own only when needed
    cap = min(n, 4 * r + 4 * min(_SAMPLE_SIZE, n // 8))
    cand_val = np.empty(cap)
    cand_idx = np.empty(cap, dtype=np.int64)
    scratch = np.empty(cap)
    sample = np.empty(_SAMPLE_SIZE)
    full_val = np.empty(0)
    full_idx = np.empty(0, dtype=np.int64)
    full_scratch = np.empty(0)
    for j in range(p):
        col = x[:, j]
        t_lo = _sample_threshold(col, r, sample)
        c = 0
        if t_lo > 0.0:
            for i in range(n):
                a = abs(col[i])
                if a >= t_lo:
                    if c == cap:
                        c = -1
                        break
                    cand_val[c] = a
                    cand_idx[c] = i
                    c += 1
        if c >= r:
            _top_from_candidates(cand_val, cand_idx, c, r, scratch, out_rows[j])
            continue
        if full_val.shape[0] == 0:
            full_val = np.empty(n)
            full_idx = np.empty(n, dtype=np.int64)
            full_scratch = np.empty(n)
        for i in range(n):
            full_val[i] = abs(col[i])
            full_idx[i] = i
        _top_from_candidates(full_val, full_idx, n, r, full_scratch, out_rows[j])
    return out_rows


@njit(cache=True)
def sparse_gram(n, indptr, indices, data, x):
    """G[i, j] = sum over stored (row, v) of sparse column i of v * x[row, j].

    The stored entries are regrouped by row first so every needed row of ``x``
    is read once, instead of once per sparse column.
    """
    p_s = indptr.shape[0] - 1
    p = x.shape[1]
    nnz = indices.shape[0]
    start = np.zeros(n + 1, dtype=np.int64)
    for k in range(nnz):
        start[indices[k] + 1] += 1
    for u in range(n):
        start[u + 1] += start[u]
    fill = start.copy()
    by_row_col = np.empty(nnz, dtype=np.int64)
    by_row_val = np.empty(nnz)
    for i in range(p_s):
        for k in range(indptr[i], indptr[i + 1]):
            u = indices[k]
            by_row_col[fill[u]] = i
            by_row_val[fill[u]] = data[k]
            fill[u] += 1
    g = np.zeros((p_s, p))
    xrow = np.empty(p)
    for u in range(n):
        a = start[u]
        b = start[u + 1]
        if a == b:
            continue
        for j in range(p):
            xrow[j] = x[u, j]
        for q in range(a, b):
            i = by_row_col[q]
            v = by_row_val[q]
            for j in range(p):
                g[i, j] += v * xrow[j]
    return g


@njit(cache=True)
def sparse_rmatvec(indptr, indices, data, y):
    """Return A^T y for a column-compressed A."""
    p = indptr.shape[0] - 1
    out = np.zeros(p)
    for i in range(p):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * y[indices[k]]
        out[i] = s
    return out


@njit(cache=True)
def gather_rows(x, idx):
    """Column-major copy of ``x[idx]``, filled one column at a time."""
    m = idx.shape[0]
    p = x.shape[1]
    out = np.empty((p, m)).T
    for j in range(p):
        for q in range(m):
            out[q, j] = x[idx[q], j]
    return out


@njit(cache=True)
def scatter_rows(x, pos):
    """Column-major ``out`` with ``out[pos[i]] = x[i]``; reads each column of ``x`` in order."""
    n, p = x.shape
    out = np.empty((p, n)).T
    for j in range(p):
        for i in range(n):
            out[pos[i], j] = x[i, j]
    return out
