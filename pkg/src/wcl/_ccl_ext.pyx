# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled union-find connected-components kernel.

Mirrors ``wcl.unionfind.label_components`` exactly.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find(cnp.int64_t[::1] parent, Py_ssize_t v) noexcept nogil:
    cdef Py_ssize_t root = v
    cdef Py_ssize_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[v] != root:
        nxt = parent[v]
        parent[v] = root
        v = nxt
    return root


def label_components(Py_ssize_t n, src, dst):
    cdef cnp.int64_t[::1] s = np.ascontiguousarray(src, dtype=np.int64)
    cdef cnp.int64_t[::1] d = np.ascontiguousarray(dst, dtype=np.int64)
    if s.shape[0] != d.shape[0]:
        raise ValueError("src and dst must have equal length")
    parent_arr = np.arange(n, dtype=np.int64)
    rank_arr = np.zeros(n, dtype=np.int64)
    labels_arr = np.empty(n, dtype=np.int64)
    ids_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef cnp.int64_t[::1] rank = rank_arr
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.int64_t[::1] ids = ids_arr
    cdef Py_ssize_t e, ra, rb, tmp, v, root
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t unions = 0
    cdef cnp.int64_t next_id = 0
    for e in range(m):
        if s[e] < 0 or s[e] >= n or d[e] < 0 or d[e] >= n:
            raise IndexError(f"edge {e} references a vertex outside 0..{n - 1}")
    with nogil:
        for e in range(m):
            ra = _find(parent, s[e])
            rb = _find(parent, d[e])
            if ra == rb:
                continue
            if rank[ra] < rank[rb]:
                tmp = ra
                ra = rb
                rb = tmp
            parent[rb] = ra
            if rank[ra] == rank[rb]:
                rank[ra] += 1
            unions += 1
        for v in range(n):
            root = _find(parent, v)
            if ids[root] < 0:
                ids[root] = next_id
                next_id += 1
            labels[v] = ids[root]
    return labels_arr, unions
