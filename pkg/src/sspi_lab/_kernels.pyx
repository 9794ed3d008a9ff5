# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot loops; semantics match ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()


def pref_choice(masks, order):
    cdef cnp.uint64_t[:, :, ::1] mk = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef cnp.int64_t[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t P = mk.shape[0], m = mk.shape[1], L = mk.shape[2]
    out = np.full((P, m), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ch = out
    cdef Py_ssize_t p, j, e, s
    cdef uint64_t used, x
    with nogil:
        for p in range(P):
            used = 0
            for j in range(od.shape[0]):
                e = od[j]
                for s in range(L):
                    x = mk[p, e, s]
                    if x != 0 and (x & used) == 0:
                        used = used | x
                        ch[p, e] = s
                        break
    return out


def pref_totals(masks, W, orders):
    cdef cnp.uint64_t[:, :, ::1] mk = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] od = np.ascontiguousarray(orders, dtype=np.int64)
    cdef Py_ssize_t P = mk.shape[0], L = mk.shape[2], K = od.shape[0], m = od.shape[1]
    out = np.zeros(K, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t k, p, j, e, s
    cdef uint64_t used, x
    cdef double total, part
    with nogil:
        for k in range(K):
            total = 0.0
            for p in range(P):
                used = 0
                part = 0.0
                for j in range(m):
                    e = od[k, j]
                    for s in range(L):
                        x = mk[p, e, s]
                        if x != 0 and (x & used) == 0:
                            used = used | x
                            part = part + w[p, e, s]
                            break
                total = total + part
            res[k] = total
    return out


cdef inline double _collect_one(double[:, :, ::1] v, cnp.int64_t[:, :, ::1] it, double[::1] cap,
                                cnp.int64_t[:, ::1] od, Py_ssize_t k, Py_ssize_t p) nogil:
    cdef Py_ssize_t nb = od.shape[1], L = v.shape[2], j, b, s
    cdef uint64_t assigned = 0, bit
    cdef double total = 0.0, load
    for j in range(nb):
        b = od[k, j]
        load = 0.0
        for s in range(L):
            if it[p, b, s] < 0:
                continue
            bit = (<uint64_t>1) << it[p, b, s]
            if (assigned & bit) == 0 and v[p, b, s] + load <= cap[b]:
                load = load + v[p, b, s]
                assigned = assigned | bit
        total = total + load
    return total


def budget_collect(val, item, budgets, order):
    cdef double[:, :, ::1] v = np.ascontiguousarray(val, dtype=np.float64)
    cdef cnp.int64_t[:, :, ::1] it = np.ascontiguousarray(item, dtype=np.int64)
    cdef double[::1] cap = np.ascontiguousarray(budgets, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] od = np.ascontiguousarray(np.asarray(order, dtype=np.int64).reshape(1, -1))
    cdef Py_ssize_t P = v.shape[0], p
    out = np.zeros(P, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for p in range(P):
            res[p] = _collect_one(v, it, cap, od, 0, p)
    return out


def budget_totals(val, item, budgets, weight, orders):
    cdef double[:, :, ::1] v = np.ascontiguousarray(val, dtype=np.float64)
    cdef cnp.int64_t[:, :, ::1] it = np.ascontiguousarray(item, dtype=np.int64)
    cdef double[::1] cap = np.ascontiguousarray(budgets, dtype=np.float64)
    cdef double[::1] wt = np.ascontiguousarray(weight, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] od = np.ascontiguousarray(orders, dtype=np.int64)
    cdef Py_ssize_t P = v.shape[0], K = od.shape[0], k, p
    out = np.zeros(K, dtype=np.float64)
    cdef double[::1] res = out
    cdef double total
    with nogil:
        for k in range(K):
            total = 0.0
            for p in range(P):
                total = total + wt[p] * _collect_one(v, it, cap, od, k, p)
            res[k] = total
    return out
