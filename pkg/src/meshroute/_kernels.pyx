# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled routing kernels.  See ``_kernels_py`` for the reference semantics."""

from libc.math cimport INFINITY, isfinite

cimport numpy as cnp

cnp.import_array()


def dv_next_hops(const double[::1] w, const double[:, ::1] adv,
                 const unsigned char[::1] usable, long[::1] hop, double[::1] score):
    cdef Py_ssize_t n = adv.shape[0]
    cdef Py_ssize_t d, k, bk
    cdef double best, s
    for d in range(n):
        best = INFINITY
        bk = -1
        for k in range(n):
            if usable[k] == 0:
                continue
            s = w[k] + adv[k, d]
            if s < best:
                best = s
                bk = k
        hop[d] = bk
        score[d] = best


def drain_time(const double[::1] w, const long[::1] hop, const double[::1] q):
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t j
    cdef double total = 0.0
    for j in range(n):
        if q[j] > 0 and hop[j] >= 0:
            total += q[j] * w[hop[j]]
    return total


cdef inline (Py_ssize_t, double) _bp_hop(const double[::1] w, const double[:, ::1] adv,
                                        const unsigned char[::1] usable, double q_own,
                                        Py_ssize_t d, const double[:, ::1] etx,
                                        bint has_etx, double unit) nogil:
    cdef Py_ssize_t n = adv.shape[0]
    cdef Py_ssize_t k, bk = -1
    cdef double best = INFINITY, s
    for k in range(n):
        if usable[k] == 0:
            continue
        s = (adv[k, d] - q_own) * unit / w[k]
        if has_etx:
            s = s + etx[k, d] / unit
        if not isfinite(s):
            continue
        if s < best:
            best = s
            bk = k
    return bk, best


def backpressure_hop(const double[::1] w, const double[:, ::1] adv,
                     const unsigned char[::1] usable, double q_own, Py_ssize_t d,
                     etx, double unit):
    cdef const double[:, ::1] e
    cdef Py_ssize_t k
    cdef double s
    if etx is None:
        e = adv
    else:
        e = etx
    k, s = _bp_hop(w, adv, usable, q_own, d, e, etx is not None, unit)
    return k, s


def backpressure_select(const double[::1] w, const double[:, ::1] adv,
                        const unsigned char[::1] usable, const double[::1] q,
                        Py_ssize_t self_idx, etx, double unit):
    cdef const double[:, ::1] e
    cdef bint has_etx = etx is not None
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t d, k, best_d = -1, best_k = -1
    cdef double s, best_s = INFINITY
    if has_etx:
        e = etx
    else:
        e = adv
    for d in range(n):
        if d == self_idx or q[d] <= 0:
            continue
        k, s = _bp_hop(w, adv, usable, q[d], d, e, has_etx, unit)
        if s < best_s:
            best_s = s
            best_d = d
            best_k = k
    return best_d, best_k, best_s


def dv_round(const double[:, ::1] W, const double[:, ::1] cur, double[:, ::1] out):
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t i, k, d
    cdef double best, s
    cdef bint changed = False
    for i in range(n):
        for d in range(n):
            if i == d:
                best = 0.0
            else:
                best = INFINITY
                for k in range(n):
                    s = W[i, k] + cur[k, d]
                    if s < best:
                        best = s
            out[i, d] = best
            if best != cur[i, d]:
                changed = True
    return changed
