# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for dense tanh-MLP inference and weighted drawing.

Accumulation order matches :mod:`ids_adapt._pykernels` term for term so the
pre-activation sums are identical; only ``tanh`` may differ in the last ulp
(libm here, numpy's own implementation there).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


cdef void _dense(const double[:, ::1] x, const double[:, ::1] w,
                 const double[::1] b, double[:, ::1] out, bint activate) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t fan_in = w.shape[0]
    cdef Py_ssize_t fan_out = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xik
    for i in range(n):
        for j in range(fan_out):
            out[i, j] = b[j]
        for k in range(fan_in):
            xik = x[i, k]
            for j in range(fan_out):
                out[i, j] = out[i, j] + xik * w[k, j]
        if activate:
            for j in range(fan_out):
                out[i, j] = tanh(out[i, j])


def dense_forward(x, list weights, list biases):
    """Raw output scores of a tanh MLP with identity output, shape ``(n,)``."""
    cdef double[:, ::1] cur = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] nxt
    cdef double[:, ::1] w
    cdef double[::1] b
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t layer
    cdef bint activate
    for layer in range(n_layers):
        w = np.ascontiguousarray(weights[layer], dtype=np.float64)
        b = np.ascontiguousarray(biases[layer], dtype=np.float64)
        nxt = np.empty((cur.shape[0], w.shape[1]), dtype=np.float64)
        activate = layer < n_layers - 1
        with nogil:
            _dense(cur, w, b, nxt, activate)
        cur = nxt
    return np.asarray(cur)[:, 0].copy()


def weighted_draws(weights, Py_ssize_t k, uniforms):
    """Sequential weighted sampling without replacement.

    Row ``r`` of the result holds ``k`` distinct indices drawn with probability
    proportional to the remaining weights, using ``uniforms[r, step]`` as the
    random variate of each step.
    """
    cdef double[::1] w0 = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t m = w0.shape[0]
    cdef Py_ssize_t n = u.shape[0]
    out_arr = np.empty((n, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef double[::1] w = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t r, step, i, pick, last
    cdef double total, target, acc
    with nogil:
        for r in range(n):
            for i in range(m):
                w[i] = w0[i]
            for step in range(k):
                total = 0.0
                last = -1
                for i in range(m):
                    total = total + w[i]
                    if w[i] > 0.0:
                        last = i
                target = u[r, step] * total
                acc = 0.0
                pick = last
                for i in range(m):
                    acc = acc + w[i]
                    if acc > target and w[i] > 0.0:
                        pick = i
                        break
                out[r, step] = pick
                w[pick] = 0.0
    return out_arr
