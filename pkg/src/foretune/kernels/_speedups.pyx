# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels.

Mirrors _reference.py operation for operation: same grouping, same update
order, same overflow-safe softplus/sigmoid branches.  Only the inner dot
products and row updates are hand-rolled C loops.
"""

import numpy as np

from libc.math cimport exp, log1p


cdef inline double _softplus(double t) nogil:
    if t > 0.0:
        return t + log1p(exp(-t))
    return log1p(exp(t))


cdef inline double _sigmoid(double t) nogil:
    cdef double e
    if t >= 0.0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef inline double _row_dot(double[:, ::1] W, Py_ssize_t row, double[:, ::1] X,
                            Py_ssize_t ex, Py_ssize_t dim) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(dim):
        acc += W[row, j] * X[ex, j]
    return acc


def train_epoch(
    double[:, ::1] W,
    double[:, ::1] X,
    long[:] chosen,
    long[:] rejected,
    double[:] ref_margin,
    long[:] order,
    long batch_size,
    long grad_accumulation,
    double beta,
    double lr0,
    long step_start,
    long total_steps,
):
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t dim = W.shape[1]
    cdef Py_ssize_t n_rows = W.shape[0]
    cdef Py_ssize_t group_size = batch_size * grad_accumulation
    grad_arr = np.zeros((n_rows, dim), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double loss_sum = 0.0
    cdef long steps = 0
    cdef Py_ssize_t pos = 0, gn, k, j, e, c, r, row
    cdef double m, bm, g, lr, scale
    while pos < n:
        gn = n - pos
        if gn > group_size:
            gn = group_size
        for row in range(n_rows):
            for j in range(dim):
                grad[row, j] = 0.0
        for k in range(gn):
            e = order[pos + k]
            c = chosen[e]
            r = rejected[e]
            m = _row_dot(W, c, X, e, dim) - _row_dot(W, r, X, e, dim) - ref_margin[e]
            bm = beta * m
            loss_sum += _softplus(-bm)
            g = beta * _sigmoid(-bm)
            for j in range(dim):
                grad[c, j] += g * X[e, j]
                grad[r, j] -= g * X[e, j]
        lr = lr0 * (1.0 - (<double>(step_start + steps)) / (<double>total_steps))
        scale = lr / (<double>gn)
        for row in range(n_rows):
            for j in range(dim):
                W[row, j] += scale * grad[row, j]
        steps += 1
        pos += gn
    return loss_sum, steps


def mean_pair_loss(
    double[:, ::1] W,
    double[:, ::1] X,
    long[:] chosen,
    long[:] rejected,
    double[:] ref_margin,
    long[:] indices,
    double beta,
):
    cdef Py_ssize_t n = indices.shape[0]
    cdef Py_ssize_t dim = W.shape[1]
    if n == 0:
        raise ValueError("mean_pair_loss over zero examples")
    cdef double loss_sum = 0.0
    cdef Py_ssize_t k, e, c, r
    cdef double m
    for k in range(n):
        e = indices[k]
        c = chosen[e]
        r = rejected[e]
        m = _row_dot(W, c, X, e, dim) - _row_dot(W, r, X, e, dim) - ref_margin[e]
        loss_sum += _softplus(-beta * m)
    return loss_sum / (<double>n)
