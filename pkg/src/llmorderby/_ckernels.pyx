# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of :mod:`llmorderby._pykernels`."""

from libc.math cimport log2, pow


def pair_counts(const double[::1] x, const double[::1] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef long long conc = 0, disc = 0, tx = 0, ty = 0, txy = 0
    cdef double dx, dy
    if y.shape[0] != n:
        raise ValueError("x and y must have the same length")
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                txy += 1
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return conc, disc, tx, ty, txy


def dcg(const double[::1] grades, Py_ssize_t k):
    cdef Py_ssize_t i, stop = grades.shape[0]
    cdef double total = 0.0
    if k < stop:
        stop = k
    for i in range(stop):
        total += (pow(2.0, grades[i]) - 1.0) / log2(i + 2.0)
    return total
