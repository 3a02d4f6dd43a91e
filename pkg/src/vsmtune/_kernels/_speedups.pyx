# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernel: x <- phi @ x + gamma with output sampling."""

from libc.math cimport fabs
from libc.stdlib cimport free, malloc


def affine_recurrence(double[:, ::1] phi, double[::1] gamma, double[::1] x0,
                      double[:, ::1] c, double[:, ::1] y, double limit):
    """Fill ``y`` (n_steps+1, m) with samples of c @ x along the recurrence.

    Returns the first step index at which max|x| exceeded ``limit``,
    or -1 if the trajectory stayed bounded.
    """
    cdef Py_ssize_t n = phi.shape[0]
    cdef Py_ssize_t m = c.shape[0]
    cdef Py_ssize_t n_steps = y.shape[0] - 1
    cdef Py_ssize_t i, j, p, k
    cdef double acc, biggest
    cdef double *x = <double *> malloc(n * sizeof(double))
    cdef double *xn = <double *> malloc(n * sizeof(double))
    cdef double *tmp
    cdef Py_ssize_t diverged_at = -1

    if x == NULL or xn == NULL:
        free(x)
        free(xn)
        raise MemoryError()

    try:
        for i in range(n):
            x[i] = x0[i]
        for p in range(m):
            acc = 0.0
            for j in range(n):
                acc += c[p, j] * x[j]
            y[0, p] = acc

        for k in range(1, n_steps + 1):
            biggest = 0.0
            for i in range(n):
                acc = gamma[i]
                for j in range(n):
                    acc += phi[i, j] * x[j]
                xn[i] = acc
                if fabs(acc) > biggest:
                    biggest = fabs(acc)
            tmp = x
            x = xn
            xn = tmp
            if biggest > limit:
                diverged_at = k
                break
            for p in range(m):
                acc = 0.0
                for j in range(n):
                    acc += c[p, j] * x[j]
                y[k, p] = acc
    finally:
        free(x)
        free(xn)
    return diverged_at
