# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused Gaussian-error-gated activation, forward and backward, in one pass each."""
from libc.math cimport erf, exp

cdef double _RSQRT2 = 0.7071067811865476
cdef double _RSQRT2PI = 0.3989422804014327


def gelu_forward(double[::1] z, double[::1] out, double[::1] cdf):
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double c
    with nogil:
        for i in range(n):
            c = 0.5 * (1.0 + erf(z[i] * _RSQRT2))
            cdf[i] = c
            out[i] = z[i] * c


def gelu_backward(double[::1] g, double[::1] z, double[::1] cdf, double[::1] out):
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double zi
    with nogil:
        for i in range(n):
            zi = z[i]
            out[i] = g[i] * (cdf[i] + zi * _RSQRT2PI * exp(-0.5 * zi * zi))
