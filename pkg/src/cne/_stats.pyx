# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled axis reductions and per-pixel categorical scans.

Built with FMA contraction off so every result is bit-identical to the numpy
fallback in ``cne._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def mean_std_3d(const float[:, :, ::1] t, bint want_std):
    """Reduce the middle axis of an (outer, n, inner) float32 block.

    Sums run over the reduced axis in index order with float64 accumulators,
    then round to float32. The std is the population (1/n) form.
    """
    cdef Py_ssize_t outer = t.shape[0], n = t.shape[1], inner = t.shape[2]
    cdef Py_ssize_t a, j, k
    cdef double s, m, d
    mean_arr = np.empty((outer, inner), dtype=np.float32)
    cdef float[:, ::1] mean = mean_arr
    cdef float[:, ::1] std
    if want_std:
        std_arr = np.empty((outer, inner), dtype=np.float32)
        std = std_arr
    else:
        std_arr = None
    for a in range(outer):
        for k in range(inner):
            s = 0.0
            for j in range(n):
                s = s + <double>t[a, j, k]
            m = s / <double>n
            mean[a, k] = <float>m
            if want_std:
                s = 0.0
                for j in range(n):
                    d = <double>t[a, j, k] - m
                    s = s + d * d
                std[a, k] = <float>sqrt(s / <double>n)
    return mean_arr, std_arr


def argmax_channel(const float[:, :, ::1] t):
    """(C, H, W) -> (H, W) uint8 index of the largest channel, ties to lowest."""
    cdef Py_ssize_t c = t.shape[0], h = t.shape[1], wd = t.shape[2]
    cdef Py_ssize_t k, y, xx
    cdef float best
    cdef unsigned char arg
    out_arr = np.zeros((h, wd), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    for y in range(h):
        for xx in range(wd):
            best = t[0, y, xx]
            arg = 0
            for k in range(1, c):
                if t[k, y, xx] > best:
                    best = t[k, y, xx]
                    arg = <unsigned char>k
            out[y, xx] = arg
    return out_arr


def one_hot(const unsigned char[:, ::1] ids, Py_ssize_t num_classes):
    cdef Py_ssize_t h = ids.shape[0], wd = ids.shape[1], y, xx
    out_arr = np.zeros((num_classes, h, wd), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    for y in range(h):
        for xx in range(wd):
            out[ids[y, xx], y, xx] = 1
    return out_arr


def channel_sums(const unsigned char[:, :, ::1] onehot):
    """Per-channel count of ones in a (C, H, W) binary mask."""
    cdef Py_ssize_t c = onehot.shape[0], h = onehot.shape[1], wd = onehot.shape[2]
    cdef Py_ssize_t k, y, xx
    cdef long long s
    out_arr = np.zeros(c, dtype=np.int64)
    cdef long long[::1] out = out_arr
    for k in range(c):
        s = 0
        for y in range(h):
            for xx in range(wd):
                s += onehot[k, y, xx]
        out[k] = s
    return out_arr
