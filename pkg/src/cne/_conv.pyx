# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled 3x3 same-padding convolution and its gradients.

Built with FMA contraction allowed, so results match the numpy fallback in
``cne._kernels_py`` only to float rounding. Callers go through ``cne.kernels``.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()

BACKEND = "cython"


cdef inline void _row_dot3(floating* p, double* tail, const floating* g,
                           const floating* x, Py_ssize_t n) noexcept nogil:
    # p[0:16], p[16:32], p[32:48] accumulate g.x[0:], g.x[1:], g.x[2:] (the three
    # horizontal taps) in independent lanes; leftover columns go to tail[0:3] in double
    cdef Py_ssize_t k, lane
    cdef Py_ssize_t head = n - n % 16
    for k in range(0, head, 16):
        for lane in range(16):
            p[lane] += g[k + lane] * x[k + lane]
            p[16 + lane] += g[k + lane] * x[k + lane + 1]
            p[32 + lane] += g[k + lane] * x[k + lane + 2]
    for k in range(head, n):
        tail[0] += g[k] * x[k]
        tail[1] += g[k] * x[k + 1]
        tail[2] += g[k] * x[k + 2]


cdef inline void _row_axpy(floating* dst, const floating* src, floating alpha,
                           Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        dst[k] += alpha * src[k]


def _pad(x):
    return np.ascontiguousarray(np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1))))


def conv3x3_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[::1] b):
    """(N, Cin, H, W) * (Cout, Cin, 3, 3) + b -> (N, Cout, H, W), zero padding 1."""
    cdef Py_ssize_t n_img = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3], cout = w.shape[0]
    cdef Py_ssize_t n, o, i, ky, kx, y, xx
    dtype = np.float64 if floating is double else np.float32
    cdef floating[:, :, :, ::1] xp = _pad(np.asarray(x))
    out_arr = np.empty((n_img, cout, h, wd), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    with nogil:
        for n in range(n_img):
            for o in range(cout):
                for y in range(h):
                    for xx in range(wd):
                        out[n, o, y, xx] = b[o]
                for i in range(cin):
                    for y in range(h):
                        for ky in range(3):
                            for kx in range(3):
                                _row_axpy(&out[n, o, y, 0], &xp[n, i, y + ky, kx],
                                          w[o, i, ky, kx], wd)
    return out_arr


def conv3x3_backward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                     floating[:, :, :, ::1] gout, bint need_input_grad=True):
    """Gradients of conv3x3_forward: returns (grad_x or None, grad_w, grad_b)."""
    cdef Py_ssize_t n_img = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3], cout = w.shape[0]
    cdef Py_ssize_t n, o, i, ky, kx, y, xx, lane
    cdef double acc
    cdef floating lanes[48]
    cdef double tail[3]
    dtype = np.float64 if floating is double else np.float32
    cdef floating[:, :, :, ::1] xp = _pad(np.asarray(x))
    gw_arr = np.zeros((cout, cin, 3, 3), dtype=dtype)
    gb_arr = np.zeros(cout, dtype=dtype)
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef floating[::1] gb = gb_arr

    with nogil:
        for o in range(cout):
            acc = 0.0
            for n in range(n_img):
                for y in range(h):
                    for xx in range(wd):
                        acc += gout[n, o, y, xx]
            gb[o] = <floating>acc

        for o in range(cout):
            for i in range(cin):
                for ky in range(3):
                    for lane in range(48):
                        lanes[lane] = 0
                    tail[0] = tail[1] = tail[2] = 0.0
                    for n in range(n_img):
                        for y in range(h):
                            _row_dot3(lanes, tail, &gout[n, o, y, 0], &xp[n, i, y + ky, 0], wd)
                    for kx in range(3):
                        acc = tail[kx]
                        for lane in range(16):
                            acc += lanes[16 * kx + lane]
                        gw[o, i, ky, kx] = <floating>acc

    if not need_input_grad:
        return None, gw_arr, gb_arr
    # grad_x is the same-padded correlation of gout with the flipped, transposed kernel
    w_t = np.ascontiguousarray(np.asarray(w)[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx_arr = conv3x3_forward(gout, w_t, np.zeros(cin, dtype=dtype))
    return gx_arr, gw_arr, gb_arr
