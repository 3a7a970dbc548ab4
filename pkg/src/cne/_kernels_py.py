"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

The reductions and categorical scans reproduce the compiled results bit for
bit. The convolutions go through BLAS, so they agree with the compiled path
only to float rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


def _windows(x):
    # (N, Cin, H, W) -> (N, Cin, H, W, 3, 3) view over the zero-padded input
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(padded, (3, 3), axis=(2, 3))


def conv3x3_forward(x, w, b):
    cols = _windows(x)
    out = np.einsum("nihwab,oiab->nohw", cols, w, optimize=True)
    out += b[None, :, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv3x3_backward(x, w, gout, need_input_grad=True):
    cols = _windows(x)
    gw = np.einsum("nohw,nihwab->oiab", gout, cols, optimize=True).astype(x.dtype)
    gb = gout.sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
    gx = None
    if need_input_grad:
        # full correlation of gout with the spatially flipped kernel
        gcols = _windows(gout)
        gx = np.einsum("nohwab,oiab->nihw", gcols, w[:, :, ::-1, ::-1], optimize=True)
        gx = np.ascontiguousarray(gx, dtype=x.dtype)
    return gx, np.ascontiguousarray(gw), gb


def mean_std_3d(t, want_std):
    n = t.shape[1]
    acc = np.zeros((t.shape[0], t.shape[2]), dtype=np.float64)
    for j in range(n):
        acc += t[:, j, :]
    mean64 = acc / n
    std = None
    if want_std:
        acc = np.zeros_like(mean64)
        for j in range(n):
            d = t[:, j, :].astype(np.float64) - mean64
            acc += d * d
        std = np.sqrt(acc / n).astype(np.float32)
    return mean64.astype(np.float32), std


def argmax_channel(t):
    return np.argmax(t, axis=0).astype(np.uint8)


def one_hot(ids, num_classes):
    return (ids[None, :, :] == np.arange(num_classes, dtype=ids.dtype)[:, None, None]).astype(np.uint8)


def channel_sums(onehot):
    return onehot.reshape(onehot.shape[0], -1).sum(axis=1, dtype=np.int64)
