"""Dense float32 rasters, axis reductions, one-hot masks and the CNET file format.

Tensors are plain C-contiguous numpy arrays. Label masks are ``uint8`` arrays
of shape ``(H, W)``; one-hot masks are ``uint8`` arrays of shape ``(C, H, W)``.

CNET v1 layout (all integers little-endian)::

    bytes 0-3   magic b"CNET"
    byte  4     version (1)
    byte  5     dtype code (1 = f32, 2 = u8)
    byte  6     rank R (1..8)
    4*R bytes   u32 extents
    payload     row-major values
"""

import struct

import numpy as np

from . import kernels

MAGIC = b"CNET"
VERSION = 1
MAX_RANK = 8
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("u1")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.uint8): 2}


class CnetError(Exception):
    """Base class for CNET read/write failures."""


class CnetFormatError(CnetError):
    """Header is not a CNET v1 header (magic, version, dtype or rank)."""


class CnetTruncatedError(CnetError):
    """File ends before the header or the payload is complete."""


class CnetLengthError(CnetError):
    """Payload length disagrees with the extents in the header."""


class ClassIdError(ValueError):
    pass


def as_tensor(values):
    """Return a C-contiguous float32 copy-or-view of ``values`` after checking it is finite."""
    t = np.ascontiguousarray(values, dtype=np.float32)
    if t.ndim < 1:
        raise ValueError("tensor rank must be >= 1")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite values")
    return t


def check_label_mask(mask, num_classes):
    mask = np.ascontiguousarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"label mask must be 2-D, got shape {mask.shape}")
    if num_classes < 1 or num_classes > 256:
        raise ValueError(f"class count must be in [1, 256], got {num_classes}")
    if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
        bad = np.argwhere((mask < 0) | (mask >= num_classes))[0]
        raise ClassIdError(
            f"class id {int(mask[tuple(bad)])} at pixel (row={bad[0]}, col={bad[1]}) "
            f"is out of range for {num_classes} classes"
        )
    return mask.astype(np.uint8, copy=False)


def one_hot_encode(mask, num_classes):
    """Expand an (H, W) label mask into a (C, H, W) binary mask."""
    mask = check_label_mask(mask, num_classes)
    return kernels.one_hot(mask, num_classes)


def _check_axis(t, axis):
    if not -t.ndim <= axis < t.ndim:
        raise IndexError(f"axis {axis} out of range for rank-{t.ndim} tensor")
    return axis % t.ndim


def _reduce(t, axis, want_std):
    t = as_tensor(t)
    axis = _check_axis(t, axis)
    shape = t.shape
    outer = int(np.prod(shape[:axis], dtype=np.int64))
    inner = int(np.prod(shape[axis + 1:], dtype=np.int64))
    block = t.reshape(outer, shape[axis], inner)
    mean, std = kernels.mean_std_3d(block, want_std)
    out_shape = shape[:axis] + shape[axis + 1:]
    if want_std:
        return mean.reshape(out_shape), std.reshape(out_shape)
    return mean.reshape(out_shape)


def reduce_mean_axis(t, axis):
    """Arithmetic mean over ``axis`` (float64 accumulation, float32 result)."""
    return _reduce(t, axis, False)


def reduce_std_axis(t, axis):
    """Population standard deviation (divide by the extent) over ``axis``."""
    return _reduce(t, axis, True)[1]


def reduce_mean_std_axis(t, axis):
    """Both reductions in one pass; same values as the separate calls."""
    return _reduce(t, axis, True)


def argmax_channel(t):
    """(C, H, W) scores -> (H, W) uint8 label mask; ties go to the lowest class."""
    t = as_tensor(t)
    if t.ndim != 3:
        raise ValueError(f"expected a (C, H, W) tensor, got shape {t.shape}")
    if t.shape[0] > 256:
        raise ValueError("at most 256 channels fit a uint8 label mask")
    return kernels.argmax_channel(t)


def write_tensor(fh, t):
    """Write one CNET record to an open binary file."""
    arr = np.asarray(t)
    code = _CODE_FOR_DTYPE.get(arr.dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {arr.dtype}; CNET stores float32 or uint8")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValueError(f"CNET rank must be in [1, {MAX_RANK}], got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"every extent must be >= 1, got {arr.shape}")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    fh.write(header)
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CnetTruncatedError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def read_tensor(fh):
    """Read one CNET record from an open binary file."""
    head = fh.read(7)
    if len(head) < 4 or head[:4] != MAGIC:
        if len(head) < 4 and MAGIC.startswith(head):
            raise CnetTruncatedError("truncated header")
        raise CnetFormatError(f"bad magic {head[:4]!r}")
    if len(head) < 7:
        raise CnetTruncatedError("truncated header")
    version, code, rank = struct.unpack("<BBB", head[4:7])
    if version != VERSION:
        raise CnetFormatError(f"unsupported CNET version {version}")
    if code not in _DTYPE_CODES:
        raise CnetFormatError(f"unknown dtype code {code}")
    if not 1 <= rank <= MAX_RANK:
        raise CnetFormatError(f"rank {rank} outside [1, {MAX_RANK}]")
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "extents"))
    if any(d < 1 for d in dims):
        raise CnetFormatError(f"zero extent in {dims}")
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64))
    payload = _read_exact(fh, count * dtype.itemsize, "payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def save_tensor(t, path):
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path):
    """Load a single-record CNET file; trailing bytes are a length error."""
    with open(path, "rb") as fh:
        arr = read_tensor(fh)
        extra = fh.read()
    if extra:
        raise CnetLengthError(
            f"{path}: {len(extra)} bytes after the payload declared by extents {arr.shape}"
        )
    return arr


def save_label_mask(mask, path):
    save_tensor(np.ascontiguousarray(mask, dtype=np.uint8), path)
