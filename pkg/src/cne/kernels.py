"""Backend selection for the hot loops.

The compiled extensions (``_conv`` and ``_stats``) are used when both were
built; otherwise, or when the environment variable ``CNE_PURE_PYTHON`` is set
to a non-empty value other than ``0``, the numpy fallback is used.
``BACKEND`` names the active one.
"""

import os
from types import SimpleNamespace

from . import _kernels_py

_NAMES = ("conv3x3_forward", "conv3x3_backward", "mean_std_3d",
          "argmax_channel", "one_hot", "channel_sums")


def _compiled():
    from . import _conv, _stats
    return SimpleNamespace(
        BACKEND="cython",
        conv3x3_forward=_conv.conv3x3_forward,
        conv3x3_backward=_conv.conv3x3_backward,
        mean_std_3d=_stats.mean_std_3d,
        argmax_channel=_stats.argmax_channel,
        one_hot=_stats.one_hot,
        channel_sums=_stats.channel_sums,
    )


def available_backends():
    """Map of backend name -> kernel namespace, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        out["cython"] = _compiled()
    except ImportError:
        pass
    return out


if os.environ.get("CNE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    _impl = available_backends().get("cython", _kernels_py)

BACKEND = _impl.BACKEND
conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward
mean_std_3d = _impl.mean_std_3d
argmax_channel = _impl.argmax_channel
one_hot = _impl.one_hot
channel_sums = _impl.channel_sums
