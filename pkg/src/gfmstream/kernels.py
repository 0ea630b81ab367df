"""Backend selection for the hot per-batch kernels.

The compiled Cython core is used when present; otherwise the pure-NumPy
fallback.  GFMSTREAM_BACKEND=numpy|cython forces a choice (forcing cython
without the built extension raises at import).  ``BACKEND`` names the
active implementation; the benchmark in benchmarks/ compares the two.
"""

import os

import numpy as np

from . import _kernels_np

_requested = os.environ.get("GFMSTREAM_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise ImportError(f"unknown GFMSTREAM_BACKEND {_requested!r}")

_impl = None
if _requested in ("", "cython"):
    try:
        from . import _kernels_cy as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = None

if _impl is None:
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    BACKEND = "cython"


def _instances(x):
    # compiled kernels want columns (instances) contiguous
    if BACKEND == "cython" and not x.flags.f_contiguous:
        return np.asfortranarray(x)
    return x


def _block(a):
    if BACKEND == "cython":
        return np.ascontiguousarray(a)
    return a


def sense_products(x, u, v):
    """s_i = (U^T x_i) . (V^T x_i) per instance; O(ndk) time, O(nk) workspace."""
    return _impl.sense_products(_instances(x), _block(u), _block(v))


def weighted_gram_apply(x, r, p, scale):
    """scale * sum_i r_i x_i (x_i^T p), a d x m block; never forms d x d."""
    return _impl.weighted_gram_apply(_instances(x), np.ascontiguousarray(r),
                                     _block(p), float(scale))


def backends_available():
    """Names of the kernel implementations importable in this environment."""
    names = ["numpy"]
    try:
        from . import _kernels_cy  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names
