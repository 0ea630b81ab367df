"""Pure-NumPy versions of the hot per-batch kernels.

Selected automatically when the compiled extension is unavailable (or when
forced via GFMSTREAM_BACKEND=numpy).  Same contracts as the compiled core;
summation order differs, so results agree to rounding, not bitwise.
"""

import numpy as np


def sense_products(x, u, v):
    """s_i = (U^T x_i) . (V^T x_i) for every column x_i of x (d x n)."""
    zu = u.T @ x
    zv = v.T @ x
    return np.einsum("ij,ij->j", zu, zv)


def weighted_gram_apply(x, r, p, scale):
    """scale * sum_i r_i x_i (x_i^T p) as a dense d x m block.

    Equivalent to applying scale * X diag(r) X^T to p without forming the
    d x d weighted Gram matrix; workspace is O(n m).
    """
    t = x.T @ p
    t *= r[:, None]
    out = x @ t
    out *= scale
    return out
