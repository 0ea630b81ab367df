"""The quadratic sensing operator and the per-batch moment statistics that
drive the solver update, all exposed as matrix-free computations.

For a batch X (d x n) and residual r, the first statistic is the symmetric
map H1 : P -> (1/2n) sum_i r_i x_i (x_i^T P); the scalar h2 is the residual
mean and h3 = (1/n) X r.  The update operator is the shift
H1 - (h2/2) I + M with M the model's implicit quadratic matrix.  Nothing
here allocates d x d memory; dense equivalents live in test oracles only.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import check_dims


class ImplicitSymmetricOperator:
    """Matrix-free symmetric linear map on R^d with block application.

    ``apply`` takes a d x m block (or a length-d vector) and returns the
    image with the same shape.  Instances are immutable closures and safe
    to share across threads.
    """

    def __init__(self, dim, apply_block):
        self.dim = int(dim)
        self._apply = apply_block

    def apply(self, block):
        block = np.asarray(block, dtype=np.float64)
        vector = block.ndim == 1
        if vector:
            block = block[:, None]
        check_dims(d=(self.dim, block.shape[0]))
        out = self._apply(block)
        return out[:, 0] if vector else out


def operator_from_dense(a):
    """Wrap a dense symmetric matrix as an implicit operator (oracles, tests)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != a.shape[1] or np.max(np.abs(a - a.T)) > 1e-10:
        raise ValueError("operator_from_dense needs a symmetric square matrix")
    return ImplicitSymmetricOperator(a.shape[0], lambda p: a @ p)


@dataclass(frozen=True)
class Residual:
    """Per-instance residual r = y - A(M) - X^T w for one (batch, model) pair."""

    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=np.float64))
        if not np.all(np.isfinite(self.r)):
            raise ValueError("residual contains non-finite entries")

    @property
    def n(self):
        return self.r.shape[0]


def sense(batch, model):
    """A(M)_i = x_i^T M x_i for the model's implicit M, per instance."""
    check_dims(d=(batch.d, model.d))
    return kernels.sense_products(batch.x, model.u, model.v)


def residual(batch, model):
    check_dims(d=(batch.d, model.d))
    return Residual(batch.y - sense(batch, model) - batch.x.T @ model.w)


def h1_operator(batch, res):
    """H1 : P -> (1/2n) sum_i r_i x_i (x_i^T P), as a block-applicable map."""
    check_dims(n=(batch.n, res.n))
    x, r = batch.x, res.r
    scale = 1.0 / (2.0 * batch.n)
    return ImplicitSymmetricOperator(
        batch.d, lambda p: kernels.weighted_gram_apply(x, r, p, scale))


def compute_h2(res, n):
    """Mean residual (1/n) 1^T r."""
    check_dims(n=(res.n, n))
    return float(np.mean(res.r))


def compute_h3(batch, res):
    """(1/n) X r."""
    check_dims(n=(batch.n, res.n))
    return batch.x @ res.r / batch.n


def shifted_update_operator(h1, h2, model):
    """The update map H1 - (h2/2) I + M, with M from the model's factors.

    M is symmetric by construction, so this operator equals its transpose
    and serves both the subspace update and the factor refresh.
    """
    check_dims(d=(h1.dim, model.d))
    u, v = model.u, model.v
    half_h2 = 0.5 * h2

    def apply_block(p):
        # accumulate in place; peak extra footprint is two d x m blocks
        out = h1.apply(p)
        tmp = u @ (v.T @ p)
        tmp += v @ (u.T @ p)
        tmp *= 0.5
        out += tmp
        tmp = np.multiply(p, half_h2, out=tmp)
        out -= tmp
        return out

    return ImplicitSymmetricOperator(h1.dim, apply_block)
