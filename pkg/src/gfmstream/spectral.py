"""Small-footprint spectral primitives: QR orthonormalization with a fixed
sign convention, randomized truncated eigendecomposition of implicit
symmetric operators, power-iteration spectral norms, and canonical-angle
measurements between subspaces.

Subspace distance is reported through the largest canonical angle; its
tangent is invariant under QR of the input basis, which is what lets the
solver track the angle of the un-orthonormalized update.  The angle is
computed from the k x k matrix U_ref^T U alone, so the d x (d-k)
complement basis is never materialized.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .model import check_dims

TAN_INFINITY = float("inf")
_COS_FLOOR = 1e-12


class SpectralWarning(UserWarning):
    """Non-fatal spectral-routine condition (clustered spectrum, slow probe)."""


class RankDeficiencyError(ValueError):
    """QR input numerically rank deficient; carries the offending column."""

    def __init__(self, column, magnitude):
        super().__init__(
            f"rank-deficient input: column {column} has projected norm "
            f"{magnitude:.3e}")
        self.column = column


class DegenerateOperatorError(ValueError):
    """The operator annihilated every probe (identically zero image)."""


@dataclass(frozen=True)
class AngleReport:
    """sin/cos/tan of the largest canonical angle between two k-subspaces."""

    sin_theta: float
    cos_theta: float
    tan_theta: float


def qr_orthonormalize(a):
    """Thin QR factor of a d x k matrix, R-diagonal forced positive.

    The sign convention makes the factor unique, so already-orthonormal
    input is returned unchanged and repeated runs are bit-identical.
    """
    a = np.asarray(a, dtype=np.float64)
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diagonal(r)
    small = np.abs(diag) <= 1e-12
    if np.any(small):
        col = int(np.argmax(small))
        raise RankDeficiencyError(col, float(abs(diag[col])))
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs


def _fix_column_signs(u):
    # largest-magnitude entry of each column made positive (argmax ties -> first)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs


def topk_left_singular(op, k, oversampling=8, power_iters=6, rng=None):
    """Leading k eigenvector basis of a symmetric implicit operator, by
    randomized subspace iteration.

    A Gaussian d x (k+oversampling) probe is alternately pushed through the
    operator and re-orthonormalized, then the k leading vectors (by
    eigenvalue magnitude) are extracted from the projected
    (k+p) x (k+p) eigenproblem.  Column order is |eigenvalue| descending
    and each column's largest-magnitude entry is positive, so the output is
    deterministic given the probe generator.

    A projected eigengap below 1e-14 triggers a SpectralWarning and the
    best-effort basis is returned.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = op.dim
    if k < 1 or k + oversampling > d:
        raise ValueError(f"need 1 <= k and k + oversampling <= d "
                         f"(k={k}, oversampling={oversampling}, d={d})")
    probe = rng.standard_normal((d, k + oversampling))
    y = op.apply(probe)
    if np.max(np.abs(y)) == 0.0:
        raise DegenerateOperatorError("operator image of the probe is zero")
    q, _ = np.linalg.qr(y)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(op.apply(q))
    t = q.T @ op.apply(q)
    t = (t + t.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(t)
    order = sorted(range(eigvals.size),
                   key=lambda i: (-abs(eigvals[i]), 0.0 if eigvals[i] > 0 else 1.0))
    lead = np.abs(eigvals[order])
    if lead[k - 1] - (lead[k] if k < lead.size else 0.0) < 1e-14:
        warnings.warn("projected eigengap below 1e-14; k-th direction ill-determined",
                      SpectralWarning, stacklevel=2)
    u = q @ eigvecs[:, order[:k]]
    return _fix_column_signs(u)


def spectral_norm(op, tol=1e-10, max_iters=1000, rng=None, probes=3,
                  noise_floor=0.0):
    """Largest |eigenvalue| of a symmetric implicit operator by block power
    iteration with Rayleigh-Ritz extraction.

    The Ritz estimate never exceeds the true norm, so the returned value
    sits in [(1 - tol) * sigma_1, sigma_1] once the iteration stalls below
    tol; the default 3-column probe makes missing the top eigenspace
    vanishingly unlikely over the probe draw.  ``noise_floor`` is an
    absolute stall threshold for operators whose application cancels much
    larger intermediates (near-zero difference operators), where no
    relative criterion is attainable.  Hitting max_iters without stalling
    emits a SpectralWarning and returns the best estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    d = op.dim
    b = min(max(1, probes), d)
    q, _ = np.linalg.qr(rng.standard_normal((d, b)))
    estimate = 0.0
    for _ in range(max_iters):
        y = op.apply(q)
        t = q.T @ y
        new = float(np.max(np.abs(np.linalg.eigvalsh((t + t.T) / 2.0))))
        if np.max(np.abs(y)) == 0.0:
            return 0.0
        stall = max(tol * max(new, np.finfo(np.float64).tiny), noise_floor)
        if abs(new - estimate) <= stall:
            return max(new, estimate)
        estimate = new
        q, _ = np.linalg.qr(y)
    warnings.warn(f"spectral norm estimate not stalled after {max_iters} iterations",
                  SpectralWarning, stacklevel=2)
    return estimate


def canonical_angles(u, u_ref):
    """Largest canonical angle between two column-orthonormal d x k bases.

    cos is the smallest singular value of u_ref^T u; sin is the spectral
    norm of the complement projection u - u_ref (u_ref^T u), which stays
    accurate for nearly-aligned subspaces where 1 - cos underflows.  The
    complement basis itself is never materialized.  A cosine at or below
    1e-12 reports tan as +inf (no usable shared direction, treated as
    divergence downstream).
    """
    u = np.asarray(u, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    check_dims(d=(u.shape[0], u_ref.shape[0]), k=(u.shape[1], u_ref.shape[1]))
    for name, basis in (("u", u), ("u_ref", u_ref)):
        dev = np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1])))
        if dev > 1e-8:
            raise ValueError(f"{name} is not column-orthonormal (deviation {dev:.3e})")
    g = u_ref.T @ u
    cos = float(np.clip(np.linalg.svd(g, compute_uv=False)[-1], 0.0, 1.0))
    sin = float(min(1.0, np.linalg.norm(u - u_ref @ g, 2)))
    tan = sin / cos if cos > _COS_FLOOR else TAN_INFINITY
    return AngleReport(sin_theta=sin, cos_theta=cos, tan_theta=tan)


def tangent_from_basis(a, u_ref):
    """tan of the largest canonical angle between range(a) and range(u_ref),
    evaluated directly on a (possibly non-orthonormal) full-rank d x k matrix.

    Uses the tangent identity || (I - P_ref) a (u_ref^T a)^{-1} ||_2, which
    is exactly invariant under right-multiplication of ``a`` by any
    invertible matrix — in particular under QR.
    """
    a = np.asarray(a, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    check_dims(d=(a.shape[0], u_ref.shape[0]), k=(a.shape[1], u_ref.shape[1]))
    t = u_ref.T @ a
    b = a - u_ref @ t
    try:
        c = np.linalg.solve(t.T, b.T).T
    except np.linalg.LinAlgError:
        return TAN_INFINITY
    return float(np.linalg.norm(c, 2))
