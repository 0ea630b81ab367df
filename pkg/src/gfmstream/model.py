"""Core domain types: planted ground truth, solver state, mini-batches,
configuration and convergence traces, plus the small-scale dense oracles
used by tests.

The solver state (w, U, V) represents the symmetric quadratic coefficient
matrix M = (U V^T + V U^T) / 2 implicitly; production code never
materializes it.  ``densify``/``densify_truth`` do, and are therefore
gated by an explicit size cap so the O(kd) memory story cannot be broken
by accident outside clearly marked oracle code.
"""

from dataclasses import dataclass, field

import numpy as np

ORACLE_CAP = 256


class DimensionMismatchError(ValueError):
    """Raised when array dimensions disagree; names the mismatched axes."""

    def __init__(self, message, axes=()):
        super().__init__(message)
        self.axes = tuple(axes)


class OracleCapError(ValueError):
    """Raised when a dense d x d oracle is requested above the size cap."""


def _as_f64(a, name):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_dims(**named_shapes):
    """Raise DimensionMismatchError if any named axis takes two values.

    Arguments are ``axis_name=(value, value, ...)``; all values of one axis
    must agree.
    """
    bad = []
    for axis, values in named_shapes.items():
        vals = set(values)
        if len(vals) > 1:
            bad.append((axis, sorted(vals)))
    if bad:
        desc = ", ".join(f"{axis}={vals}" for axis, vals in bad)
        raise DimensionMismatchError(f"dimension mismatch: {desc}",
                                     axes=[axis for axis, _ in bad])


@dataclass(frozen=True)
class GroundTruth:
    """Planted model (w*, U*, Lambda*), optional residual spectrum, noise level.

    ``u_star`` is d x k column-orthonormal, ``lambda_star`` the signed
    eigenvalues sorted by magnitude (descending, positive first on ties).
    When ``residual_spectrum`` is present the full quadratic matrix is
    U* diag(lambda*) U*^T + U_perp diag(residual) U_perp^T and the explicit
    complement basis ``u_perp`` is carried so labels can be evaluated; such
    truths are oracle-cap sized by construction.
    """

    w_star: np.ndarray
    u_star: np.ndarray
    lambda_star: np.ndarray
    residual_spectrum: np.ndarray | None = None
    noise_proxy: float = 0.0
    u_perp: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "w_star", _as_f64(self.w_star, "w_star"))
        object.__setattr__(self, "u_star", _as_f64(self.u_star, "u_star"))
        object.__setattr__(self, "lambda_star",
                           _as_f64(self.lambda_star, "lambda_star"))
        d, k = self.u_star.shape
        check_dims(d=(d, self.w_star.shape[0]), k=(k, self.lambda_star.shape[0]))
        gram = self.u_star.T @ self.u_star
        if np.max(np.abs(gram - np.eye(k))) > 1e-10:
            raise ValueError("u_star is not column-orthonormal to 1e-10")
        mags = np.abs(self.lambda_star)
        if np.any(mags == 0.0):
            raise ValueError("lambda_star entries must be nonzero")
        if np.any(np.diff(mags) > 0):
            raise ValueError("lambda_star must be sorted by |lambda| descending")
        if self.noise_proxy < 0:
            raise ValueError("noise_proxy must be nonnegative")
        if self.residual_spectrum is not None:
            res = _as_f64(self.residual_spectrum, "residual_spectrum")
            object.__setattr__(self, "residual_spectrum", res)
            check_dims(residual=(res.shape[0], d - k))
            if res.size and np.max(np.abs(res)) > mags[-1]:
                raise ValueError("residual spectrum exceeds |lambda_k|")
            if self.u_perp is None:
                raise ValueError("residual_spectrum requires the complement basis")
            up = _as_f64(self.u_perp, "u_perp")
            object.__setattr__(self, "u_perp", up)
            check_dims(d=(d, up.shape[0]), residual=(res.shape[0], up.shape[1]))

    @property
    def d(self):
        return self.u_star.shape[0]

    @property
    def k(self):
        return self.u_star.shape[1]

    @property
    def sigma_star(self):
        """Singular values |lambda_i*| in descending order."""
        return np.abs(self.lambda_star)

    @property
    def scale(self):
        """Natural error scale ||w*||_2 + sigma_1*."""
        return float(np.linalg.norm(self.w_star) + self.sigma_star[0])


@dataclass(frozen=True)
class GfmModel:
    """Solver state: first-order vector w plus the factor pair (U, V).

    The implied quadratic matrix is M = (U V^T + V U^T) / 2.  Column
    orthonormality of U is a property of solver-produced states, enforced
    after every step via ``assert_orthonormal``; the constructor only checks
    dimensions so oracle/test states (e.g. the all-zero model) are legal.
    """

    w: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _as_f64(self.w, "w"))
        object.__setattr__(self, "u", _as_f64(self.u, "u"))
        object.__setattr__(self, "v", _as_f64(self.v, "v"))
        check_dims(d=(self.w.shape[0], self.u.shape[0], self.v.shape[0]),
                   k=(self.u.shape[1], self.v.shape[1]))

    @property
    def d(self):
        return self.u.shape[0]

    @property
    def k(self):
        return self.u.shape[1]

    def assert_orthonormal(self, tol=1e-8):
        dev = np.max(np.abs(self.u.T @ self.u - np.eye(self.k)))
        if dev > tol:
            raise ValueError(f"U^T U deviates from identity by {dev:.3e} > {tol:.1e}")

    @classmethod
    def zeros(cls, d, k):
        return cls(w=np.zeros(d), u=np.zeros((d, k)), v=np.zeros((d, k)))


@dataclass(frozen=True)
class Batch:
    """One mini-batch: instance matrix x (d x n, columns are instances), labels y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        # instances (columns) are kept contiguous so kernels never re-copy
        object.__setattr__(self, "x", np.asfortranarray(_as_f64(self.x, "x")))
        object.__setattr__(self, "y", _as_f64(self.y, "y"))
        if self.x.ndim != 2 or self.y.ndim != 1:
            raise DimensionMismatchError("x must be d x n and y length n",
                                         axes=("n",))
        check_dims(n=(self.x.shape[1], self.y.shape[0]))
        if self.n < 1:
            raise ValueError("batch must contain at least one instance")

    @property
    def d(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Dimensions, stream sizes and spectral-routine knobs for one run."""

    d: int
    k: int
    n: int
    t_max: int
    seed: int
    init_oversampling: int = 8
    init_power_iters: int = 6
    spectral_tol: float = 1e-10
    spectral_max_iters: int = 1000

    def __post_init__(self):
        if min(self.d, self.k, self.n) < 1 or self.t_max < 0:
            raise ValueError("d, k, n must be positive and t_max nonnegative")
        if not self.k < self.d:
            raise ValueError(f"k must be smaller than d (got k={self.k}, d={self.d})")
        if self.n < self.k:
            raise ValueError(f"n must be at least k (got n={self.n}, k={self.k})")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.init_oversampling < 1 or self.init_power_iters < 1:
            raise ValueError("init_oversampling and init_power_iters must be positive")
        if self.spectral_tol <= 0 or self.spectral_max_iters < 1:
            raise ValueError("spectral_tol must be positive, spectral_max_iters >= 1")


@dataclass(frozen=True)
class TraceRecord:
    """Recovery-error snapshot after iteration t (t = 0 is the post-init state)."""

    t: int
    beta: float      # ||w* - w||_2
    gamma: float     # ||M_k* - M||_2 (spectral)
    epsilon: float   # beta + gamma
    alpha: float     # tan of the largest canonical angle between U and U*
    h2: float        # mean residual statistic of the batch that produced this state
    step_millis: float


@dataclass(frozen=True)
class ConvergenceTrace:
    records: tuple = ()

    def __post_init__(self):
        for r in self.records:
            vals = (r.beta, r.gamma, r.epsilon, r.h2, r.step_millis)
            if not all(np.isfinite(v) for v in vals):
                raise ValueError(f"non-finite trace values at t={r.t}")
            if min(r.beta, r.gamma, r.epsilon, r.step_millis) < 0:
                raise ValueError(f"negative trace values at t={r.t}")
            # alpha may be +inf (orthogonal-subspace sentinel) but never NaN
            if np.isnan(r.alpha) or r.alpha < 0:
                raise ValueError(f"invalid alpha at t={r.t}")

    def __len__(self):
        return len(self.records)

    @property
    def epsilons(self):
        return np.array([r.epsilon for r in self.records])

    @property
    def alphas(self):
        return np.array([r.alpha for r in self.records])


def predict(model, x):
    """Prediction x^T w + x^T M x with M = (U V^T + V U^T)/2, matrix-free.

    Computed as (U^T x) . (V^T x) + x^T w; never forms a d x d matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("x must be a vector", axes=("d",))
    check_dims(d=(model.d, x.shape[0]))
    return float(x @ model.w + (model.u.T @ x) @ (model.v.T @ x))


def densify(model, cap=ORACLE_CAP):
    """Dense (U V^T + V U^T)/2 — test oracle only, refused above the cap."""
    if model.d > cap:
        raise OracleCapError(f"dense oracle refused at d={model.d} > cap={cap}")
    uv = model.u @ model.v.T
    return (uv + uv.T) / 2.0


def densify_truth(gt, cap=ORACLE_CAP):
    """Dense M* = U* diag(lambda*) U*^T plus residual part when present."""
    if gt.d > cap:
        raise OracleCapError(f"dense oracle refused at d={gt.d} > cap={cap}")
    m = (gt.u_star * gt.lambda_star) @ gt.u_star.T
    if gt.residual_spectrum is not None:
        m = m + (gt.u_perp * gt.residual_spectrum) @ gt.u_perp.T
    return (m + m.T) / 2.0
