"""Deterministic synthetic data: planted ground truth and streaming Gaussian
mini-batches.

Batch t of a stream is a pure function of (stream seed, t): each batch draws
from an independent child generator keyed by spawn_key=(0, t), so batches
never reuse randomness (one-pass semantics) and any batch can be regenerated
in isolation, e.g. when resuming from a checkpoint.  Labels are evaluated
through the factored quadratic form; the d x d truth matrix is never built.
"""

from dataclasses import dataclass

import numpy as np

from .model import ORACLE_CAP, Batch, GroundTruth, OracleCapError

# spawn-key namespaces under one user seed: (0, t) = batch t, (1,) = solver probes
_BATCH_KEY = 0
SOLVER_KEY = 1


@dataclass(frozen=True)
class SpectrumSpec:
    """Signed eigenvalue spec: an explicit list, or a condition-number recipe.

    The condition recipe places k magnitudes geometrically between cond and 1
    (so sigma_1/sigma_k = cond exactly) and applies the sign pattern.  An
    optional residual tail (for approximately-low-rank truths) decays
    geometrically from ``residual_magnitude``, which must stay below the
    smallest requested |lambda_k|.
    """

    kind: str                      # "explicit" | "condition"
    values: tuple = ()             # explicit signed eigenvalues
    k: int = 0
    cond: float = 1.0
    signs: str = "positive"        # "positive" | "alternating" | "random"
    residual_magnitude: float = 0.0
    residual_decay: float = 0.5

    def __post_init__(self):
        if self.kind == "explicit":
            if not self.values or any(v == 0.0 for v in self.values):
                raise ValueError("explicit spectrum must be nonempty and nonzero")
        elif self.kind == "condition":
            if self.k < 1 or not np.isfinite(self.cond) or self.cond < 1.0:
                raise ValueError("condition spectrum needs k >= 1 and finite cond >= 1")
            if self.signs not in ("positive", "alternating", "random"):
                raise ValueError(f"unknown sign pattern {self.signs!r}")
        else:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.residual_magnitude < 0 or not 0 < self.residual_decay <= 1:
            raise ValueError("residual magnitude must be >= 0 and decay in (0, 1]")
        if self.residual_magnitude >= self._min_magnitude():
            raise ValueError("residual magnitude must stay below the smallest |lambda|")

    def _min_magnitude(self):
        if self.kind == "explicit":
            return min(abs(v) for v in self.values)
        return 1.0  # condition recipe bottoms out at magnitude 1

    @classmethod
    def explicit(cls, values, residual_magnitude=0.0, residual_decay=0.5):
        return cls(kind="explicit", values=tuple(float(v) for v in values),
                   residual_magnitude=residual_magnitude,
                   residual_decay=residual_decay)

    @classmethod
    def condition(cls, k, cond, signs="positive",
                  residual_magnitude=0.0, residual_decay=0.5):
        return cls(kind="condition", k=int(k), cond=float(cond), signs=signs,
                   residual_magnitude=residual_magnitude,
                   residual_decay=residual_decay)

    @property
    def rank(self):
        return len(self.values) if self.kind == "explicit" else self.k

    def eigenvalues(self, rng):
        """Signed eigenvalues sorted by |.| descending, positive first on ties."""
        if self.kind == "explicit":
            lam = np.array(self.values, dtype=np.float64)
        else:
            if self.k == 1:
                mags = np.array([self.cond])
            else:
                mags = self.cond ** (np.arange(self.k - 1, -1, -1) / (self.k - 1))
            if self.signs == "positive":
                sgn = np.ones(self.k)
            elif self.signs == "alternating":
                sgn = (-1.0) ** np.arange(self.k)
            else:
                sgn = np.where(rng.random(self.k) < 0.5, -1.0, 1.0)
            lam = mags * sgn
        order = sorted(range(lam.size),
                       key=lambda i: (-abs(lam[i]), 0.0 if lam[i] > 0 else 1.0))
        return lam[order]

    def residual_values(self, count):
        if self.residual_magnitude == 0.0:
            return None
        return self.residual_magnitude * self.residual_decay ** np.arange(count)


def sample_ground_truth(d, k, spectrum, w_norm=1.0, noise_proxy=0.0, seed=0):
    """Draw a planted truth: U* from the QR of a Gaussian d x k matrix, w*
    uniform on the sphere of radius w_norm, eigenvalues from the spectrum spec.

    With a residual tail the full d x d orthogonal basis is materialized
    (capped at the dense-oracle limit) because labels need the complement
    projections.
    """
    if spectrum.rank != k:
        raise ValueError(f"spectrum has rank {spectrum.rank}, expected k={k}")
    if w_norm < 0 or noise_proxy < 0:
        raise ValueError("w_norm and noise_proxy must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    lam = spectrum.eigenvalues(rng)
    residual = spectrum.residual_values(d - k)
    if residual is not None:
        if d > ORACLE_CAP:
            raise OracleCapError(
                f"residual-spectrum truth needs the full basis; d={d} > {ORACLE_CAP}")
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        u_star, u_perp = q[:, :k], q[:, k:]
    else:
        u_star, _ = np.linalg.qr(rng.standard_normal((d, k)))
        u_perp = None
    if w_norm == 0.0:
        w_star = np.zeros(d)
    else:
        g = rng.standard_normal(d)
        w_star = w_norm * g / np.linalg.norm(g)
    return GroundTruth(w_star=w_star, u_star=u_star, lambda_star=lam,
                       residual_spectrum=residual, noise_proxy=noise_proxy,
                       u_perp=u_perp)


def sample_batch(gt, n, rng):
    """One batch of n i.i.d. standard-Gaussian instances with labels
    y_i = x_i^T w* + x_i^T M* x_i + noise, via the factored quadratic form.
    """
    if n < 1:
        raise ValueError("n must be positive")
    d = gt.d
    # transpose of a C-order (n, d) draw: instances are contiguous columns
    x = rng.standard_normal((n, d)).T
    z = gt.u_star.T @ x
    y = np.einsum("ji,ji->i", z, gt.lambda_star[:, None] * z)
    if gt.residual_spectrum is not None:
        zp = gt.u_perp.T @ x
        y += np.einsum("ji,ji->i", zp, gt.residual_spectrum[:, None] * zp)
    y += gt.w_star @ x
    if gt.noise_proxy > 0:
        y += gt.noise_proxy * rng.standard_normal(n)
    return Batch(x=x, y=y)


class DataSource:
    """Single-consumer unbounded stream of independent batches.

    Successive ``next_batch()`` calls serve instances
    [t*n, (t+1)*n) for t = start, start+1, ...; no instance is ever
    re-served, and batch t is identical across streams with the same seed.
    """

    def __init__(self, gt, n, seed, start=0):
        if n < 1:
            raise ValueError("n must be positive")
        if start < 0:
            raise ValueError("start must be nonnegative")
        self.gt = gt
        self.n = int(n)
        self.seed = int(seed)
        self._t = int(start)

    @property
    def batches_served(self):
        return self._t

    @property
    def next_instance_index(self):
        return self._t * self.n

    def batch_at(self, t):
        """The t-th batch of this stream, independent of consumption state."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_BATCH_KEY, t))
        return sample_batch(self.gt, self.n, np.random.default_rng(ss))

    def next_batch(self):
        batch = self.batch_at(self._t)
        self._t += 1
        return batch


def open_stream(gt, n, seed, start=0):
    return DataSource(gt, n, seed, start=start)
