"""Empirical verification harness: recovery-error metrics, the shifted
near-isometry constant of the quadratic sensing operator, the
concentration-lemma suite, and noise-floor experiments.

Every check is a seeded Monte-Carlo estimate reported through medians (the
underlying guarantees are high-probability statements, so quantiles are the
robust summary).  The primary assertions are n-scaling exponents — the
deviations all shrink like 1/sqrt(n) — because the absolute constants in
the guarantees are unspecified.
"""

import math
from dataclasses import dataclass

import numpy as np

from .datagen import open_stream, sample_ground_truth
from .model import ORACLE_CAP, OracleCapError, SolverConfig
from .sensing import ImplicitSymmetricOperator
from .spectral import spectral_norm

LEMMA_IDS = ("trace_conc", "first_order_mean", "adjoint_cross", "cross_term",
             "covariance")
PREDICTED_EXPONENT = -0.5
EXPONENT_BAND = (-0.65, -0.35)


@dataclass(frozen=True)
class ConcentrationReport:
    lemma: str
    d: int
    k: int
    n_values: tuple
    trials: int
    deviations: tuple          # per n: tuple of per-trial deviations
    medians: tuple
    exponent: float
    predicted_exponent: float = PREDICTED_EXPONENT
    passed: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(dev < 0 for per_n in self.deviations for dev in per_n):
            raise ValueError("deviations must be nonnegative")


@dataclass(frozen=True)
class RipEstimate:
    d: int
    k: int
    n: int
    trials: int
    delta_hat: float           # median over trials of the shifted deviation
    deviations: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.delta_hat) or self.delta_hat < 0:
            raise ValueError("delta_hat must be finite and nonnegative")


@dataclass(frozen=True)
class FloorPoint:
    level: float               # noise proxy or residual magnitude
    plateau: float             # median plateau epsilon over seeds
    per_seed: tuple = ()


def difference_operator(model, truth):
    """Implicit map for M - M_k* (rank <= 3k), applied block-wise."""
    u, v = model.u, model.v
    us, lam = truth.u_star, truth.lambda_star

    def apply_block(p):
        out = 0.5 * (u @ (v.T @ p) + v @ (u.T @ p))
        out -= us @ (lam[:, None] * (us.T @ p))
        return out

    return ImplicitSymmetricOperator(model.d, apply_block)


def recovery_error(model, truth, tol=1e-10, max_iters=2000, rng=None):
    """(beta, gamma, epsilon): exact w-error, spectral-norm M-error against
    the best rank-k part of the truth, and their sum.

    gamma is evaluated by power iteration on the implicit difference
    operator, so no d x d matrix is formed at any size.  Once the model is
    close the difference application cancels O(sigma_1*) intermediates, so
    the iteration is allowed to stall at the matching rounding floor.
    """
    beta = float(np.linalg.norm(truth.w_star - model.w))
    scale = truth.scale + np.linalg.norm(model.w) + np.linalg.norm(model.v, 2)
    floor = 64 * np.finfo(np.float64).eps * scale
    gamma = spectral_norm(difference_operator(model, truth), tol=tol,
                          max_iters=max_iters, rng=rng, noise_floor=floor)
    return beta, gamma, beta + gamma


def _random_unit_rank_k(d, k, rng):
    """Factors (q, lam) of a random symmetric rank-k matrix with unit
    spectral norm: q d x k orthonormal, signed eigenvalues, max |lam| = 1.
    """
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    mags = rng.uniform(0.5, 1.0, size=k)
    signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    lam = mags * signs
    peak = np.max(np.abs(lam))
    if peak == 0.0:                       # guard: zero matrices are excluded
        raise ValueError("degenerate zero trial matrix")
    return q, lam / peak


def _quad_forms(x, q, lam):
    z = q.T @ x
    return np.einsum("ji,ji->i", z, lam[:, None] * z)


def estimate_rip_delta(d, k, n, trials, rng):
    """Median over trials of ||(1/2n) A'A(M) - tr(M)/2 I - M||_2 for fixed
    random unit-norm rank-k symmetric M and fresh Gaussian X (dense path,
    oracle-cap gated).
    """
    if d > ORACLE_CAP:
        raise OracleCapError(f"dense deviation needs d <= {ORACLE_CAP}, got {d}")
    devs = []
    eye = np.eye(d)
    for _ in range(trials):
        q, lam = _random_unit_rank_k(d, k, rng)
        x = rng.standard_normal((d, n))
        s = _quad_forms(x, q, lam)
        m = (q * lam) @ q.T
        dev = x @ (s[:, None] * x.T) / (2.0 * n) - 0.5 * np.trace(m) * eye - m
        devs.append(float(np.linalg.norm(dev, 2)))
    return RipEstimate(d=d, k=k, n=n, trials=trials,
                       delta_hat=float(np.median(devs)), deviations=tuple(devs))


def lemma_statistic(lemma_id, x, q, lam, w):
    """One observation of a concentration lemma's left-hand side for a fixed
    (M, w) given by factors (q, lam) and a fresh instance matrix x.
    """
    n = x.shape[1]
    if lemma_id == "trace_conc":
        return float(abs(np.mean(_quad_forms(x, q, lam)) - np.sum(lam)))
    if lemma_id == "first_order_mean":
        return float(abs(np.mean(x.T @ w)))
    if lemma_id == "adjoint_cross":
        c = x.T @ w
        return float(np.linalg.norm(x @ (c[:, None] * x.T) / n, 2))
    if lemma_id == "cross_term":
        return float(np.linalg.norm(x @ _quad_forms(x, q, lam) / n))
    if lemma_id == "covariance":
        d = x.shape[0]
        return float(np.linalg.norm(np.eye(d) - x @ x.T / n, 2))
    raise ValueError(f"unknown lemma id {lemma_id!r}")


def check_lemma(lemma_id, d, k, n, trials, rng):
    """Measure one lemma's deviation over a {n, 2n, 4n} sweep and fit the
    scaling exponent; passes when the fit lies in [-0.65, -0.35].

    The dense-matrix lemmas are oracle-cap gated.  (M, w) are unit-norm and
    redrawn per trial; X is fresh per observation, matching the
    fixed-target/fresh-operator structure of the guarantees.
    """
    if lemma_id not in LEMMA_IDS:
        raise ValueError(f"unknown lemma id {lemma_id!r}; choose from {LEMMA_IDS}")
    if lemma_id in ("adjoint_cross", "covariance") and d > ORACLE_CAP:
        raise OracleCapError(f"dense lemma check needs d <= {ORACLE_CAP}, got {d}")
    n_values = (n, 2 * n, 4 * n)
    per_point = [[] for _ in n_values]
    for _ in range(trials):
        q, lam = _random_unit_rank_k(d, k, rng)
        g = rng.standard_normal(d)
        w = g / np.linalg.norm(g)
        # one draw per trial, prefix-sliced: common random numbers across the
        # sweep tighten the exponent fit without biasing any single point
        x = rng.standard_normal((d, n_values[-1]))
        for j, nv in enumerate(n_values):
            per_point[j].append(lemma_statistic(lemma_id, x[:, :nv], q, lam, w))
    deviations = tuple(tuple(per) for per in per_point)
    medians = tuple(float(np.median(per)) for per in deviations)
    slope = float(np.polyfit(np.log(n_values), np.log(medians), 1)[0])
    lo, hi = EXPONENT_BAND
    return ConcentrationReport(lemma=lemma_id, d=d, k=k, n_values=n_values,
                               trials=trials, deviations=tuple(deviations),
                               medians=medians, exponent=slope,
                               passed=bool(lo <= slope <= hi))


def plateau_epsilon(trace):
    """Median epsilon over the last quarter of a trace (at least one point)."""
    eps = trace.epsilons
    if eps.size == 0:
        raise ValueError("empty trace")
    tail = max(1, eps.size // 4)
    return float(np.median(eps[-tail:]))


def _default_spectrum(k):
    from .datagen import SpectrumSpec
    return SpectrumSpec.condition(k, cond=2.0, signs="alternating")


def _run_floor(gt, d, k, n, t_max, run_seed):
    from .solver import train  # imported here: solver depends on this module

    cfg = SolverConfig(d=d, k=k, n=n, t_max=t_max, seed=int(run_seed))
    out = train(open_stream(gt, n, seed=int(run_seed)), cfg, truth=gt)
    return plateau_epsilon(out.trace)


def noisy_floor_experiment(d, k, n, xi_values, t_max, seeds, rng,
                           spectrum=None, w_norm=1.0):
    """Plateau recovery error as a function of the label-noise proxy.

    Runs are paired: each seed reuses one planted truth and one stream seed
    across all noise levels, so the plateau ratios isolate the effect of xi.
    Returns one FloorPoint per xi (median plateau over seeds).
    """
    import dataclasses

    if any(xi < 0 for xi in xi_values):
        raise ValueError("xi values must be nonnegative")
    spectrum = spectrum if spectrum is not None else _default_spectrum(k)
    run_seeds = rng.integers(0, 2**63, size=seeds)
    truths = [sample_ground_truth(d, k, spectrum, w_norm=w_norm,
                                  noise_proxy=0.0, seed=int(s))
              for s in run_seeds]
    table = []
    for xi in xi_values:
        plateaus = []
        for gt, s in zip(truths, run_seeds):
            noisy = dataclasses.replace(gt, noise_proxy=float(xi))
            plateaus.append(_run_floor(noisy, d, k, n, t_max, s))
        table.append(FloorPoint(level=float(xi),
                                plateau=float(np.median(plateaus)),
                                per_seed=tuple(plateaus)))
    return table


def residual_floor_experiment(d, k, n, residual_magnitudes, t_max, seeds, rng,
                              spectrum=None, w_norm=1.0, residual_decay=0.5):
    """Plateau recovery error against the size of the residual spectrum
    (approximately-low-rank truth, noise-free labels); paired like the noisy
    experiment.
    """
    import dataclasses

    if any(mag <= 0 for mag in residual_magnitudes):
        raise ValueError("residual magnitudes must be positive")
    spectrum = spectrum if spectrum is not None else _default_spectrum(k)
    run_seeds = rng.integers(0, 2**63, size=seeds)
    table = []
    for mag in residual_magnitudes:
        spec = dataclasses.replace(spectrum, residual_magnitude=float(mag),
                                   residual_decay=residual_decay)
        plateaus = []
        for s in run_seeds:
            gt = sample_ground_truth(d, k, spec, w_norm=w_norm,
                                     noise_proxy=0.0, seed=int(s))
            plateaus.append(_run_floor(gt, d, k, n, t_max, s))
        table.append(FloorPoint(level=float(mag),
                                plateau=float(np.median(plateaus)),
                                per_seed=tuple(plateaus)))
    return table


def fit_convergence_rate(trace):
    """Per-iteration contraction factor fitted on the pre-plateau window.

    The window keeps iterations with epsilon above 100x the final plateau;
    a least-squares line through log(epsilon) vs t gives the factor
    exp(slope) and the fit quality r^2.  Needs at least 5 decreasing
    pre-plateau points.
    """
    eps = trace.epsilons
    plateau = plateau_epsilon(trace)
    mask = eps > 100.0 * plateau
    idx = np.flatnonzero(mask)
    if idx.size < 5:
        raise ValueError(f"only {idx.size} pre-plateau points; need >= 5")
    window = eps[idx]
    if not window[0] > window[-1]:
        raise ValueError("epsilon does not decrease over the pre-plateau window")
    t = np.asarray(idx, dtype=np.float64)
    log_eps = np.log(window)
    slope, intercept = np.polyfit(t, log_eps, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((log_eps - fitted) ** 2))
    ss_tot = float(np.sum((log_eps - np.mean(log_eps)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(np.exp(slope)), float(r_squared)
