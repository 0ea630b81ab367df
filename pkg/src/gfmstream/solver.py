"""One-pass streaming solver: truncated-SVD initialization, the per-batch
alternating update, and the full training loop with optional trace capture.

Every mini-batch is consumed exactly once.  Iteration t computes the
statistics (H1, h2, h3) from the freshly retrieved batch together with the
previous model state, then updates

    U' = QR((H1 - h2/2 I + M) U),   w' = w + h3,   V' = (H1 - h2/2 I + M) U'

so the sensing randomness of a batch is always independent of the state it
measures.  Peak solver state is O(kd + n) numbers beyond the current batch.
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .datagen import SOLVER_KEY
from .diagnostics import recovery_error
from .model import ConvergenceTrace, GfmModel, TraceRecord, check_dims
from .sensing import compute_h2, compute_h3, h1_operator, residual, shifted_update_operator
from .spectral import (DegenerateOperatorError, RankDeficiencyError,
                       canonical_angles, qr_orthonormalize, topk_left_singular)

DIVERGENCE_GROWTH = 10.0   # epsilon growth from its running minimum
ALPHA_LIMIT = 2.0          # tangent bound a healthy run never crosses
CONVERGED_CONTRACTION = 1e-8


class DivergenceError(RuntimeError):
    """A solver step produced a rank-deficient or non-finite state."""


class InitWarning(UserWarning):
    """Initialization hit a degenerate batch and fell back to a default basis."""


@dataclass(frozen=True)
class TrainOutcome:
    model: GfmModel
    trace: ConvergenceTrace
    batches_consumed: int
    status: str                    # "converged" | "max_iters" | "diverged"
    init_degenerate: bool = False


def _init_with_stats(batch, cfg, rng):
    check_dims(d=(batch.d, cfg.d))
    zero = GfmModel.zeros(cfg.d, cfg.k)
    res = residual(batch, zero)            # zero model: residual is just y
    h1 = h1_operator(batch, res)
    h2 = compute_h2(res, batch.n)
    init_op = shifted_update_operator(h1, h2, zero)
    degenerate = False
    oversampling = min(cfg.init_oversampling, cfg.d - cfg.k)
    try:
        u0 = topk_left_singular(init_op, cfg.k, oversampling,
                                cfg.init_power_iters, rng)
    except DegenerateOperatorError:
        warnings.warn("degenerate (all-zero) init operator; using canonical basis",
                      InitWarning, stacklevel=3)
        u0 = np.eye(cfg.d, cfg.k)
        degenerate = True
    model = GfmModel(w=np.zeros(cfg.d), u=u0, v=np.zeros((cfg.d, cfg.k)))
    model.assert_orthonormal()
    return model, h2, degenerate


def initialize(batch, cfg, rng=None):
    """Spectral initialization: w = 0, V = 0, U = leading-k eigenbasis of the
    shifted first statistic of one fresh batch under the zero model.
    """
    if rng is None:
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(SOLVER_KEY,)))
    model, _, _ = _init_with_stats(batch, cfg, rng)
    return model


def _step_with_stats(model, batch):
    check_dims(d=(model.d, batch.d))
    res = residual(batch, model)
    h1 = h1_operator(batch, res)
    h2 = compute_h2(res, batch.n)
    op = shifted_update_operator(h1, h2, model)
    image = op.apply(model.u)
    if np.max(np.abs(image)) == 0.0:
        # a no-information batch (all statistics zero): keep the subspace
        image = model.u
    try:
        u_new = qr_orthonormalize(image)
    except RankDeficiencyError as exc:
        raise DivergenceError(f"update subspace collapsed: {exc}") from exc
    w_new = model.w + compute_h3(batch, res)
    v_new = op.apply(u_new)
    if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(v_new))):
        raise DivergenceError("non-finite values in updated state")
    out = GfmModel(w=w_new, u=u_new, v=v_new)
    out.assert_orthonormal()
    return out, h2


def step(model, batch):
    """One alternating update from a fresh batch; the model's U stays
    column-orthonormal and M = (U V^T + V U^T)/2 is the refreshed estimate.
    """
    out, _ = _step_with_stats(model, batch)
    return out


def _measure(t, model, truth, h2, millis, cfg):
    beta, gamma, eps = recovery_error(model, truth, tol=cfg.spectral_tol,
                                      max_iters=cfg.spectral_max_iters)
    alpha = canonical_angles(model.u, truth.u_star).tan_theta
    return TraceRecord(t=t, beta=beta, gamma=gamma, epsilon=eps, alpha=alpha,
                       h2=h2, step_millis=millis)


def train(source, cfg, truth=None, record_timings=False):
    """Run initialization plus cfg.t_max streaming updates.

    ``truth`` enables per-iteration trace capture (beta, gamma, epsilon,
    alpha).  Wall-clock capture is opt-in so that default trace files are
    byte-identical across repeated runs with the same seeds.  The run is
    flagged diverged when epsilon grows 10x above its running minimum or the
    subspace angle leaves tan <= 2; non-finite states abort the stream.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(SOLVER_KEY,)))
    records = []
    status = "max_iters"

    tic = time.perf_counter()
    batch = source.next_batch()
    model, h2, degenerate = _init_with_stats(batch, cfg, rng)
    millis = (time.perf_counter() - tic) * 1e3 if record_timings else 0.0
    consumed = 1
    if truth is not None:
        records.append(_measure(0, model, truth, h2, millis, cfg))
    eps_min = records[0].epsilon if records else np.inf
    diverged = bool(records) and records[0].alpha > ALPHA_LIMIT

    for t in range(1, cfg.t_max + 1):
        batch = None  # drop the previous batch before drawing the next
        batch = source.next_batch()
        consumed += 1
        tic = time.perf_counter()
        try:
            model, h2 = _step_with_stats(model, batch)
        except DivergenceError:
            status = "diverged"
            break
        millis = (time.perf_counter() - tic) * 1e3 if record_timings else 0.0
        if truth is not None:
            rec = _measure(t, model, truth, h2, millis, cfg)
            records.append(rec)
            eps_min = min(eps_min, rec.epsilon)
            if rec.epsilon > DIVERGENCE_GROWTH * eps_min or rec.alpha > ALPHA_LIMIT:
                diverged = True

    if status != "diverged":
        if diverged:
            status = "diverged"
        elif records and records[-1].epsilon <= CONVERGED_CONTRACTION * records[0].epsilon:
            status = "converged"

    return TrainOutcome(model=model, trace=ConvergenceTrace(tuple(records)),
                        batches_consumed=consumed, status=status,
                        init_degenerate=degenerate)
