"""gfmstream: one-pass streaming recovery of generalized factorization
machines (first-order vector plus symmetric low-rank quadratic term) from
Gaussian-design mini-batches, with a Monte-Carlo diagnostics harness for
the underlying near-isometry and concentration behavior.
"""

from .datagen import DataSource, SpectrumSpec, open_stream, sample_batch, sample_ground_truth
from .diagnostics import (ConcentrationReport, FloorPoint, RipEstimate,
                          check_lemma, estimate_rip_delta, fit_convergence_rate,
                          noisy_floor_experiment, recovery_error,
                          residual_floor_experiment)
from .kernels import BACKEND
from .model import (Batch, ConvergenceTrace, GfmModel, GroundTruth, SolverConfig,
                    TraceRecord, densify, densify_truth, predict)
from .sensing import (ImplicitSymmetricOperator, Residual, compute_h2, compute_h3,
                      h1_operator, residual, sense, shifted_update_operator)
from .solver import TrainOutcome, initialize, step, train
from .spectral import (AngleReport, canonical_angles, qr_orthonormalize,
                       spectral_norm, tangent_from_basis, topk_left_singular)

__version__ = "0.1.0"

__all__ = [
    "AngleReport", "BACKEND", "Batch", "ConcentrationReport", "ConvergenceTrace",
    "DataSource", "FloorPoint", "GfmModel", "GroundTruth",
    "ImplicitSymmetricOperator", "Residual", "RipEstimate", "SolverConfig",
    "SpectrumSpec", "TraceRecord", "TrainOutcome", "canonical_angles",
    "check_lemma", "compute_h2", "compute_h3", "densify", "densify_truth",
    "estimate_rip_delta", "fit_convergence_rate", "h1_operator", "initialize",
    "noisy_floor_experiment", "open_stream", "predict", "qr_orthonormalize",
    "recovery_error", "residual", "residual_floor_experiment", "sample_batch",
    "sample_ground_truth", "sense", "shifted_update_operator", "spectral_norm",
    "step", "tangent_from_basis", "topk_left_singular", "train",
]
