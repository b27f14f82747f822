"""Uncertainty-aware gold standards for deformable image registration.

A Gaussian-process model of the unknown deformation is conditioned on noisy
landmark annotations, actively suggests the most informative location to
annotate next, and scores candidate transformations against the posterior.
"""

from .annotation import (
    Annotation,
    Ellipse,
    covariance_from_ellipse,
    ellipse_from_covariance,
    fuse_pointwise,
    gamma_from_alpha,
)
from .evaluation import (
    EntropyMap,
    ErrorMap,
    ScoreReport,
    blended_map,
    entropy_map,
    error_heat_map,
    expected_l2_decomposition,
    landmark_score,
    p_norm_error,
    proposed_score,
    spearman,
)
from .fields import GridGeometry, TransformField
from .gp import DeformationGP, PosteriorGaussian, new_session
from .kernels import (
    BasisKind,
    KernelSpec,
    estimate_hyperparameters,
    eval_basis,
    gram_matrix,
    kernel_eval,
    rescale_constants,
)
from .suggestion import (
    CandidateSet,
    Strategy,
    TargetSet,
    delta_h,
    detect_candidates,
    run_protocol,
    suggest_next_entropy,
    suggest_next_heuristic,
    suggest_next_random,
)
from .synth import (
    AnnotatorProfile,
    BenchmarkConfig,
    run_benchmark,
    sample_deformation,
    simulate_annotator,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
