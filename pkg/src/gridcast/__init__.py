"""Gaussian broadcast processes on grid posets.

A library plus CLI for the two grid broadcast models (finite orthant and
half-space): exact layer covariances, optimal linear / convex / window /
single-vertex estimators of the root signal, supercritical certificates,
reconstruction phase verdicts, abelian-square combinatorics, and a
reproducible Monte Carlo oracle.
"""

__version__ = "0.1.0"

from .poset import ModelKind, ModelSpec, Vertex, Window  # noqa: F401
from .covariance import (  # noqa: F401
    EstimatorStats,
    LayerCovariance,
    ResourceCapError,
    estimator_stats,
    finite_layer_covariance,
    finite_layer_covariances,
)
from .estimators import (  # noqa: F401
    EstimatorResult,
    closed_form_critical_d1,
    optimal_convex,
    optimal_linear,
    single_vertex_ratio,
    supercritical_certificate,
    window_optimal,
)
from .phase import PhaseVerdict, phase_verdict  # noqa: F401
from .chains import ChainDistribution, chain_hit_probabilities, poisson_tail_checks  # noqa: F401
from .simulate import SampleBatch, sample_finite, sample_halfspace_window  # noqa: F401
