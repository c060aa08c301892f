"""Laplacians, heat kernels and jump processes on k-graph path spaces.

The infinite path space of a finite k-graph is approximated by its depth-n
truncated path tree. On that tree the package computes the Perron-Frobenius
measure, the ultrametrics d_w and d^(s), the spectrum and eigenbasis of the
Laplace-Beltrami operator Delta_s, its heat kernel, the equivalent jump
kernel and a continuous-time Markov chain simulating the jump process.
"""

from .bratteli import PathTree, build_tree, common_prefix, sample_path
from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    KGraphError,
    NoConvergence,
    NotAGenerator,
    NotBranching,
    NotCommuting,
    NotIrreducible,
    ParamOutOfRange,
    SpectralRadiusAtMostOne,
    TruncationError,
)
from .heat import (
    audit_asymp,
    audit_pbound,
    heat_closed,
    heat_eigen,
    heat_matrix,
    regress_exponent,
    semigroup_apply,
)
from .jump import SimConfig, annotate_jump, ctmc_simulate, dirichlet_jump, moments
from .kgraph import KGraphSpec, PerronData, ValidatedKGraph, perron_data, validate
from .measures import WeightParams, annotate_measure, annotate_weight, d_w, vd_audit_dw
from .spectral import (
    SpectralParams,
    annotate_G,
    annotate_lambda,
    d_s,
    delta_s_matrix,
    eigenbasis,
    vd_audit_ds,
)

__all__ = [
    "BudgetExceeded", "DimensionMismatch", "KGraphError", "KGraphSpec", "NoConvergence",
    "NotAGenerator", "NotBranching", "NotCommuting", "NotIrreducible", "ParamOutOfRange",
    "PathTree", "PerronData", "SimConfig", "SpectralParams", "SpectralRadiusAtMostOne",
    "TruncationError", "ValidatedKGraph", "WeightParams", "annotate_G", "annotate_jump",
    "annotate_lambda", "annotate_measure", "annotate_weight", "audit_asymp", "audit_pbound",
    "build_tree", "common_prefix", "ctmc_simulate", "d_s", "d_w", "delta_s_matrix",
    "dirichlet_jump", "eigenbasis", "heat_closed", "heat_eigen", "heat_matrix", "moments",
    "perron_data", "regress_exponent", "sample_path", "semigroup_apply", "validate",
    "vd_audit_ds", "vd_audit_dw",
]
