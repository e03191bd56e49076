"""Differentiable Bayesian structure learning with Stein variational gradient descent."""

__version__ = "0.1.0"

from .estimators import JointDiBS, MarginalDiBS
from .graph import (
    Cpdag,
    GraphPrior,
    acyclicity_penalty,
    acyclicity_penalty_grad,
    dag_to_cpdag,
    is_acyclic,
    sample_random_dag,
    shd,
)
from .metrics import WeightedPosterior, auroc, edge_marginals, exact_posterior_oracle, expected_shd
from .models import BGe, LinearGaussian, NonlinearGaussian, ancestral_sample

__all__ = [
    "BGe",
    "Cpdag",
    "GraphPrior",
    "JointDiBS",
    "LinearGaussian",
    "MarginalDiBS",
    "NonlinearGaussian",
    "WeightedPosterior",
    "acyclicity_penalty",
    "acyclicity_penalty_grad",
    "ancestral_sample",
    "auroc",
    "dag_to_cpdag",
    "edge_marginals",
    "exact_posterior_oracle",
    "expected_shd",
    "is_acyclic",
    "sample_random_dag",
    "shd",
]
