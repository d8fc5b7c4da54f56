"""Joint estimation of multiple related Gaussian DAG models by greedy equivalence search."""

__version__ = "0.1.0"

from .graph import Dag, Pdag, Permutation, complete_to_cpdag, consistent_extension, enumerate_class, shd
from .pipeline import PipelineConfig, joint_ges, separate_ges
from .refit import FitResult, LassoConfig, lasso_cd, refit_classes
from .scoring import MultiDataset, ScoreConfig, graph_score, interventional_local_score, local_score
from .search import SearchConfig, exhaustive_best_dag, ges_fit, gies_fit, separate_fit
from .sem import InterventionSpec, JointModelConfig, SemModel, cholesky_sem, precision_from_sem, random_joint_model, sample

__all__ = [
    "Dag", "Pdag", "Permutation", "complete_to_cpdag", "consistent_extension", "enumerate_class", "shd",
    "PipelineConfig", "joint_ges", "separate_ges",
    "FitResult", "LassoConfig", "lasso_cd", "refit_classes",
    "MultiDataset", "ScoreConfig", "graph_score", "interventional_local_score", "local_score",
    "SearchConfig", "exhaustive_best_dag", "ges_fit", "gies_fit", "separate_fit",
    "InterventionSpec", "JointModelConfig", "SemModel", "cholesky_sem", "precision_from_sem",
    "random_joint_model", "sample",
]
