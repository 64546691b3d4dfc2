"""Evaluation metrics for synthetic tables: ML efficiency, distance to
closest record, discriminator accuracy, and GMM likelihood fitness."""

from .dcr import DcrResult, dcr
from .discriminator import DiscriminatorResult, discriminator
from .featurize import Featurizer, ensure_same_features
from .histogram import export_joint_histogram, union_range
from .likelihood import LikelihoodResult, likelihood_fitness
from .mle import MleResult, mle
from .models import DecisionTree, LinearGd, LogisticGd, RandomForest
from .report import ALL_METRICS, EvalReport, run_eval

__all__ = [
    "ALL_METRICS",
    "DcrResult",
    "DecisionTree",
    "DiscriminatorResult",
    "EvalReport",
    "Featurizer",
    "LikelihoodResult",
    "LinearGd",
    "LogisticGd",
    "MleResult",
    "RandomForest",
    "dcr",
    "discriminator",
    "ensure_same_features",
    "export_joint_histogram",
    "likelihood_fitness",
    "mle",
    "run_eval",
    "union_range",
]
