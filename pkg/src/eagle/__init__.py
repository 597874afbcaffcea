"""Active perturbation selection for local surrogate explanations."""

from .acquisition import AcquisitionStrategy, Strategy, eagle_score, select_batch
from .blackbox import BlackBox, BlackBoxError, MoonsModel, SyntheticLinearModel, make_external
from .config import ConfigError, ExperimentConfig
from .explain import ExplainError, Explanation, explain_instance
from .metrics import RunTrace, ccm, d_efficiency, a_efficiency, jaccard_topk
from .sampling import LocalityKernel, PoolConfig
from .surrogate import LabeledPerturbation, Prior, SurrogatePosterior, fit_blr

__all__ = [
    "AcquisitionStrategy",
    "BlackBox",
    "BlackBoxError",
    "ConfigError",
    "ExperimentConfig",
    "ExplainError",
    "Explanation",
    "LabeledPerturbation",
    "LocalityKernel",
    "MoonsModel",
    "PoolConfig",
    "Prior",
    "RunTrace",
    "Strategy",
    "SurrogatePosterior",
    "SyntheticLinearModel",
    "a_efficiency",
    "ccm",
    "d_efficiency",
    "eagle_score",
    "explain_instance",
    "fit_blr",
    "jaccard_topk",
    "make_external",
    "select_batch",
]
