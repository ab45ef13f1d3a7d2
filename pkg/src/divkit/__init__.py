"""divkit: feature-diversity metrics, certified contraction bounds, and a
desk-scale transformer with series activations and augmented shortcuts."""

from .activations import ACTIVATION_KINDS, ActivationSpec, act_derivative, act_forward, lipschitz_estimate
from .metrics import (NonFiniteInputError, SpectralSummary, attention_contraction,
                      diversity, diversity_oracle, effective_dimension, pca_top_k,
                      projector_gram_top_eig, spectral_norm)
from .model import ModelConfig, count_flops, init_params, model_forward, param_count
from .training import CorpusDataset, TrainConfig, grad_check, train
from .verifier import BOUND_KINDS, check_inequality, collapse_demo, run_suite, sample_instance

__version__ = "0.1.0"

__all__ = [
    "ACTIVATION_KINDS", "ActivationSpec", "act_derivative", "act_forward",
    "lipschitz_estimate", "NonFiniteInputError", "SpectralSummary",
    "attention_contraction", "diversity", "diversity_oracle",
    "effective_dimension", "pca_top_k", "projector_gram_top_eig",
    "spectral_norm", "ModelConfig", "count_flops", "init_params",
    "model_forward", "param_count", "CorpusDataset", "TrainConfig",
    "grad_check", "train", "BOUND_KINDS", "check_inequality", "collapse_demo",
    "run_suite", "sample_instance", "__version__",
]
