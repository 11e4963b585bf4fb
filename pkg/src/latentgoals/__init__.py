"""Latent goal analysis: decompose reward functions into latent goals,
self-detected action outcomes and residual costs, batch or online, with a
recommendation benchmark and a saliency-driven reaching experiment."""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, FormatError, LgaError,
                     MetricUndefinedError, TrainingDivergedError)
from .features import (PcaProjection, WhiteningTransform, apply_pca, fit_pca,
                       fit_whitening, one_of_m_encode, polynomial_features)
from .lga import (LgaDecomposition, ProjectionSolution, assemble_decomposition,
                  decompose, load_decomposition, optimize_projection,
                  save_decomposition)
from .locallinear import LocallyLinearModel
from .metrics import nrmse_fit, pc1_axis_nrmse
from .online import OnlineLgaState, StepDiagnostics, consolidate, online_step
from .reward_models import (BilinearRewardModel, EventBatch,
                            QuadraticRewardModel, TrainConfig, eval_bilinear,
                            eval_quadratic, fit_bilinear, fit_quadratic,
                            load_model, save_model, truncate_bilinear)

__all__ = [
    "ConfigError", "DomainError", "FormatError", "LgaError",
    "MetricUndefinedError", "TrainingDivergedError",
    "PcaProjection", "WhiteningTransform", "apply_pca", "fit_pca",
    "fit_whitening", "one_of_m_encode", "polynomial_features",
    "LgaDecomposition", "ProjectionSolution", "assemble_decomposition",
    "decompose", "load_decomposition", "optimize_projection",
    "save_decomposition", "LocallyLinearModel", "nrmse_fit", "pc1_axis_nrmse",
    "OnlineLgaState", "StepDiagnostics", "consolidate", "online_step",
    "BilinearRewardModel", "EventBatch", "QuadraticRewardModel", "TrainConfig",
    "eval_bilinear", "eval_quadratic", "fit_bilinear", "fit_quadratic",
    "load_model", "save_model", "truncate_bilinear",
]
