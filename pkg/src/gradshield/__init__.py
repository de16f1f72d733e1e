"""White-box adversarial-robustness workbench.

A small reverse-mode autodiff engine and CNN, FGSM and L-infinity PGD
attacks, an adversarial-training harness with strategy/fraction sweeps, and
a reproducible experiment CLI, all on plain numpy.
"""

__version__ = "0.1.0"

from .attacks import AttackConfig, attack_dataset, fgsm, linf_distance, pgd, project, sign
from .data import (
    HAM10000_CLASSES,
    LabeledDataset,
    concatenate,
    load_csv,
    oversample,
    save_csv,
    split,
    synthesize_toy,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GradShieldError,
    GraphError,
    InvariantError,
    ShapeError,
)
from .model import (
    Model,
    ModelConfig,
    build_model,
    input_gradient,
    load_checkpoint,
    parameter_fingerprint,
    save_checkpoint,
)
from .tensor import Parameter, Tape, Tensor
from .training import (
    FGSM_ONLY,
    MIXED_HALF_HALF,
    PGD_ONLY,
    STRATEGIES,
    Adam,
    AugmentationPlan,
    EvalResult,
    ExperimentReport,
    Metrics,
    TrainConfig,
    adversarial_train,
    build_adversarial_augmentation,
    collect_metrics,
    evaluate,
    sweep,
    train,
)

__all__ = [
    "__version__",
    "Tensor",
    "Tape",
    "Parameter",
    "ModelConfig",
    "Model",
    "build_model",
    "input_gradient",
    "save_checkpoint",
    "load_checkpoint",
    "parameter_fingerprint",
    "AttackConfig",
    "sign",
    "fgsm",
    "project",
    "pgd",
    "attack_dataset",
    "linf_distance",
    "LabeledDataset",
    "HAM10000_CLASSES",
    "load_csv",
    "save_csv",
    "split",
    "oversample",
    "synthesize_toy",
    "concatenate",
    "TrainConfig",
    "AugmentationPlan",
    "EvalResult",
    "Metrics",
    "Adam",
    "train",
    "evaluate",
    "build_adversarial_augmentation",
    "adversarial_train",
    "collect_metrics",
    "sweep",
    "ExperimentReport",
    "FGSM_ONLY",
    "PGD_ONLY",
    "MIXED_HALF_HALF",
    "STRATEGIES",
    "GradShieldError",
    "ShapeError",
    "GraphError",
    "CheckpointError",
    "DataError",
    "ConfigError",
    "InvariantError",
]
