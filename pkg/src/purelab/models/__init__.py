from .nets import (
    TIME_EMBED_DIM,
    ClassifierParams,
    DenoiserParams,
    classifier_forward,
    denoiser_forward,
    make_eps_model,
    time_embedding,
)
from .train import (
    Adam,
    AdvTrainConfig,
    TrainConfig,
    accuracy,
    adversarial_train,
    classify,
    pgd_perturb,
    train_classifier,
    train_denoiser,
)

__all__ = [
    "Adam",
    "AdvTrainConfig",
    "ClassifierParams",
    "DenoiserParams",
    "TIME_EMBED_DIM",
    "TrainConfig",
    "accuracy",
    "adversarial_train",
    "classifier_forward",
    "classify",
    "denoiser_forward",
    "make_eps_model",
    "pgd_perturb",
    "time_embedding",
    "train_classifier",
    "train_denoiser",
]
