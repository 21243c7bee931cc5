"""Accurate-fairness evaluation of tabular classifiers via
fairness-confusion directed gradient search."""

__version__ = "0.1.0"

from .confusion import AccurateFairnessCriterion, ConfusionReport, classify, tally
from .data import (
    AttributeSpec,
    DatasetSchema,
    GeneratedInstance,
    Instance,
    builtin_schema,
    clip_to_domain,
    kmeans_seeds,
    load_dataset,
    load_schema,
    max_diff_counterpart,
    similar_counterparts,
)
from .generate import SearchConfig, fgsm, global_generation, local_generation, pgd, robustfair
from .nncore import (
    DenseNetwork,
    TrainConfig,
    forward,
    input_gradient,
    load_model,
    loss_mse,
    param_gradients,
    predict_label,
    save_model,
    train,
)
from .perturb import binarize_ground_truth, dir_fb, dir_ff, dir_tb, ground_truth

__all__ = [
    "AccurateFairnessCriterion",
    "AttributeSpec",
    "ConfusionReport",
    "DatasetSchema",
    "DenseNetwork",
    "GeneratedInstance",
    "Instance",
    "SearchConfig",
    "TrainConfig",
    "binarize_ground_truth",
    "builtin_schema",
    "classify",
    "clip_to_domain",
    "dir_fb",
    "dir_ff",
    "dir_tb",
    "fgsm",
    "forward",
    "global_generation",
    "ground_truth",
    "input_gradient",
    "kmeans_seeds",
    "load_dataset",
    "load_model",
    "load_schema",
    "local_generation",
    "loss_mse",
    "max_diff_counterpart",
    "param_gradients",
    "pgd",
    "predict_label",
    "robustfair",
    "save_model",
    "similar_counterparts",
    "tally",
    "train",
]
