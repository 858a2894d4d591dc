from .logger import LogLevel, Logger, get_logger, set_log_level
from .ndiff import Tensor, ParamSet, backward, grad_check, no_grad
from .scm import DiscreteSCM, Variable, DistTable, joint, intervene, interventional_dist, adjustment_estimate, confounding_gap
from .datagen import FactorSpec, GenSpec, LabeledDataset, sample_dataset, shifted_split, read_dataset, write_dataset
from .gaussmix import ComponentGaussian, MixtureLatent, lc_moment
from .models import CdVaeConfig, Model, Variant, build_model
from .trainer import Trainer, TrainResult, train, save_model, load_model
from .metrics import MetricReport, InfluenceMatrix, evaluate_representation
from .verify import PropertyVerifier, PropertyCheck, default_verifier
from .harness import ExperimentConfig, RunRecord, ConfigError, RunFailure, run_experiment

__version__ = "0.1.0"

__all__ = [
    "LogLevel",
    "Logger",
    "get_logger",
    "set_log_level",
    "Tensor",
    "ParamSet",
    "backward",
    "grad_check",
    "no_grad",
    "DiscreteSCM",
    "Variable",
    "DistTable",
    "joint",
    "intervene",
    "interventional_dist",
    "adjustment_estimate",
    "confounding_gap",
    "FactorSpec",
    "GenSpec",
    "LabeledDataset",
    "sample_dataset",
    "shifted_split",
    "read_dataset",
    "write_dataset",
    "ComponentGaussian",
    "MixtureLatent",
    "lc_moment",
    "CdVaeConfig",
    "Model",
    "Variant",
    "build_model",
    "Trainer",
    "TrainResult",
    "train",
    "save_model",
    "load_model",
    "MetricReport",
    "InfluenceMatrix",
    "evaluate_representation",
    "PropertyVerifier",
    "PropertyCheck",
    "default_verifier",
    "ExperimentConfig",
    "RunRecord",
    "ConfigError",
    "RunFailure",
    "run_experiment",
]
