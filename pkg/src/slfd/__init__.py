"""Stochastic latent feature distillation at desk scale."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:      # running from a source tree
    __version__ = "0.1.0"

from .data import Dataset, gen_procedural, load_dataset, save_dataset
from .distill import DistillConfig, DistillTrace, run_distillation
from .evaluation import ArchPool, RunReport, cross_arch_report
from .generator import Generator, GeneratorSpec
from .lowrank_mvn import LowRankGaussian, log_prob, new_gaussian, sample
from .stochastic import StochasticHeads, draw_shifted_samples, predict_distribution, stochastic_loss

__all__ = [
    "ArchPool", "Dataset", "DistillConfig", "DistillTrace", "Generator", "GeneratorSpec",
    "LowRankGaussian", "RunReport", "StochasticHeads", "cross_arch_report",
    "draw_shifted_samples", "gen_procedural", "load_dataset", "log_prob", "new_gaussian",
    "predict_distribution", "run_distillation", "sample", "save_dataset", "stochastic_loss",
]
