"""Synthetic text-sequence images: semantic rendering, a two-stage cGAN, and generation metrics."""

from .models import Cascade, CascadePlan, cascade_forward
from .render import Corpus, FontCatalogue, RendererConfig, SemanticSample, synthesize_sample
from .train import TrainConfig, Trainer, train

__version__ = "0.1.0"

__all__ = [
    "Cascade",
    "CascadePlan",
    "cascade_forward",
    "Corpus",
    "FontCatalogue",
    "RendererConfig",
    "SemanticSample",
    "synthesize_sample",
    "TrainConfig",
    "Trainer",
    "train",
]
