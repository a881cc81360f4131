from .corpus import Corpus, CorpusError, accept_sample, sample_text
from .fonts import FALLBACK_FONT, CatalogueError, FontCatalogue, FontEntry, rasterize_text
from .morphology import dilate
from .poisson import PoissonConvergenceError, poisson_blend
from .synth import RendererConfig, SemanticSample, save_sample, synthesize_sample
from .transform import DegenerateTransformError, TransformParams, TransformRanges, apply_random_transform, random_params

__all__ = [
    "Corpus",
    "CorpusError",
    "accept_sample",
    "sample_text",
    "FALLBACK_FONT",
    "CatalogueError",
    "FontCatalogue",
    "FontEntry",
    "rasterize_text",
    "dilate",
    "PoissonConvergenceError",
    "poisson_blend",
    "RendererConfig",
    "SemanticSample",
    "save_sample",
    "synthesize_sample",
    "DegenerateTransformError",
    "TransformParams",
    "TransformRanges",
    "apply_random_transform",
    "random_params",
]
