"""Paired training data: directory ingestion and procedural stand-in targets.

A GAN training pair is (semantic, real). Real crops are ingested from disk as
``<stem>_semantic.png`` + ``<stem>_real.png`` (+ optional ``<stem>_fg.png``).
When no real crops are available, :func:`stand_in_target` paints a
deterministic pseudo-photo from a semantic sample so that the full training
path can be exercised; it is a test fixture, not part of the method.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np
import torch
from PIL import Image

from .render import Corpus, FontCatalogue, RendererConfig, SemanticSample, synthesize_sample
from .render.morphology import dilate
from .render.synth import to_uint8
from .train import PairedDataset, TrainBatch, images_to_tensor


def stand_in_target(sample: SemanticSample) -> np.ndarray:
    """(H, W, 3) float32 in [0, 1]: coloured text over a smooth textured background."""
    rng = np.random.default_rng([sample.seed, 7])
    h, w = sample.glyph_mask.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    c0, c1 = rng.uniform(0.2, 0.8, size=(2, 3)).astype(np.float32)
    angle = rng.uniform(0, 2 * np.pi)
    t = (np.cos(angle) * xx / w + np.sin(angle) * yy / h + 1.0) / 2.0
    background = c0 + (c1 - c0) * t[..., None]
    noise = cv2.resize(rng.normal(0, 0.06, size=(h // 8, w // 8, 3)).astype(np.float32), (w, h))
    background = background + noise
    ink = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
    # Push the ink away from the local background so the text stays legible.
    ink = np.where(np.abs(ink - background.mean((0, 1))) < 0.35, 1.0 - ink, ink)
    alpha = sample.semantic[..., :1]
    return np.clip(background * (1 - alpha) + ink * alpha, 0.0, 1.0).astype(np.float32)


def _read_rgb(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def load_pair_dir(directory: str | Path, radius: int = 4) -> PairedDataset:
    """Load ``*_semantic.png`` / ``*_real.png`` pairs in lexicographic stem order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"training data directory {directory} does not exist")
    stems = sorted(p.name[: -len("_semantic.png")] for p in directory.glob("*_semantic.png"))
    semantic, real, fg = [], [], []
    for stem in stems:
        real_path = directory / f"{stem}_real.png"
        if not real_path.exists():
            continue
        sem = _read_rgb(directory / f"{stem}_semantic.png")
        semantic.append(sem)
        real.append(_read_rgb(real_path))
        fg_path = directory / f"{stem}_fg.png"
        if fg_path.exists():
            fg.append((np.asarray(Image.open(fg_path).convert("L")) > 127).astype(np.uint8))
        else:
            fg.append(dilate(sem.max(axis=2) > 127, radius))
    if not semantic:
        raise FileNotFoundError(f"no (semantic, real) pairs found in {directory}")
    return PairedDataset(np.stack(semantic), np.stack(real), np.stack(fg))


def synthesize_pairs(
    corpus: Corpus, fonts: FontCatalogue, config: RendererConfig, count: int, base_seed: int = 0
) -> PairedDataset:
    samples = [synthesize_sample(corpus, fonts, config, base_seed + i) for i in range(count)]
    return PairedDataset(
        np.stack([to_uint8(s.semantic) for s in samples]),
        np.stack([to_uint8(stand_in_target(s)) for s in samples]),
        np.stack([s.foreground_mask for s in samples]),
    )


class OnTheFlyPairs:
    """Endless synthetic pairs; epoch ``e`` holds seeds base + e*size ... base + (e+1)*size - 1."""

    def __init__(self, corpus: Corpus, fonts: FontCatalogue, config: RendererConfig, size: int, base_seed: int = 0):
        self.corpus, self.fonts, self.config = corpus, fonts, config
        self.size, self.base_seed = size, base_seed

    def num_batches(self, batch_size: int) -> int:
        return math.ceil(self.size / batch_size)

    def batches(self, epoch: int, batch_size: int, seed: int, start: int = 0) -> Iterator[TrainBatch]:
        first = self.base_seed + seed * 1_000_003 + epoch * self.size
        for b in range(start, self.num_batches(batch_size)):
            seeds = range(first + b * batch_size, first + min((b + 1) * batch_size, self.size))
            samples = [synthesize_sample(self.corpus, self.fonts, self.config, s) for s in seeds]
            yield TrainBatch(
                images_to_tensor(np.stack([to_uint8(s.semantic) for s in samples])),
                images_to_tensor(np.stack([to_uint8(stand_in_target(s)) for s in samples])),
                torch.from_numpy(np.stack([s.foreground_mask for s in samples])[:, None].astype(np.float32)),
            )
