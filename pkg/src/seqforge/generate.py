"""Streaming dataset generation: semantic sample -> cascade (eval) -> PNG + manifest."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from PIL import Image

from .models import Cascade, cascade_forward
from .render import Corpus, FontCatalogue, RendererConfig, synthesize_sample
from .render.synth import save_sample, to_uint8

LUMA = (0.299, 0.587, 0.114)
MANIFEST = "manifest.jsonl"


@dataclass
class ManifestRecord:
    image_path: str
    text: str
    width: int
    height: int
    grayscale: bool
    seed: int
    font_id: int


def network_to_uint8(y: torch.Tensor, grayscale: bool = False) -> np.ndarray:
    """(N, 3, H, W) in [-1, 1] -> (N, H, W, 3) or (N, H, W) uint8, rounding half up."""
    v = (y.detach().to(torch.float64).clamp(-1.0, 1.0).numpy() + 1.0) * 127.5
    v = v.transpose(0, 2, 3, 1)
    if grayscale:
        v = v @ np.asarray(LUMA)
    return np.floor(v + 0.5).astype(np.uint8)


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ManifestRecord(**json.loads(line)) for line in fh if line.strip()]


def _chunks(start: int, stop: int, size: int) -> Iterator[range]:
    for lo in range(start, stop, size):
        yield range(lo, min(lo + size, stop))


def generate_dataset(
    cascade: Cascade,
    corpus: Corpus,
    fonts: FontCatalogue,
    renderer: RendererConfig,
    count: int,
    out_dir: str | Path,
    base_seed: int = 0,
    batch_size: int = 16,
    grayscale: bool = False,
) -> Path:
    """Write ``count`` generated images and a JSON-lines manifest; returns the manifest path.

    Sample ``i`` is synthesized from seed ``base_seed + i``. Only one batch is
    held in memory at a time.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST
    cascade.eval()
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for idx in _chunks(0, count, batch_size):
            samples = [synthesize_sample(corpus, fonts, renderer, base_seed + i) for i in idx]
            x = torch.from_numpy(np.stack([s.semantic for s in samples]).transpose(0, 3, 1, 2).copy())
            _, y2 = cascade_forward(cascade, x * 2.0 - 1.0, "eval")
            pixels = network_to_uint8(y2, grayscale)
            for i, sample, img in zip(idx, samples, pixels):
                rel = f"images/{i:08d}.png"
                Image.fromarray(img, "L" if grayscale else "RGB").save(out / rel)
                rec = ManifestRecord(rel, sample.text, img.shape[1], img.shape[0], grayscale, sample.seed, sample.font_id)
                fh.write(json.dumps(asdict(rec), sort_keys=True, ensure_ascii=False) + "\n")
            fh.flush()
    return manifest_path


def synthesize_to_dir(
    corpus: Corpus,
    fonts: FontCatalogue,
    renderer: RendererConfig,
    count: int,
    out_dir: str | Path,
    base_seed: int = 0,
    paired: bool = False,
) -> int:
    """Write ``count`` semantic samples; already-complete samples are skipped (resume).

    Returns the number of samples written by this call.
    """
    from .pairs import stand_in_target

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for i in range(count):
        stem = f"{i:08d}"
        if (out / f"{stem}.json").exists():
            continue
        try:
            sample = synthesize_sample(corpus, fonts, renderer, base_seed + i)
        except Exception as exc:
            raise RuntimeError(f"sample {i} (seed {base_seed + i}) failed: {exc}") from exc
        if paired:
            Image.fromarray(to_uint8(stand_in_target(sample)), "RGB").save(out / f"{stem}_real.png")
        save_sample(sample, out, stem)
        written += 1
    return written
