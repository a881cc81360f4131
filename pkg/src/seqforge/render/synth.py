"""Semantic sample synthesis: text -> raster -> warp -> letterbox -> blend -> masks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .corpus import Corpus, CorpusError, accept_sample, sample_text
from .fonts import FALLBACK_ID, FontCatalogue, rasterize_text
from .morphology import default_radius, dilate
from .poisson import poisson_blend
from .transform import DegenerateTransformError, TransformParams, TransformRanges, apply_random_transform, random_params

MAX_REJECTIONS = 100
MAX_TRANSFORM_RETRIES = 5


@dataclass(frozen=True)
class RendererConfig:
    image_width: int = 128
    image_height: int = 64
    mode: str = "word"
    text_height: int = 64
    rotation: float = 15.0
    shear: float = 0.3
    scale: tuple[float, float] = (0.8, 1.2)
    perspective: float = 6.0
    dilation_radius: int | None = None  # None -> max(2, image_height // 16)
    dilation_iterations: int = 1
    poisson_tol: float = 1e-5
    poisson_max_iter: int = 10_000
    corpus: str | None = None
    font_dir: str | None = None

    @property
    def ranges(self) -> TransformRanges:
        return TransformRanges(self.rotation, self.shear, tuple(self.scale), self.perspective)

    @property
    def radius(self) -> int:
        if self.dilation_radius is None:
            return default_radius(self.image_height)
        return self.dilation_radius

    @property
    def margin(self) -> int:
        # Keeps the dilated foreground clear of the canvas border, where the
        # Poisson solver pins pixels to the destination.
        return self.radius * self.dilation_iterations + 2


@dataclass
class SemanticSample:
    semantic: np.ndarray  # (H, W, 3) float32 in [0, 1]
    text: str
    glyph_mask: np.ndarray  # (H, W) uint8
    foreground_mask: np.ndarray  # (H, W) uint8
    font_id: int
    transform: TransformParams
    seed: int
    fallback_font: bool = False
    attempts: int = field(default=1)

    def record(self) -> dict:
        return {
            "text": self.text,
            "font_id": self.font_id,
            "seed": self.seed,
            "transform": self.transform.to_dict(),
            "fallback_font": self.fallback_font,
            "attempts": self.attempts,
        }


def letterbox(image: np.ndarray, mask: np.ndarray, height: int, width: int, margin: int):
    """Fit image (bilinear) and mask (nearest) into a black ``height x width`` canvas."""
    h, w = mask.shape
    avail_h, avail_w = height - 2 * margin, width - 2 * margin
    scale = min(avail_h / h, avail_w / w)
    new_h = min(avail_h, max(1, round(h * scale)))
    new_w = min(avail_w, max(1, round(w * scale)))
    img = cv2.resize(image.astype(np.float32), (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    msk = cv2.resize(mask.astype(np.uint8), (new_w, new_h), interpolation=cv2.INTER_NEAREST)
    top, left = (height - new_h) // 2, (width - new_w) // 2
    canvas = np.zeros((height, width), dtype=np.float32)
    canvas_mask = np.zeros((height, width), dtype=np.uint8)
    canvas[top:top + new_h, left:left + new_w] = np.clip(img, 0.0, 1.0)
    canvas_mask[top:top + new_h, left:left + new_w] = msk
    return canvas, canvas_mask


def _first_line(text: str) -> str:
    # Paragraph units render at most three lines and are then cropped to the
    # first line's extent; the crop contains exactly the first line's ink, so
    # only that line is rasterized and it becomes the label.
    return text.split("\n", 1)[0].strip()


def synthesize_sample(
    corpus: Corpus,
    fonts: FontCatalogue,
    config: RendererConfig,
    seed: int,
) -> SemanticSample:
    """Produce one semantic sample, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    for attempt in range(1, MAX_REJECTIONS + 1):
        text = sample_text(corpus, config.mode, rng)
        if config.mode == "paragraph":
            text = _first_line(text)
        font = fonts[int(rng.integers(len(fonts)))]
        if not text.strip():
            continue
        raster = rasterize_text(text, font, config.text_height)
        if accept_sample(text, raster.mask):
            break
    else:
        raise CorpusError(f"{MAX_REJECTIONS} consecutive samples rejected by the filter")

    for _ in range(MAX_TRANSFORM_RETRIES + 1):
        params = random_params(rng, config.ranges)
        try:
            image, mask = apply_random_transform(raster.image, raster.mask, params)
            break
        except DegenerateTransformError:
            continue
    else:
        raise DegenerateTransformError(f"no valid transform after {MAX_TRANSFORM_RETRIES} retries")

    image, glyph = letterbox(image, mask, config.image_height, config.image_width, config.margin)
    foreground = dilate(glyph, config.radius, config.dilation_iterations)
    source = np.repeat(image[..., None], 3, axis=2)
    semantic = poisson_blend(
        source, np.zeros_like(source), foreground, tol=config.poisson_tol, max_iter=config.poisson_max_iter
    ).astype(np.float32)
    return SemanticSample(
        semantic=semantic,
        text=text,
        glyph_mask=glyph,
        foreground_mask=foreground,
        font_id=FALLBACK_ID if raster.fallback else font.id,
        transform=params,
        seed=seed,
        fallback_font=raster.fallback,
        attempts=attempt,
    )


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit with round-half-up."""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_sample(sample: SemanticSample, out_dir: Path, stem: str) -> dict:
    """Write semantic PNG, 1-bit glyph/foreground PNGs, then the JSON record (last)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(sample.semantic), "RGB").save(out_dir / f"{stem}_semantic.png")
    Image.fromarray(sample.glyph_mask.astype(bool)).save(out_dir / f"{stem}_glyph.png")
    Image.fromarray(sample.foreground_mask.astype(bool)).save(out_dir / f"{stem}_fg.png")
    record = {"stem": stem, **sample.record()}
    tmp = out_dir / f"{stem}.json.tmp"
    tmp.write_text(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(out_dir / f"{stem}.json")
    return record
