"""Font catalogue and text rasterization."""

from __future__ import annotations

import io
import os
import string
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

FONT_DIR_ENV = "SEQFORGE_FONT_DIR"
FONT_SUFFIXES = (".ttf", ".otf")
FALLBACK_ID = -1
# Black border kept around the ink so later warps never clip it.
RASTER_MARGIN = 2


class CatalogueError(RuntimeError):
    """A font could not be loaded or does not cover printable ASCII."""


@dataclass(frozen=True)
class FontEntry:
    id: int
    path: Path | None  # None selects Pillow's built-in scalable font
    name: str


FALLBACK_FONT = FontEntry(FALLBACK_ID, None, "builtin")


@lru_cache(maxsize=None)
def _codepoints(path: Path | None) -> frozenset[int]:
    if path is None:
        data = ImageFont.load_default(size=12).path
        source = io.BytesIO(data.getvalue())
    else:
        source = str(path)
    try:
        with TTFont(source, lazy=True) as tt:
            return frozenset(tt.getBestCmap() or {})
    except Exception as exc:  # fontTools raises a zoo of exception types
        raise CatalogueError(f"cannot read font {path}: {exc}") from exc


@lru_cache(maxsize=256)
def _pil_font(path: Path | None, size: int) -> ImageFont.FreeTypeFont:
    if path is None:
        return ImageFont.load_default(size=size)
    try:
        return ImageFont.truetype(str(path), size)
    except OSError as exc:
        raise CatalogueError(f"cannot load font {path}: {exc}") from exc


def covers(font: FontEntry, text: str) -> bool:
    cmap = _codepoints(font.path)
    return all(ch.isspace() or ord(ch) in cmap for ch in text)


class FontCatalogue:
    """Ordered font list; order is lexicographic by filename."""

    def __init__(self, entries: list[FontEntry]):
        if not entries:
            raise CatalogueError("font catalogue is empty")
        printable = string.printable.strip()
        for entry in entries:
            if not covers(entry, printable):
                raise CatalogueError(f"font {entry.name} does not cover printable ASCII")
        self.entries = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> FontEntry:
        return self.entries[idx]

    @classmethod
    def from_dir(cls, directory: str | Path, skip_incomplete: bool = True) -> "FontCatalogue":
        directory = Path(directory)
        if not directory.is_dir():
            raise CatalogueError(f"font directory {directory} does not exist")
        paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in FONT_SUFFIXES)
        printable = string.printable.strip()
        entries = []
        for path in paths:
            entry = FontEntry(len(entries), path, path.stem)
            if skip_incomplete and not covers(entry, printable):
                continue
            entries.append(entry)
        return cls(entries)

    @classmethod
    def builtin(cls) -> "FontCatalogue":
        return cls([FontEntry(0, None, "builtin")])

    @classmethod
    def default(cls, directory: str | Path | None = None) -> "FontCatalogue":
        """Catalogue from ``directory``, else $SEQFORGE_FONT_DIR, else the built-in font."""
        directory = directory or os.environ.get(FONT_DIR_ENV)
        if directory:
            return cls.from_dir(directory)
        return cls.builtin()

    def describe(self) -> list[dict]:
        return [{"id": e.id, "path": str(e.path) if e.path else None, "name": e.name} for e in self.entries]


class Raster(NamedTuple):
    image: np.ndarray  # (H, W) float32 in [0, 1], white ink on black
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    fallback: bool


def _render_line(text: str, font: ImageFont.FreeTypeFont) -> np.ndarray:
    left, top, right, bottom = font.getbbox(text)
    pad = 4
    w, h = right - left + 2 * pad, bottom - top + 2 * pad
    canvas = Image.new("L", (max(w, 1), max(h, 1)), 0)
    ImageDraw.Draw(canvas).text((pad - left, pad - top), text, fill=255, font=font)
    return np.asarray(canvas, dtype=np.float32) / 255.0


def _ink_crop(image: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(image.max(axis=1) > 0)
    cols = np.flatnonzero(image.max(axis=0) > 0)
    if rows.size == 0:
        return image[:0, :0]
    return image[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def rasterize_text(text: str, font: FontEntry, target_height: int) -> Raster:
    """Render ``text`` white-on-black so that its ink height is close to ``target_height``.

    Characters missing from ``font`` switch the whole string to the built-in
    fallback font; ``Raster.fallback`` records that substitution. The glyph mask
    is the anti-aliased ink thresholded at 0.5.
    """
    if not text.strip():
        raise ValueError("cannot rasterize blank text")
    fallback = not covers(font, text)
    path = None if fallback else font.path

    # Two passes: measure ink height at a nominal size, then rescale the size.
    probe = _ink_crop(_render_line(text, _pil_font(path, target_height)))
    size = target_height
    if probe.shape[0] > 0:
        size = max(1, round(target_height * target_height / probe.shape[0]))
    ink = _ink_crop(_render_line(text, _pil_font(path, size)))
    if ink.size == 0:
        raise ValueError(f"text {text!r} produced no ink")
    image = np.pad(ink, RASTER_MARGIN).astype(np.float32)
    mask = (image > 0.5).astype(np.uint8)
    return Raster(image, mask, fallback)
