"""Text corpus access and the sample acceptance filter."""

from __future__ import annotations

import string
import unicodedata
from functools import cached_property
from pathlib import Path

import numpy as np

MODES = ("word", "line", "paragraph")


class CorpusError(ValueError):
    """Raised for an empty corpus or a mode with no units."""


class Corpus:
    """A text source split into words, lines and paragraphs.

    Words are whitespace-separated tokens, lines are non-blank newline-separated
    lines and paragraphs are blocks separated by blank lines.
    """

    def __init__(self, text: str):
        self.text = text

    @classmethod
    def from_file(cls, path: str | Path) -> "Corpus":
        return cls(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_units(cls, units: list[str]) -> "Corpus":
        """Build a corpus whose lines are exactly ``units``."""
        return cls("\n".join(units))

    @cached_property
    def words(self) -> tuple[str, ...]:
        return tuple(self.text.split())

    @cached_property
    def lines(self) -> tuple[str, ...]:
        return tuple(ln.strip() for ln in self.text.splitlines() if ln.strip())

    @cached_property
    def paragraphs(self) -> tuple[str, ...]:
        blocks, current = [], []
        for ln in self.text.splitlines():
            if ln.strip():
                current.append(ln.strip())
            elif current:
                blocks.append("\n".join(current))
                current = []
        if current:
            blocks.append("\n".join(current))
        return tuple(blocks)

    def units(self, mode: str) -> tuple[str, ...]:
        if mode not in MODES:
            raise CorpusError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
        return getattr(self, mode + "s")


def sample_text(corpus: Corpus | list[str], mode: str, rng: np.random.Generator) -> str:
    """Draw one unit of the requested granularity uniformly at random."""
    if not isinstance(corpus, Corpus):
        corpus = Corpus.from_units(list(corpus))
    if not corpus.text.strip():
        raise CorpusError("corpus is empty")
    units = corpus.units(mode)
    if not units:
        raise CorpusError(f"corpus has no {mode} units")
    return units[int(rng.integers(len(units)))]


def is_punctuation_only(text: str) -> bool:
    return all(
        ch.isspace() or ch in string.punctuation or unicodedata.category(ch).startswith("P")
        for ch in text
    )


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Return (top, left, height, width) of the nonzero region, or None if empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)


def accept_sample(text: str, glyph_mask: np.ndarray) -> bool:
    """Curation filter: reject punctuation-only text and boxes taller than wide."""
    if is_punctuation_only(text):
        return False
    bbox = mask_bbox(glyph_mask)
    if bbox is None:
        return False
    _, _, h, w = bbox
    return h <= w
