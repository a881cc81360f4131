"""Inception score and Frechet distance over pluggable feature backends."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .backends import Backend, get_backend

PSD_TOL = 1e-8
FID_CLAMP = 1e-6


class MetricError(ValueError):
    pass


def check_prob_matrix(probs: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] == 0:
        raise MetricError(f"expected a non-empty N x K matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise MetricError("probabilities must be finite and non-negative")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > tol):
        raise MetricError("every row must sum to 1")
    return p


def inception_score(probs: np.ndarray, n_splits: int = 10) -> tuple[float, float]:
    """Mean and population std of exp(E_x KL(p(y|x) || p(y))) over contiguous splits."""
    p = check_prob_matrix(probs)
    if not 1 <= n_splits <= p.shape[0]:
        raise MetricError(f"n_splits must be in [1, {p.shape[0]}], got {n_splits}")
    scores = []
    for part in np.array_split(p, n_splits):
        marginal = part.mean(axis=0, keepdims=True)
        safe = np.where(part > 0, part, 1.0)
        kl = np.where(part > 0, part * (np.log(safe) - np.log(np.where(part > 0, marginal, 1.0))), 0.0)
        scores.append(np.exp(kl.sum(axis=1).mean()))
    scores = np.asarray(scores)
    return float(scores.mean()), float(scores.std())


@dataclass
class GaussianStats:
    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise MetricError(f"features must be N x d, got shape {x.shape}")
    if x.shape[0] < 2:
        raise MetricError("at least two feature rows are needed for a covariance")
    if not np.all(np.isfinite(x)):
        raise MetricError("features contain non-finite values")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianStats(mu, (cov + cov.T) / 2.0)


def _clamped_eigh(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    tol = PSD_TOL * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -tol:
        raise MetricError(f"{what} is not positive semidefinite (eigenvalue {vals.min():.3e})")
    return np.clip(vals, 0.0, None), vecs


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = _clamped_eigh(m, "covariance")
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of the square root uses the symmetric similar matrix
    S_a^(1/2) S_b S_a^(1/2), whose eigenvalues equal those of S_a S_b.
    """
    if a.dim != b.dim:
        raise MetricError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = psd_sqrt(a.cov)
    _clamped_eigh(b.cov, "covariance")
    vals, _ = _clamped_eigh(root_a @ b.cov @ root_a, "covariance product")
    diff = a.mean - b.mean
    fid = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(vals).sum())
    if fid < 0:
        if fid < -FID_CLAMP:
            raise MetricError(f"Frechet distance came out negative ({fid:.3e})")
        fid = 0.0
    return fid


def _batches(images, batch_size: int) -> Iterator[np.ndarray]:
    batch = []
    for img in images:
        batch.append(img)
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


def _check_images(batch) -> None:
    for img in batch:
        a = np.asarray(img)
        if a.ndim not in (2, 3) or a.size == 0 or not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 1:
            raise MetricError("images must be non-empty arrays with values in [0, 1]")


def extract_features(images, backend: str | Backend = "tiny-convnet", batch_size: int = 32) -> np.ndarray:
    """Row-per-image embeddings; ``images`` is any iterable of (H, W[, C]) arrays in [0, 1]."""
    net = get_backend(backend)
    rows = []
    for batch in _batches(images, batch_size):
        _check_images(batch)
        rows.append(net.features(batch))
    return np.concatenate(rows) if rows else np.zeros((0, net.feature_dim))


def classify(images, backend: str | Backend = "tiny-convnet", batch_size: int = 32) -> np.ndarray:
    net = get_backend(backend)
    rows = []
    for batch in _batches(images, batch_size):
        _check_images(batch)
        rows.append(net.probabilities(batch))
    return np.concatenate(rows) if rows else np.zeros((0, net.num_classes))


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"image directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no PNG images in {directory}")
    return files


def read_images(paths: list[Path]) -> Iterator[np.ndarray]:
    for path in paths:
        with Image.open(path) as im:
            yield np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


@dataclass
class MetricReport:
    inception_mean: float
    inception_std: float
    fid: float
    extractor_id: str
    generated_count: int
    reference_count: int
    n_splits: int
    generated_dir: str = ""
    reference_dir: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def evaluate_dirs(
    generated_dir: str | Path,
    reference_dir: str | Path,
    backend: str | Backend = "tiny-convnet",
    n_splits: int = 10,
    batch_size: int = 32,
) -> MetricReport:
    """IS of the generated set and FID between generated and reference sets."""
    net = get_backend(backend)
    gen_files = list_images(generated_dir)
    ref_files = list_images(reference_dir)
    # Small directories cannot fill the default split count.
    splits = min(n_splits, len(gen_files))
    probs = classify(read_images(gen_files), net, batch_size)
    is_mean, is_std = inception_score(probs, splits)
    gen_stats = fit_gaussian(extract_features(read_images(gen_files), net, batch_size))
    ref_stats = fit_gaussian(extract_features(read_images(ref_files), net, batch_size))
    return MetricReport(
        inception_mean=is_mean,
        inception_std=is_std,
        fid=frechet_distance(gen_stats, ref_stats),
        extractor_id=net.id,
        generated_count=len(gen_files),
        reference_count=len(ref_files),
        n_splits=splits,
        generated_dir=str(generated_dir),
        reference_dir=str(reference_dir),
    )
