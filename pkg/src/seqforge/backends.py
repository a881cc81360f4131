"""Feature/classifier backends for the generation metrics.

A backend maps a batch of images (H, W[, C] arrays in [0, 1]) to embeddings
and to class probabilities. Contract: fixed output dimensions, one row per
image in input order, and results independent of how images are batched.

``tiny-convnet`` is a fixed-seed random convnet: deterministic and
self-contained, useful for relative comparisons and tests. Absolute numbers
comparable with published Inception scores and FIDs need the pretrained
Inception network, available as ``inception-v3`` when the weights file is
supplied through ``$SEQFORGE_INCEPTION_WEIGHTS``.
"""

from __future__ import annotations

import os
from typing import Callable, Protocol

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

INCEPTION_WEIGHTS_ENV = "SEQFORGE_INCEPTION_WEIGHTS"


class Backend(Protocol):
    id: str
    feature_dim: int
    num_classes: int

    def features(self, images: list[np.ndarray]) -> np.ndarray: ...

    def probabilities(self, images: list[np.ndarray]) -> np.ndarray: ...


class BackendError(KeyError):
    pass


_REGISTRY: dict[str, Callable[[], Backend]] = {}
_CACHE: dict[str, Backend] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _REGISTRY[name] = factory
    _CACHE.pop(name, None)


def available_backends() -> list[str]:
    return sorted(_REGISTRY)


def get_backend(backend: str | Backend) -> Backend:
    if not isinstance(backend, str):
        return backend
    if backend not in _REGISTRY:
        raise BackendError(f"unknown backend {backend!r}; registered: {available_backends()}")
    if backend not in _CACHE:
        _CACHE[backend] = _REGISTRY[backend]()
    return _CACHE[backend]


def _to_nchw(images: list[np.ndarray], size: tuple[int, int], dtype) -> torch.Tensor:
    out = []
    for img in images:
        a = np.asarray(img, dtype=np.float64)
        if a.ndim == 2:
            a = a[..., None]
        if a.shape[2] == 1:
            a = np.repeat(a, 3, axis=2)
        t = torch.from_numpy(np.ascontiguousarray(a[..., :3].transpose(2, 0, 1))).to(dtype)[None]
        if tuple(t.shape[2:]) != size:
            t = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
        out.append(t)
    return torch.cat(out)


class TinyConvNet:
    """Random fixed-seed convnet; float64 so that batching never changes results."""

    def __init__(self, seed: int = 1234, feature_dim: int = 64, num_classes: int = 10, size=(64, 128)):
        self.id = f"tiny-convnet:seed={seed}:d={feature_dim}:k={num_classes}"
        self.feature_dim, self.num_classes, self.size = feature_dim, num_classes, tuple(size)
        gen = torch.Generator().manual_seed(seed)
        widths = (3, 16, 32, feature_dim)
        self.convs = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            w = torch.randn((cout, cin, 3, 3), generator=gen, dtype=torch.float64) * (2.0 / (cin * 9)) ** 0.5
            self.convs.append(w)
        self.head = torch.randn((num_classes, feature_dim), generator=gen, dtype=torch.float64)
        self.head_scale = 4.0 / feature_dim ** 0.5

    def features(self, images):
        x = _to_nchw(images, self.size, torch.float64) * 2.0 - 1.0
        with torch.no_grad():
            for w in self.convs:
                x = F.relu(F.conv2d(x, w, stride=2, padding=1))
            return x.mean(dim=(2, 3)).numpy()

    def probabilities(self, images):
        f = torch.from_numpy(self.features(images))
        f = (f - f.mean(dim=1, keepdim=True)) / (f.std(dim=1, keepdim=True) + 1e-12)
        return torch.softmax(self.head_scale * f @ self.head.T, dim=1).numpy()


class InceptionV3:
    """torchvision Inception-v3 with user-supplied weights (pool3 features, 1008/1000-way softmax)."""

    def __init__(self, weights_path: str | None = None):
        from torchvision.models import inception_v3

        net = inception_v3(weights=None, aux_logits=True, init_weights=False)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu")
            net.load_state_dict(state)
            self.id = f"inception-v3:{os.path.basename(weights_path)}"
        else:
            self.id = "inception-v3:unweighted"
        net.eval()
        self.net = net
        self.fc = net.fc
        net.fc = nn.Identity()
        self.feature_dim, self.num_classes = 2048, self.fc.out_features

    def _pool(self, images):
        x = _to_nchw(images, (299, 299), torch.float32) * 2.0 - 1.0
        with torch.no_grad():
            return self.net(x)

    def features(self, images):
        return self._pool(images).double().numpy()

    def probabilities(self, images):
        with torch.no_grad():
            return torch.softmax(self.fc(self._pool(images)).double(), dim=1).numpy()


def _inception_factory() -> Backend:
    path = os.environ.get(INCEPTION_WEIGHTS_ENV)
    if not path:
        raise BackendError(f"inception-v3 needs a weights file via ${INCEPTION_WEIGHTS_ENV}")
    return InceptionV3(path)


register_backend("tiny-convnet", TinyConvNet)
register_backend("inception-v3", _inception_factory)
