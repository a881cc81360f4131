"""Random projective warps applied jointly to a glyph image and its mask."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import cv2
import numpy as np


class DegenerateTransformError(RuntimeError):
    pass


# Warps that shrink or grow the glyph box beyond these factors are treated as
# degenerate: on small glyph images the corner jitter alone can halve the area.
AREA_FACTOR_BOUNDS = (0.6, 1.6)


@dataclass(frozen=True)
class TransformRanges:
    rotation: float = 15.0  # degrees, symmetric
    shear: float = 0.3
    scale: tuple[float, float] = (0.8, 1.2)
    perspective: float = 6.0  # max corner jitter in pixels


@dataclass(frozen=True)
class TransformParams:
    rotation: float = 0.0
    shear: float = 0.0
    scale: float = 1.0
    # (dx, dy) offsets for the corners TL, TR, BR, BL
    perspective: tuple[tuple[float, float], ...] = field(default=((0.0, 0.0),) * 4)

    def is_identity(self) -> bool:
        return (
            self.rotation == 0.0
            and self.shear == 0.0
            and self.scale == 1.0
            and all(dx == 0.0 and dy == 0.0 for dx, dy in self.perspective)
        )

    def within(self, ranges: TransformRanges) -> bool:
        lo, hi = ranges.scale
        return (
            abs(self.rotation) <= ranges.rotation
            and abs(self.shear) <= ranges.shear
            and lo <= self.scale <= hi
            and all(abs(dx) <= ranges.perspective and abs(dy) <= ranges.perspective for dx, dy in self.perspective)
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["perspective"] = [list(p) for p in self.perspective]
        return d


def random_params(rng: np.random.Generator, ranges: TransformRanges = TransformRanges()) -> TransformParams:
    jitter = rng.uniform(-ranges.perspective, ranges.perspective, size=(4, 2))
    return TransformParams(
        rotation=float(rng.uniform(-ranges.rotation, ranges.rotation)),
        shear=float(rng.uniform(-ranges.shear, ranges.shear)),
        scale=float(rng.uniform(*ranges.scale)),
        perspective=tuple((float(dx), float(dy)) for dx, dy in jitter),
    )


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Solve the 8-unknown system mapping four points ``src`` onto ``dst``."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTransformError("corner configuration is singular") from exc
    return np.append(h, 1.0).reshape(3, 3)


def homography_for(params: TransformParams, height: int, width: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Return the full pixel-space homography and the padded output size (h, w)."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    theta = np.deg2rad(params.rotation)
    c, s = np.cos(theta), np.sin(theta)
    to_center = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    shear = np.array([[1, params.shear, 0], [0, 1, 0], [0, 0, 1.0]])
    scale = np.diag([params.scale, params.scale, 1.0])
    affine = back @ rot @ shear @ scale @ to_center

    corners = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], dtype=float)
    moved = (affine @ np.c_[corners, np.ones(4)].T).T[:, :2] + np.asarray(params.perspective, dtype=float)
    hom = _homography(corners, moved)

    # Every corner must stay in front of the projection plane and the quad
    # must keep its orientation, otherwise the warp folds over itself.
    w = (hom @ np.c_[corners, np.ones(4)].T)[2]
    if not np.all(w > 1e-6) or abs(np.linalg.det(hom)) < 1e-9:
        raise DegenerateTransformError("homography is not invertible over the image")
    edges = np.roll(moved, -1, axis=0) - moved
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        raise DegenerateTransformError("warped quad is not convex")
    x, y = moved[:, 0], moved[:, 1]
    factor = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / max((width - 1) * (height - 1), 1)
    if not AREA_FACTOR_BOUNDS[0] <= factor <= AREA_FACTOR_BOUNDS[1]:
        raise DegenerateTransformError(f"warp changes the glyph box area by a factor of {factor:.3f}")

    x0, y0 = np.floor(moved.min(axis=0))
    x1, y1 = np.ceil(moved.max(axis=0))
    shift = np.array([[1, 0, -x0], [0, 1, -y0], [0, 0, 1.0]])
    return shift @ hom, (int(y1 - y0) + 1, int(x1 - x0) + 1)


def apply_random_transform(
    image: np.ndarray, mask: np.ndarray, params: TransformParams
) -> tuple[np.ndarray, np.ndarray]:
    """Warp image and mask with the same homography.

    The output canvas is the bounding box of the warped corners, so no ink is
    clipped. Image warped bilinearly; mask warped bilinearly then re-binarized
    at 0.5.
    """
    if image.shape[:2] != mask.shape[:2]:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape[:2]} extents differ")
    if params.is_identity():
        return image.copy(), mask.copy()
    height, width = mask.shape[:2]
    hom, (out_h, out_w) = homography_for(params, height, width)
    flags = cv2.INTER_LINEAR
    warped = cv2.warpPerspective(
        image.astype(np.float32), hom, (out_w, out_h), flags=flags, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    )
    warped_mask = cv2.warpPerspective(
        mask.astype(np.float32), hom, (out_w, out_h), flags=flags, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    )
    return np.clip(warped, 0.0, 1.0), (warped_mask >= 0.5).astype(np.uint8)
