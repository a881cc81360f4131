from __future__ import annotations

import numpy as np
from scipy import ndimage


def disc(radius: int) -> np.ndarray:
    """Boolean disc structuring element: offsets with dy^2 + dx^2 <= radius^2."""
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy * yy + xx * xx) <= r * r


def dilate(mask: np.ndarray, radius: int, iterations: int = 1) -> np.ndarray:
    """Dilate a binary mask with a disc of ``radius``, ``iterations`` times."""
    if radius < 0 or iterations < 0:
        raise ValueError("radius and iterations must be non-negative")
    out = np.asarray(mask).astype(bool)
    if radius == 0 or iterations == 0 or not out.any():
        return out.astype(np.uint8)
    # scipy treats iterations < 1 as "until stable", so zero is handled above.
    out = ndimage.binary_dilation(out, structure=disc(radius), iterations=iterations)
    return out.astype(np.uint8)


def default_radius(image_height: int) -> int:
    return max(2, image_height // 16)
