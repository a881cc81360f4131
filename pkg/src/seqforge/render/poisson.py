"""Gradient-domain (Poisson) blending on the 5-point Laplacian.

Unknowns are the mask pixels that do not lie on the image border; border
pixels and everything outside the mask keep the destination value and act as
the Dirichlet boundary. Each interior unknown therefore has exactly four
neighbours and the system matrix is the SPD operator 4I - adjacency, solved
with conjugate gradients.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class PoissonConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"CG did not converge after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


def unknown_mask(mask: np.ndarray) -> np.ndarray:
    inner = np.asarray(mask).astype(bool).copy()
    inner[0, :] = inner[-1, :] = False
    inner[:, 0] = inner[:, -1] = False
    return inner


def laplacian_system(mask: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Return the sparse operator over the unknowns and their (row, col) coordinates."""
    inner = unknown_mask(mask)
    coords = np.argwhere(inner)
    index = -np.ones(inner.shape, dtype=np.int64)
    index[inner] = np.arange(len(coords))
    rows, cols = [np.arange(len(coords))], [np.arange(len(coords))]
    vals = [np.full(len(coords), 4.0)]
    for dy, dx in _OFFSETS:
        nbr = index[coords[:, 0] + dy, coords[:, 1] + dx]
        keep = nbr >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(nbr[keep])
        vals.append(-np.ones(keep.sum()))
    n = len(coords)
    a = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return a, coords


def conjugate_gradient(a, b: np.ndarray, tol: float, max_iter: int, x0: np.ndarray | None = None) -> np.ndarray:
    """Plain CG; stops once the infinity-norm residual is at most ``tol``."""
    x = np.zeros_like(b) if x0 is None else x0.astype(float).copy()
    r = b - a @ x
    if np.abs(r).max(initial=0.0) <= tol:
        return x
    p = r.copy()
    rr = r @ r
    for it in range(1, max_iter + 1):
        ap = a @ p
        alpha = rr / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.abs(r).max() <= tol:
            return x
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise PoissonConvergenceError(float(np.abs(b - a @ x).max()), max_iter)


def poisson_blend(
    source: np.ndarray,
    destination: np.ndarray,
    mask: np.ndarray,
    tol: float = 1e-5,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Blend ``source`` into ``destination`` over ``mask``.

    Inside the mask the result matches the Laplacian of the source (guidance
    field = source gradients) with the destination as boundary; elsewhere it is
    the destination unchanged. Arrays are (H, W) or (H, W, C) in [0, 1]; the
    result is clamped to [0, 1].
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(destination, dtype=np.float64)
    if src.shape != dst.shape or src.shape[:2] != np.shape(mask):
        raise ValueError(f"extent mismatch: source {src.shape}, destination {dst.shape}, mask {np.shape(mask)}")
    squeeze = src.ndim == 2
    if squeeze:
        src, dst = src[..., None], dst[..., None]

    out = dst.copy()
    a, coords = laplacian_system(mask)
    if len(coords):
        inner = unknown_mask(mask)
        ys, xs = coords[:, 0], coords[:, 1]
        for c in range(src.shape[2]):
            s, d = src[..., c], dst[..., c]
            b = 4.0 * s[ys, xs]
            for dy, dx in _OFFSETS:
                ny, nx = ys + dy, xs + dx
                b -= s[ny, nx]
                fixed = ~inner[ny, nx]
                b[fixed] += d[ny[fixed], nx[fixed]]
            out[ys, xs, c] = conjugate_gradient(a, b, tol, max_iter)
    np.clip(out, 0.0, 1.0, out=out)
    return out[..., 0] if squeeze else out
