"""Grayscale contrast enhancement: global equalization and CLAHE."""

from __future__ import annotations

import numpy as np

from .errors import GridLargerThanImage


def _as_frame(frame) -> np.ndarray:
    f = np.asarray(frame)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale frame, got shape {f.shape}")
    if f.dtype != np.uint8:
        if f.size and (f.min() < 0 or f.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        f = f.astype(np.uint8)
    return f


def equalization_lut(hist: np.ndarray) -> np.ndarray:
    """Map ``v -> round((cdf(v) - cdf_min) / (N - cdf_min) * 255)``.

    ``cdf_min`` is the CDF at the lowest occupied bin. A histogram with a
    single occupied bin yields the identity map.
    """
    hist = np.asarray(hist, dtype=np.int64)
    cdf = np.cumsum(hist)
    total = int(cdf[-1])
    occupied = np.flatnonzero(hist)
    if occupied.size <= 1:
        return np.arange(256, dtype=np.uint8)
    cdf_min = int(cdf[occupied[0]])
    lut = np.floor((cdf - cdf_min) * 255.0 / (total - cdf_min) + 0.5)
    return np.clip(lut, 0, 255).astype(np.uint8)


def hist_equalize(frame) -> np.ndarray:
    f = _as_frame(frame)
    hist = np.bincount(f.ravel(), minlength=256)
    return equalization_lut(hist)[f]


def clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    """Clip bins at ``limit`` and spread the excess: one uniform pass, then
    the remainder one count per bin starting from bin 0."""
    h = np.asarray(hist, dtype=np.int64).copy()
    excess = int(np.clip(h - limit, 0, None).sum())
    if excess == 0:
        return h
    h = np.minimum(h, limit)
    h += excess // 256
    h[: excess % 256] += 1
    return h


def _tile_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    size = n // parts
    bounds = [(k * size, (k + 1) * size) for k in range(parts)]
    bounds[-1] = (bounds[-1][0], n)
    return bounds


def _axis_weights(n: int, bounds):
    """For each coordinate: lower tile, upper tile and the weight of the upper one."""
    centers = np.array([(a + b - 1) / 2.0 for a, b in bounds])
    pos = np.arange(n, dtype=np.float64)
    hi = np.searchsorted(centers, pos, side="right")
    lo = np.clip(hi - 1, 0, len(centers) - 1)
    hi = np.clip(hi, 0, len(centers) - 1)
    span = centers[hi] - centers[lo]
    wt = np.where(span > 0, (pos - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, np.clip(wt, 0.0, 1.0)


def clahe(frame, clip_limit: float = 2.0, grid: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    The frame is cut into ``grid`` tiles (the last row/column of tiles take
    any remainder). Each tile's histogram is clipped at
    ``clip_limit * tile_pixels / 256`` before building its equalization map,
    and each pixel blends the maps of its four nearest tile centres
    bilinearly; pixels beyond the outer centres use the nearest tiles.
    """
    f = _as_frame(frame)
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be >= 1")
    if not clip_limit > 0:
        raise ValueError("clip_limit must be positive")
    H, W = f.shape
    if rows > H or cols > W:
        raise GridLargerThanImage(f"grid {grid} larger than image {f.shape}")

    rb = _tile_bounds(H, rows)
    cb = _tile_bounds(W, cols)
    luts = np.empty((rows, cols, 256), dtype=np.float64)
    for i, (y0, y1) in enumerate(rb):
        for j, (x0, x1) in enumerate(cb):
            tile = f[y0:y1, x0:x1]
            hist = np.bincount(tile.ravel(), minlength=256)
            if np.count_nonzero(hist) > 1:
                limit = max(1, int(clip_limit * tile.size / 256))
                hist = clip_histogram(hist, limit)
                luts[i, j] = equalization_lut(hist)
            else:
                luts[i, j] = np.arange(256)

    ylo, yhi, wy = _axis_weights(H, rb)
    xlo, xhi, wx = _axis_weights(W, cb)
    Y = np.arange(H)[:, None]
    X = np.arange(W)[None, :]
    v = f
    a = luts[ylo[Y], xlo[X], v]
    b = luts[ylo[Y], xhi[X], v]
    c = luts[yhi[Y], xlo[X], v]
    d = luts[yhi[Y], xhi[X], v]
    wy_ = wy[:, None]
    wx_ = wx[None, :]
    top = a + wx_ * (b - a)
    bot = c + wx_ * (d - c)
    out = top + wy_ * (bot - top)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
