"""Event streams: fixed-count windows, count-based GMM denoising, voxel grids.

A stream is a numpy structured array with fields ``x``, ``y`` (pixel
column/row), ``t`` (microseconds, non-decreasing) and ``p`` (polarity,
-1 or +1); see :data:`EVENT_DTYPE`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryWindow, DegenerateInput, EmptyStream, EmptyTimeRange

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<i8"), ("p", "i1")])

DEFAULT_WINDOW = 30_000
DEFAULT_TAU = 2.5
DEFAULT_BINS = 10
VARIANCE_FLOOR = 1e-4


def make_events(x, y, t, p) -> np.ndarray:
    x = np.asarray(x)
    ev = np.empty(x.shape[0], dtype=EVENT_DTYPE)
    ev["x"], ev["y"], ev["t"], ev["p"] = x, y, t, p
    return ev


def is_sorted(events: np.ndarray) -> bool:
    return bool(np.all(np.diff(events["t"]) >= 0))


@dataclass(frozen=True)
class EventWindow:
    events: np.ndarray
    anchor_index: int  # position of the anchor inside ``events``
    start: int  # offset of ``events`` in the source stream
    requested: int
    clipped: bool

    @property
    def size(self) -> int:
        return len(self.events)


def window_at(stream: np.ndarray, frame_time: int, size: int = DEFAULT_WINDOW) -> EventWindow:
    """Slice ``size`` events centred on the first event at or after ``frame_time``.

    ``size // 2`` events precede the anchor and the rest start at it. Near
    the stream ends the window is cut short rather than shifted.
    """
    n = len(stream)
    if n == 0:
        raise EmptyStream("cannot window an empty event stream")
    if size < 1:
        raise ValueError("window size must be >= 1")
    anchor = int(np.searchsorted(stream["t"], frame_time, side="left"))
    anchor = min(anchor, n - 1)
    lo = anchor - size // 2
    hi = anchor + (size - size // 2)
    clipped = lo < 0 or hi > n
    lo, hi = max(lo, 0), min(hi, n)
    if clipped:
        warnings.warn(
            f"window at t={frame_time} clipped to {hi - lo} of {size} events",
            BoundaryWindow,
            stacklevel=2,
        )
    return EventWindow(stream[lo:hi], anchor - lo, lo, size, clipped)


def pixel_counts(events: np.ndarray, shape=None):
    """Event count per occupied pixel.

    Returns ``(pixel_ids, counts, inverse)`` where ``inverse`` maps every
    event to its row in ``pixel_ids``; pixel ids are ``y * W + x``.
    """
    w = int(events["x"].max()) + 1 if shape is None else shape[1]
    ids = events["y"].astype(np.int64) * w + events["x"].astype(np.int64)
    pixel_ids, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
    return pixel_ids, counts, inverse


@dataclass
class GmmFit:
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    w1: float
    w2: float
    responsibilities: np.ndarray  # (n_pixels, 2); column 0 is the low cluster
    counts: np.ndarray  # per-pixel counts the fit was made on
    log_likelihoods: list[float] = field(default_factory=list)
    degenerate: bool = False

    @property
    def delta_mu(self) -> float:
        return abs(self.mu1 - self.mu2)

    def low_cluster(self) -> np.ndarray:
        """Hard assignment per pixel; ties favour the low cluster."""
        return self.responsibilities[:, 0] >= self.responsibilities[:, 1]


def _log_gauss(x, mu, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mu) ** 2 / var)


def _kmeanspp_init(x: np.ndarray, rng: np.random.Generator):
    first = x[rng.integers(len(x))]
    d2 = (x - first) ** 2
    if d2.sum() == 0:
        return first, first
    second = x[rng.choice(len(x), p=d2 / d2.sum())]
    return first, second


def fit_gmm_1d(
    x,
    seed: int = 42,
    max_iter: int = 200,
    tol: float = 1e-6,
    var_floor: float = VARIANCE_FLOOR,
) -> GmmFit:
    """Two-component 1-D Gaussian mixture by EM, components sorted by mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptyStream("no samples to fit")
    if np.unique(x).size < 2:
        warnings.warn("fewer than two distinct values; single-cluster fit", DegenerateInput, stacklevel=2)
        m = float(x[0])
        resp = np.tile([1.0, 0.0], (x.size, 1))
        return GmmFit(m, m, math.sqrt(var_floor), math.sqrt(var_floor), 1.0, 0.0, resp, x, [], True)

    rng = np.random.default_rng(seed)
    c1, c2 = _kmeanspp_init(x, rng)
    mu = np.array(sorted((c1, c2)), dtype=np.float64)
    # hard k-means-style split for the starting variances and weights
    lab = np.abs(x - mu[1]) < np.abs(x - mu[0])
    var = np.array([
        max(x[~lab].var() if (~lab).any() else x.var(), var_floor),
        max(x[lab].var() if lab.any() else x.var(), var_floor),
    ])
    w = np.array([max((~lab).mean(), 1e-3), max(lab.mean(), 1e-3)])
    w /= w.sum()

    lls: list[float] = []
    prev = -np.inf
    for _ in range(max_iter):
        # E step
        logp = np.log(w)[None, :] + _log_gauss(x[:, None], mu[None, :], var[None, :])
        mx = logp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
        ll = float(lse.sum())
        lls.append(ll)
        resp = np.exp(logp - lse[:, None])
        if ll - prev < tol:
            break
        prev = ll
        # M step; the variance floor is the constrained maximiser, so the
        # likelihood stays monotone
        nk = resp.sum(axis=0) + 1e-300
        w = nk / nk.sum()
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk, var_floor)
    else:
        logp = np.log(w)[None, :] + _log_gauss(x[:, None], mu[None, :], var[None, :])
        mx = logp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
        lls.append(float(lse.sum()))
        resp = np.exp(logp - lse[:, None])

    order = np.argsort(mu, kind="stable")
    mu, var, w, resp = mu[order], var[order], w[order], resp[:, order]
    return GmmFit(
        float(mu[0]), float(mu[1]),
        float(np.sqrt(var[0])), float(np.sqrt(var[1])),
        float(w[0]), float(1.0 - w[0]),
        resp, x, lls,
    )


def fit_count_gmm(window: EventWindow, seed: int = 42) -> GmmFit:
    """Fit the mixture to per-pixel event counts (occupied pixels only)."""
    if window.size == 0:
        raise EmptyStream("empty window")
    _, counts, _ = pixel_counts(window.events, shape=(0, 1 << 16))
    return fit_gmm_1d(counts, seed=seed)


def select_events(window: EventWindow, fit: GmmFit, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Drop high-frequency pixels' events when the cluster means are ``tau`` apart."""
    if fit.delta_mu < tau:
        return window.events
    _, counts, inverse = pixel_counts(window.events, shape=(0, 1 << 16))
    if counts.shape[0] != fit.responsibilities.shape[0]:
        raise ValueError("fit does not belong to this window")
    keep_pixel = fit.low_cluster()
    return window.events[keep_pixel[inverse]]


def denoise_indices(stream: np.ndarray, frame_times, size: int = DEFAULT_WINDOW,
                    tau: float = DEFAULT_TAU, seed: int = 42) -> np.ndarray:
    """Stream indices kept by windowed denoising around every frame time."""
    keep = []
    for ft in frame_times:
        win = window_at(stream, ft, size)
        fit = fit_count_gmm(win, seed=seed)
        if fit.delta_mu < tau:
            keep.append(np.arange(win.start, win.start + win.size))
            continue
        _, _, inverse = pixel_counts(win.events, shape=(0, 1 << 16))
        local = np.flatnonzero(fit.low_cluster()[inverse])
        keep.append(local + win.start)
    if not keep:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(keep))


# --------------------------------------------------------------------------
# voxel grid


@dataclass(frozen=True)
class VoxelGrid:
    values: np.ndarray  # (H, W, B) signed, or (H, W, 2B) positive then negative bins
    t_start: int
    t_end: int
    polarity_mode: str = "signed"

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bins(self) -> int:
        b = self.values.shape[2]
        return b if self.polarity_mode == "signed" else b // 2


def temporal_weights(t, bins: int, t_start, t_end):
    """Bilinear-in-time bin weights: ``(lower_bin, upper_bin, w_lower, w_upper)``."""
    if not t_end > t_start:
        raise EmptyTimeRange(f"t_end ({t_end}) must exceed t_start ({t_start})")
    t = np.asarray(t, dtype=np.float64)
    ts = (bins - 1) * (t - t_start) / float(t_end - t_start)
    lo = np.floor(ts).astype(np.int64)
    lo = np.clip(lo, 0, bins - 1)
    frac = ts - lo
    hi = np.minimum(lo + 1, bins - 1)
    w_hi = np.where(hi > lo, frac, 0.0)
    w_lo = 1.0 - w_hi
    return lo, hi, w_lo, w_hi


def voxelize(events: np.ndarray, height: int, width: int, bins: int = DEFAULT_BINS,
             t_start=None, t_end=None, polarity_mode: str = "signed") -> VoxelGrid:
    """Accumulate events into ``bins`` temporal slices with linear weights.

    Events outside ``[t_start, t_end]`` are ignored.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if polarity_mode not in ("signed", "split"):
        raise ValueError(f"unknown polarity mode {polarity_mode!r}")
    if t_start is None:
        t_start = int(events["t"][0]) if len(events) else 0
    if t_end is None:
        t_end = int(events["t"][-1]) if len(events) else 0
    if not t_end > t_start:
        raise EmptyTimeRange(f"t_end ({t_end}) must exceed t_start ({t_start})")
    nb = bins if polarity_mode == "signed" else 2 * bins
    grid = np.zeros((height, width, nb), dtype=np.float64)
    sel = (events["t"] >= t_start) & (events["t"] <= t_end)
    ev = events[sel]
    if len(ev) == 0:
        return VoxelGrid(grid, t_start, t_end, polarity_mode)
    lo, hi, w_lo, w_hi = temporal_weights(ev["t"], bins, t_start, t_end)
    y = ev["y"].astype(np.int64)
    x = ev["x"].astype(np.int64)
    p = np.where(ev["p"] > 0, 1.0, -1.0)
    if polarity_mode == "signed":
        np.add.at(grid, (y, x, lo), p * w_lo)
        np.add.at(grid, (y, x, hi), p * w_hi)
    else:
        off = np.where(p > 0, 0, bins)
        np.add.at(grid, (y, x, lo + off), w_lo)
        np.add.at(grid, (y, x, hi + off), w_hi)
    return VoxelGrid(grid, t_start, t_end, polarity_mode)
