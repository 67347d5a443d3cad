"""Offline tracklet refinement: greedy merging, gap filling, mask smoothing."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

from .detect import box_iou
from .errors import ConfigError, MissingBorderMask
from .mask_ops import box_from_mask, centroid, decode_rle, encode_rle, morph_smooth, translate_mask
from .track import TrackEntry, Tracklet


@dataclass(frozen=True)
class MergeConfig:
    delta_min: int = -15
    delta_max: int = 15
    theta: float = 0.1

    def __post_init__(self):
        if not self.delta_min < self.delta_max:
            raise ConfigError("delta_min must be smaller than delta_max")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")


def merge_candidates(tracklets: Sequence[Tracklet], cfg: MergeConfig) -> list[tuple[float, int, int]]:
    """All ordered pairs ``(iou, id_i, id_j)`` where j may continue i, best first."""
    cands = []
    for ti in tracklets:
        for tj in tracklets:
            if ti is tj:
                continue
            gap = tj.start - ti.end
            if cfg.delta_min < gap <= cfg.delta_max:
                iou = box_iou(ti.last_box, tj.first_box)
                if iou >= cfg.theta:
                    cands.append((iou, ti.id, tj.id))
    cands.sort(key=lambda c: (-c[0], c[1], c[2]))
    return cands


def merge_tracklets(tracklets: Sequence[Tracklet], cfg: MergeConfig = MergeConfig()) -> list[Tracklet]:
    """Single greedy pass joining tracklets that continue one another.

    Each tracklet takes part in at most one merge. The merged tracklet keeps
    the id of the one that ends first, and that tracklet's entries win on
    overlapping frames. Output is sorted by id.
    """
    by_id = {t.id: t for t in tracklets}
    if len(by_id) != len(tracklets):
        raise ValueError("tracklet ids must be unique")
    used: set[int] = set()
    merged: dict[int, Tracklet] = {}
    for _, i, j in merge_candidates(tracklets, cfg):
        if i in used or j in used:
            continue
        used.update((i, j))
        ti, tj = by_id[i], by_id[j]
        taken = {e.frame_index for e in ti.entries}
        entries = list(ti.entries) + [e for e in tj.entries if e.frame_index not in taken]
        merged[i] = Tracklet(i, entries)
    out = [merged.get(t.id, t) for t in tracklets if t.id not in used or t.id in merged]
    return sorted(out, key=lambda t: t.id)


def interpolate_gaps(tracklet: Tracklet) -> Tracklet:
    """Fill missing frames by translating the mask before each gap.

    For a gap between present frames t1 < t2, frame t gets the t1 mask
    shifted so its centroid lands on the linear blend of the two border
    centroids with weight ``(t - t1) / (t2 - t1)``.
    """
    entries = tracklet.entries
    out: list[TrackEntry] = []
    for a, b in zip(entries, entries[1:]):
        out.append(a)
        t1, t2 = a.frame_index, b.frame_index
        if t2 - t1 <= 1:
            continue
        if a.mask is None or b.mask is None:
            warnings.warn(
                f"tracklet {tracklet.id}: no mask at gap border {t1}/{t2}, gap left open",
                MissingBorderMask,
                stacklevel=2,
            )
            continue
        m1 = decode_rle(a.mask)
        m2 = decode_rle(b.mask)
        if not m1.any() or not m2.any():
            warnings.warn(
                f"tracklet {tracklet.id}: empty mask at gap border {t1}/{t2}, gap left open",
                MissingBorderMask,
                stacklevel=2,
            )
            continue
        c1x, c1y = centroid(m1)
        c2x, c2y = centroid(m2)
        score = min(a.score, b.score)
        for t in range(t1 + 1, t2):
            alpha = (t - t1) / (t2 - t1)
            cx = (1 - alpha) * c1x + alpha * c2x
            cy = (1 - alpha) * c1y + alpha * c2y
            mt = translate_mask(m1, cx - c1x, cy - c1y)
            if not mt.any():
                continue
            out.append(TrackEntry(t, box_from_mask(mt), encode_rle(mt), score, interpolated=True))
    out.append(entries[-1])
    return Tracklet(tracklet.id, out)


def smooth_tracklet_masks(tracklet: Tracklet, dilate_iters: int = 4, erode_iters: int = 3) -> Tracklet:
    if dilate_iters == 0 and erode_iters == 0:
        return tracklet
    out = []
    for e in tracklet.entries:
        if e.mask is None:
            out.append(e)
            continue
        m = decode_rle(e.mask)
        if not m.any():
            out.append(e)
            continue
        sm = morph_smooth(m, dilate_iters, erode_iters)
        if not sm.any():
            out.append(replace(e, mask=encode_rle(sm)))
        else:
            out.append(replace(e, mask=encode_rle(sm), box=box_from_mask(sm)))
    return Tracklet(tracklet.id, out)
