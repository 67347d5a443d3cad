"""Detections, box NMS and test-time-augmentation fusion."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .assign import hungarian, iou_matrix
from .errors import ConsistencyWarning, DegenerateResult, NoReferenceGroup
from .mask_ops import Box, RleMask, box_from_mask, decode_rle


class Modality(str, Enum):
    FRAME = "frame"
    EVENT = "event"


@dataclass(frozen=True)
class Detection:
    frame_index: int
    box: Box
    score: float
    mask: Optional[RleMask] = None
    modality: Modality = Modality.FRAME

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")
        object.__setattr__(self, "modality", Modality(self.modality))


def check_mask_consistency(det: Detection, slack: float = 2.0) -> bool:
    """Warn (and return False) when the mask's bounds exceed the box by more than ``slack`` px."""
    if det.mask is None:
        return True
    m = decode_rle(det.mask)
    if not m.any():
        return True
    mb = box_from_mask(m)
    b = det.box
    ok = (
        mb.x >= b.x - slack
        and mb.y >= b.y - slack
        and mb.x2 <= b.x2 + slack
        and mb.y2 <= b.y2 + slack
    )
    if not ok:
        warnings.warn(
            f"frame {det.frame_index}: mask bounds {mb} exceed detection box {b}",
            ConsistencyWarning,
            stacklevel=2,
        )
    return ok


def box_iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy NMS by descending score; equal scores keep list order."""
    if not dets:
        return []
    frames = {d.frame_index for d in dets}
    if len(frames) > 1:
        raise ValueError(f"nms expects detections from one frame, got frames {sorted(frames)}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    iou = iou_matrix([d.box for d in dets], [d.box for d in dets])
    kept: list[int] = []
    for i in order:
        if all(iou[i, k] <= iou_threshold for k in kept):
            kept.append(i)
    return [dets[i] for i in kept]


# --------------------------------------------------------------------------
# test-time augmentation


@dataclass(frozen=True)
class AugTransform:
    """A geometric test-time augmentation of an ``image_size = (h, w)`` frame.

    ``kind`` is one of ``identity``, ``horizontal_flip``, ``scale`` (uses
    ``factor``) or ``rotate`` (uses ``degrees``, counter-clockwise about the
    image center, output canvas the same size as the input).
    """

    kind: str
    image_size: tuple[int, int]
    factor: float = 1.0
    degrees: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "horizontal_flip", "scale", "rotate"):
            raise ValueError(f"unknown augmentation {self.kind!r}")
        if self.kind == "scale" and not self.factor > 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "rotate" and abs(self.degrees) > 45:
            raise ValueError("rotation limited to |degrees| <= 45")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"


def _rotate_box(box: Box, degrees: float, image_size) -> Box:
    h, w = image_size
    cx, cy = w / 2.0, h / 2.0
    th = math.radians(degrees)
    cos, sin = math.cos(th), math.sin(th)
    xs, ys = [], []
    for px, py in ((box.x, box.y), (box.x2, box.y), (box.x, box.y2), (box.x2, box.y2)):
        dx, dy = px - cx, py - cy
        # y axis points down, so counter-clockwise on screen is -sin in y
        xs.append(cx + cos * dx + sin * dy)
        ys.append(cy - sin * dx + cos * dy)
    x1, x2 = max(0.0, min(xs)), min(float(w), max(xs))
    y1, y2 = max(0.0, min(ys)), min(float(h), max(ys))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise DegenerateResult(f"box {box} leaves the image after rotation")
    return Box.from_xyxy(x1, y1, x2, y2)


def map_box(box: Box, t: AugTransform) -> Box:
    """Forward-map a box from original to augmented image coordinates."""
    if t.kind == "identity":
        return box
    if t.kind == "horizontal_flip":
        return Box(t.image_size[1] - box.x - box.w, box.y, box.w, box.h)
    if t.kind == "scale":
        s = t.factor
        return Box(box.x * s, box.y * s, box.w * s, box.h * s)
    return _rotate_box(box, t.degrees, t.image_size)


def inverse_map_box(box: Box, t: AugTransform) -> Box:
    """Map a box detected on the augmented image back to original coordinates."""
    if t.kind == "identity":
        return box
    if t.kind == "horizontal_flip":
        return Box(t.image_size[1] - box.x - box.w, box.y, box.w, box.h)
    if t.kind == "scale":
        s = t.factor
        return Box(box.x / s, box.y / s, box.w / s, box.h / s)
    return _rotate_box(box, -t.degrees, t.image_size)


def fuse_tta(
    groups: Sequence[tuple[AugTransform, Sequence[Detection]]],
    iou_gate: float = 0.3,
    area_ratio_bounds: tuple[float, float] = (0.5, 2.0),
    mapped: bool = False,
) -> list[Detection]:
    """Fuse detections from augmented views onto the identity view.

    Each augmented group is matched to the reference detections by
    Hungarian assignment on box IoU. A pair survives when IoU exceeds
    ``iou_gate`` and the area ratio (augmented / reference) lies within
    ``area_ratio_bounds``. Matched boxes are averaged per coordinate with
    detection scores as weights; the fused score is the best matched score.
    Pass ``mapped=True`` when boxes are already in original coordinates.
    """
    ref_idx = next((k for k, (t, _) in enumerate(groups) if t.is_identity), None)
    if ref_idx is None:
        raise NoReferenceGroup("fuse_tta needs one identity-transform group")
    refs = list(groups[ref_idx][1])
    lo, hi = area_ratio_bounds
    matched: list[list[Detection]] = [[] for _ in refs]
    ref_boxes = [d.box for d in refs]
    for k, (t, dets) in enumerate(groups):
        if k == ref_idx or not dets or not refs:
            continue
        aug = [d if mapped else replace(d, box=inverse_map_box(d.box, t)) for d in dets]
        iou = iou_matrix(ref_boxes, [d.box for d in aug])
        for i, j in hungarian(iou, maximize=True):
            ratio = aug[j].box.area / refs[i].box.area
            if iou[i, j] > iou_gate and lo <= ratio <= hi:
                matched[i].append(aug[j])
    out = []
    for ref, extra in zip(refs, matched):
        if not extra:
            out.append(ref)
            continue
        members = [ref] + extra
        weights = np.array([d.score for d in members], dtype=np.float64)
        if weights.sum() <= 0:
            weights = np.ones_like(weights)
        base = np.array(ref.box.to_list())
        coords = np.array([d.box.to_list() for d in members])
        # offset form keeps identical boxes bit-exact
        fused = base + (weights[:, None] * (coords - base)).sum(axis=0) / weights.sum()
        out.append(replace(ref, box=Box(*map(float, fused)), score=max(d.score for d in members)))
    return out
