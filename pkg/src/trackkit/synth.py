"""Synthetic sequences with known ground truth.

Objects are rectangles or ellipses moving at constant integer velocity.
By default each object gets its own horizontal lane so objects never
touch; ``crossing=True`` puts the first two objects on a collision course
in a shared lane. Detections are derived from the GT masks and can be
jittered, dropped for chosen frame ranges (``gaps``) or dropped while an
object is overlapped by another (``occlusion``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .detect import Detection, Modality
from .mask_ops import box_from_mask, encode_rle, translate_mask
from .metrics import Instance, VideoSequence

DEFAULT_SEED = 42


def env_seed(default: int = DEFAULT_SEED) -> int:
    """Seed from ``TRACKKIT_SEED`` if set, else ``default``."""
    v = os.environ.get("TRACKKIT_SEED")
    return int(v) if v not in (None, "") else default


@dataclass
class SynthSpec:
    num_objects: int = 2
    length: int = 30
    height: int = 120
    width: int = 160
    shape: str = "rectangle"
    min_size: int = 12
    max_size: int = 18
    max_speed: int = 2
    crossing: bool = False
    occlusion: bool = False
    jitter: int = 0
    score: float = 0.9
    modality: str = "frame"
    # (object index, first missing frame, number of frames)
    gaps: list[tuple[int, int, int]] = field(default_factory=list)


def _shape_mask(shape, h, w, size_h, size_w):
    m = np.zeros((h, w), dtype=bool)
    if shape == "rectangle":
        m[:size_h, :size_w] = True
    elif shape == "ellipse":
        yy, xx = np.mgrid[:size_h, :size_w]
        cy, cx = (size_h - 1) / 2.0, (size_w - 1) / 2.0
        ry, rx = size_h / 2.0, size_w / 2.0
        m[:size_h, :size_w] = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return m


def generate(spec: SynthSpec, seed: int = DEFAULT_SEED, sequence_id: str = "synth0"):
    """Return ``(gt_sequence, detections)`` for one synthetic sequence."""
    rng = np.random.default_rng(seed)
    k = spec.num_objects
    H, W, T = spec.height, spec.width, spec.length
    lanes = 1 if (spec.crossing and k >= 2) else 0
    lane_count = max(1, k - lanes)
    lane_h = H // lane_count
    if lane_h < spec.max_size + 2:
        raise ValueError("image too small for the requested number of well-separated objects")

    tracks = []  # per object: list of masks per frame
    for obj in range(k):
        sh = int(rng.integers(spec.min_size, spec.max_size + 1))
        sw = int(rng.integers(spec.min_size, spec.max_size + 1))
        lane = max(0, obj - lanes)
        y0 = lane * lane_h + (lane_h - sh) // 2
        if spec.crossing and obj < 2 and k >= 2:
            speed = max(1, spec.max_speed)
            travel = speed * (T - 1)
            if travel + sw > W:
                raise ValueError("image too narrow for a crossing")
            if obj == 0:
                x0, vx = (W - travel - sw) // 2, speed
            else:
                x0, vx = (W - travel - sw) // 2 + travel, -speed
            vy = 0
        else:
            vx = int(rng.integers(1, spec.max_speed + 1)) * int(rng.choice((-1, 1)))
            travel = abs(vx) * (T - 1)
            if travel + sw > W:
                raise ValueError("image too narrow for the requested motion")
            lo = travel if vx < 0 else 0
            hi = W - sw - (0 if vx < 0 else travel)
            x0 = int(rng.integers(lo, hi + 1))
            vy = 0
        base = translate_mask(_shape_mask(spec.shape, H, W, sh, sw), x0, y0)
        tracks.append([translate_mask(base, vx * t, vy * t) for t in range(T)])

    instances = [
        Instance(obj + 1, [encode_rle(m) for m in masks]) for obj, masks in enumerate(tracks)
    ]
    gt = VideoSequence(sequence_id, T, instances)

    dropped = set()
    for obj, start, n in spec.gaps:
        for t in range(start, start + n):
            dropped.add((obj, t))
    dets: list[Detection] = []
    for t in range(T):
        for obj, masks in enumerate(tracks):
            if (obj, t) in dropped:
                continue
            m = masks[t]
            if spec.occlusion and any(
                (masks[t] & other[t]).any() for o, other in enumerate(tracks) if o != obj
            ):
                continue
            if spec.jitter:
                jx, jy = (int(v) for v in rng.integers(-spec.jitter, spec.jitter + 1, size=2))
                m = translate_mask(m, jx, jy)
            if not m.any():
                continue
            dets.append(Detection(t, box_from_mask(m), spec.score, encode_rle(m), Modality(spec.modality)))
    return gt, dets
