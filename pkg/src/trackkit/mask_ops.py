"""Binary masks, run-length codecs and mask geometry.

Masks are plain ``numpy`` boolean arrays of shape ``(height, width)``.
Run-length masks scan the image column by column (top to bottom, then
left to right), starting with a background run, which is the convention
used by COCO-style submission files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadCharacter,
    EmptyMask,
    MalformedRuns,
    SizeMismatch,
    SumMismatch,
    TruncatedStream,
)

BinaryMask = np.ndarray


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in continuous pixel coordinates (left, top, width, height)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive extent, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @classmethod
    def from_xyxy(cls, x1, y1, x2, y2) -> "Box":
        return cls(float(x1), float(y1), float(x2 - x1), float(y2 - y1))

    def to_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]


@dataclass(frozen=True)
class RleMask:
    size: tuple[int, int]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def height(self) -> int:
        return self.size[0]

    @property
    def width(self) -> int:
        return self.size[1]

    def area(self) -> int:
        return sum(self.counts[1::2])


def as_mask(arr) -> BinaryMask:
    """Validate and convert ``arr`` to a 2-D boolean mask."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {a.shape}")
    if a.dtype != bool:
        if not np.isin(a, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        a = a.astype(bool)
    return a


def empty_mask(height: int, width: int) -> BinaryMask:
    return np.zeros((height, width), dtype=bool)


def box_mask(box: Box, height: int, width: int) -> BinaryMask:
    """Rasterize ``box`` (pixel centers inside the box are foreground)."""
    m = np.zeros((height, width), dtype=bool)
    x1 = max(0, int(np.ceil(box.x - 0.5)))
    y1 = max(0, int(np.ceil(box.y - 0.5)))
    x2 = min(width, int(np.ceil(box.x2 - 0.5)))
    y2 = min(height, int(np.ceil(box.y2 - 0.5)))
    if x2 > x1 and y2 > y1:
        m[y1:y2, x1:x2] = True
    return m


# --------------------------------------------------------------------------
# run-length codec


def encode_rle(mask: BinaryMask) -> RleMask:
    m = as_mask(mask)
    h, w = m.shape
    flat = m.ravel(order="F").astype(np.int8)
    if flat.size == 0:
        return RleMask((h, w), ())
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask((h, w), counts)


def validate_rle(rle: RleMask) -> None:
    h, w = rle.size
    counts = rle.counts
    if h < 0 or w < 0:
        raise MalformedRuns(f"negative mask size {rle.size}")
    if not counts:
        if h * w == 0:
            return
        raise MalformedRuns("empty counts for a non-empty mask")
    if any(c < 0 for c in counts):
        raise MalformedRuns("negative run length")
    if any(c == 0 for c in counts[1:]):
        raise MalformedRuns("zero-length interior run")
    total = sum(counts)
    if total != h * w:
        raise SumMismatch(f"run lengths sum to {total}, expected {h}x{w}={h * w}")


def decode_rle(rle: RleMask) -> BinaryMask:
    validate_rle(rle)
    h, w = rle.size
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return flat.reshape((w, h)).T.copy()


def rle_to_string(rle: RleMask) -> str:
    """Serialize counts in the COCO compressed-string form."""
    validate_rle(rle)
    counts = rle.counts
    out = []
    for i, c in enumerate(counts):
        x = c - counts[i - 2] if i > 2 else c
        more = True
        while more:
            group = x & 0x1F
            x >>= 5
            more = (x != -1) if (group & 0x10) else (x != 0)
            if more:
                group |= 0x20
            out.append(chr(group + 48))
    return "".join(out)


def rle_from_string(text: str, size: Sequence[int]) -> RleMask:
    counts: list[int] = []
    pos = 0
    n = len(text)
    while pos < n:
        x = 0
        shift = 0
        more = True
        group = 0
        while more:
            if pos >= n:
                raise TruncatedStream("continuation bit set on final character")
            code = ord(text[pos])
            if not 48 <= code <= 111:
                raise BadCharacter(f"character {text[pos]!r} at offset {pos} outside RLE alphabet")
            group = code - 48
            x |= (group & 0x1F) << shift
            more = bool(group & 0x20)
            pos += 1
            shift += 5
        if group & 0x10:
            x |= -1 << shift
        i = len(counts)
        if i > 2:
            x += counts[i - 2]
        counts.append(x)
    rle = RleMask(tuple(size), counts)
    validate_rle(rle)
    return rle


# --------------------------------------------------------------------------
# geometry


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise SizeMismatch(f"mask sizes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def box_from_mask(mask: BinaryMask) -> Box:
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    return Box(
        float(cols[0]),
        float(rows[0]),
        float(cols[-1] - cols[0] + 1),
        float(rows[-1] - rows[0] + 1),
    )


def moments(mask: BinaryMask) -> tuple[int, int, int]:
    """Raw image moments ``(M00, M10, M01)``; x is the column, y the row."""
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    return int(xs.size), int(xs.sum()), int(ys.sum())


def centroid(mask: BinaryMask) -> tuple[float, float]:
    m00, m10, m01 = moments(mask)
    if m00 == 0:
        raise EmptyMask("centroid of an empty mask is undefined")
    return m10 / m00, m01 / m00


def translate_mask(mask: BinaryMask, dx: float, dy: float) -> BinaryMask:
    """Inverse-warp ``mask`` by a pure translation with nearest-neighbour lookup.

    ``out[y, x] = mask[round(y - dy), round(x - dx)]``; reads outside the
    image are background.  Halves round up.
    """
    m = as_mask(mask)
    h, w = m.shape
    src_x = np.floor(np.arange(w) - dx + 0.5).astype(np.int64)
    src_y = np.floor(np.arange(h) - dy + 0.5).astype(np.int64)
    vx = (src_x >= 0) & (src_x < w)
    vy = (src_y >= 0) & (src_y < h)
    out = np.zeros_like(m)
    if vx.any() and vy.any():
        out[np.ix_(vy, vx)] = m[np.ix_(src_y[vy], src_x[vx])]
    return out


def _neighbourhood(m: np.ndarray, reduce) -> np.ndarray:
    # 3x3 full structuring element, outside pixels are background
    h, w = m.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = m
    acc = p[1:-1, 1:-1].copy()
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            reduce(acc, p[dy:dy + h, dx:dx + w], out=acc)
    return acc


def dilate(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    m = as_mask(mask)
    for _ in range(iterations):
        m = _neighbourhood(m, np.logical_or)
    return m


def erode(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    m = as_mask(mask)
    for _ in range(iterations):
        m = _neighbourhood(m, np.logical_and)
    return m


def morph_smooth(mask: BinaryMask, dilate_iters: int = 4, erode_iters: int = 3) -> BinaryMask:
    """Dilate then erode with a 3x3 rectangular element."""
    if dilate_iters < 0 or erode_iters < 0:
        raise ValueError("iteration counts must be non-negative")
    return erode(dilate(mask, dilate_iters), erode_iters)
