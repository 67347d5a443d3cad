"""File formats: RLE/detection/sequence JSON, event files, PGM frames, voxel dumps.

Readers raise :class:`~trackkit.errors.SchemaError` with a field path (or a
line number for text formats) so the CLI can point at the problem.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .detect import AugTransform, Detection, Modality
from .errors import SchemaError, TrackkitError
from .events import EVENT_DTYPE, VoxelGrid, is_sorted
from .mask_ops import Box, RleMask, rle_from_string, rle_to_string, validate_rle
from .metrics import Instance, VideoSequence
from .track import TrackEntry, Tracklet

# --------------------------------------------------------------------------
# generic helpers


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def load_json(path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None


def _expect(cond, path, msg):
    if not cond:
        raise SchemaError(path, msg)


def _num(v, path, name="number"):
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), path, f"expected {name}")
    return v


def _int(v, path):
    _expect(isinstance(v, int) and not isinstance(v, bool), path, "expected integer")
    return v


# --------------------------------------------------------------------------
# RLE objects


def rle_to_json(rle: RleMask, fmt: str = "string") -> dict:
    if fmt == "string":
        counts: Any = rle_to_string(rle)
    elif fmt == "array":
        counts = list(rle.counts)
    else:
        raise ValueError(f"unknown RLE format {fmt!r}")
    return {"size": [rle.size[0], rle.size[1]], "counts": counts}


def rle_from_json(obj, path="segmentation") -> RleMask:
    _expect(isinstance(obj, dict), path, "expected RLE object")
    size = obj.get("size")
    _expect(
        isinstance(size, list) and len(size) == 2 and all(isinstance(s, int) and s >= 0 for s in size),
        f"{path}.size", "expected [height, width]",
    )
    counts = obj.get("counts")
    try:
        if isinstance(counts, str):
            return rle_from_string(counts, size)
        _expect(isinstance(counts, list) and all(isinstance(c, int) for c in counts),
                f"{path}.counts", "expected list of integers or string")
        rle = RleMask(tuple(size), counts)
        validate_rle(rle)
        return rle
    except TrackkitError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"{path}.counts", str(e)) from None


# --------------------------------------------------------------------------
# detections


@dataclass
class DetectionSequence:
    id: str
    length: int
    detections: list[Detection]
    image_size: Optional[tuple[int, int]] = None
    transforms: list[Optional[AugTransform]] = field(default_factory=list)


def _transform_from_json(obj, path, image_size):
    _expect(isinstance(obj, dict) and isinstance(obj.get("kind"), str), path, "expected transform object")
    _expect(image_size is not None, path, "transforms need the sequence height/width")
    try:
        return AugTransform(
            obj["kind"], image_size,
            factor=float(_num(obj.get("factor", 1.0), f"{path}.factor")),
            degrees=float(_num(obj.get("degrees", 0.0), f"{path}.degrees")),
        )
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(path, str(e)) from None


def detection_from_json(obj, path, image_size=None):
    _expect(isinstance(obj, dict), path, "expected detection object")
    frame = _int(obj.get("frame"), f"{path}.frame")
    _expect(frame >= 0, f"{path}.frame", "must be >= 0")
    bbox = obj.get("bbox")
    _expect(isinstance(bbox, list) and len(bbox) == 4, f"{path}.bbox", "expected [x, y, w, h]")
    for k, v in enumerate(bbox):
        _num(v, f"{path}.bbox[{k}]")
    _expect(bbox[2] > 0 and bbox[3] > 0, f"{path}.bbox", "width and height must be positive")
    score = _num(obj.get("score"), f"{path}.score")
    _expect(0 <= score <= 1, f"{path}.score", "must lie in [0, 1]")
    modality = obj.get("modality", "frame")
    _expect(modality in ("frame", "event"), f"{path}.modality", "expected 'frame' or 'event'")
    seg = obj.get("segmentation")
    mask = rle_from_json(seg, f"{path}.segmentation") if seg is not None else None
    tr = obj.get("transform")
    transform = _transform_from_json(tr, f"{path}.transform", image_size) if tr is not None else None
    det = Detection(frame, Box(*map(float, bbox)), float(score), mask, Modality(modality))
    return det, transform


def detection_to_json(det: Detection, rle_format="string") -> dict:
    out = {
        "frame": det.frame_index,
        "bbox": det.box.to_list(),
        "score": det.score,
        "modality": det.modality.value,
    }
    if det.mask is not None:
        out["segmentation"] = rle_to_json(det.mask, rle_format)
    return out


def parse_detections(obj, default_id="seq0") -> list[DetectionSequence]:
    """Accept a bare detection list (one sequence) or ``{"sequences": [...]}``."""
    if isinstance(obj, list):
        raw = [{"id": default_id, "detections": obj}]
        base = ""
    else:
        _expect(isinstance(obj, dict) and isinstance(obj.get("sequences"), list),
                "", "expected a detection list or an object with 'sequences'")
        raw = obj["sequences"]
        base = "sequences"
    out = []
    seen = set()
    for si, s in enumerate(raw):
        sp = f"{base}[{si}]" if base else ""
        _expect(isinstance(s, dict), sp or "$", "expected sequence object")
        sid = str(s.get("id", default_id))
        _expect(sid not in seen, f"{sp}.id", f"duplicate sequence id {sid!r}")
        seen.add(sid)
        size = None
        if "height" in s or "width" in s:
            size = (_int(s.get("height"), f"{sp}.height"), _int(s.get("width"), f"{sp}.width"))
        dets_raw = s.get("detections")
        _expect(isinstance(dets_raw, list), f"{sp}.detections", "expected list")
        dets, transforms = [], []
        for k, d in enumerate(dets_raw):
            dp = f"{sp}.detections[{k}]" if sp else f"[{k}]"
            det, tr = detection_from_json(d, dp, size)
            if det.mask is not None:
                if size is None:
                    size = det.mask.size
                _expect(det.mask.size == size, f"{dp}.segmentation.size",
                        f"mask size {list(det.mask.size)} differs from sequence size {list(size)}")
            dets.append(det)
            transforms.append(tr)
        length = s.get("length")
        if length is None:
            length = max((d.frame_index for d in dets), default=-1) + 1
        length = _int(length, f"{sp}.length")
        _expect(all(d.frame_index < length for d in dets), f"{sp}.length",
                "detections reference frames beyond the sequence length")
        out.append(DetectionSequence(sid, length, dets, size, transforms))
    return out


def detections_to_json(seqs: list[DetectionSequence], rle_format="string") -> dict:
    out = []
    for s in seqs:
        d = {"id": s.id, "length": s.length,
             "detections": [detection_to_json(x, rle_format) for x in s.detections]}
        if s.image_size is not None:
            d["height"], d["width"] = s.image_size
        out.append(d)
    return {"sequences": out}


# --------------------------------------------------------------------------
# GT / prediction sequences


def parse_sequences(obj, predictions: bool = False) -> list[VideoSequence]:
    _expect(isinstance(obj, dict) and isinstance(obj.get("sequences"), list),
            "", "expected an object with a 'sequences' list")
    out = []
    seen = set()
    for si, s in enumerate(obj["sequences"]):
        sp = f"sequences[{si}]"
        _expect(isinstance(s, dict), sp, "expected sequence object")
        _expect(isinstance(s.get("id"), (str, int)), f"{sp}.id", "expected sequence id")
        sid = str(s["id"])
        _expect(sid not in seen, f"{sp}.id", f"duplicate sequence id {sid!r}")
        seen.add(sid)
        length = _int(s.get("length"), f"{sp}.length")
        _expect(length >= 0, f"{sp}.length", "must be >= 0")
        insts_raw = s.get("instances")
        _expect(isinstance(insts_raw, list), f"{sp}.instances", "expected list")
        insts = []
        ids = set()
        size = None
        for ii, inst in enumerate(insts_raw):
            ip = f"{sp}.instances[{ii}]"
            _expect(isinstance(inst, dict), ip, "expected instance object")
            iid = _int(inst.get("id"), f"{ip}.id")
            _expect(iid not in ids, f"{ip}.id", f"duplicate instance id {iid}")
            ids.add(iid)
            score = None
            if predictions:
                score = float(_num(inst.get("score"), f"{ip}.score"))
            segs = inst.get("segmentations")
            _expect(isinstance(segs, list) and len(segs) == length, f"{ip}.segmentations",
                    f"expected list of {length} RLE objects or nulls")
            masks = []
            for t, seg in enumerate(segs):
                if seg is None:
                    masks.append(None)
                    continue
                m = rle_from_json(seg, f"{ip}.segmentations[{t}]")
                if size is None:
                    size = m.size
                _expect(m.size == size, f"{ip}.segmentations[{t}].size", "mask sizes differ within sequence")
                masks.append(m)
            insts.append(Instance(iid, masks, score))
        out.append(VideoSequence(sid, length, insts))
    return out


def sequences_to_json(seqs: list[VideoSequence], rle_format="string") -> dict:
    out = []
    for s in seqs:
        insts = []
        for inst in s.instances:
            d = {"id": inst.id,
                 "segmentations": [None if m is None else rle_to_json(m, rle_format) for m in inst.masks]}
            if inst.score is not None:
                d["score"] = inst.score
            insts.append(d)
        out.append({"id": s.id, "length": s.length, "instances": insts})
    return {"sequences": out}


# --------------------------------------------------------------------------
# tracklets


def tracklets_to_json(tracklets: list[Tracklet], rle_format="string") -> list[dict]:
    return [
        {
            "id": t.id,
            "entries": [
                {
                    "frame": e.frame_index,
                    "bbox": e.box.to_list(),
                    "score": e.score,
                    "interpolated": e.interpolated,
                    "segmentation": None if e.mask is None else rle_to_json(e.mask, rle_format),
                }
                for e in t.entries
            ],
        }
        for t in tracklets
    ]


def tracklets_from_json(obj) -> list[Tracklet]:
    _expect(isinstance(obj, list), "", "expected list of tracklets")
    out = []
    for ti, t in enumerate(obj):
        tp = f"[{ti}]"
        _expect(isinstance(t, dict) and isinstance(t.get("entries"), list) and t["entries"],
                tp, "expected tracklet with non-empty entries")
        entries = []
        for k, e in enumerate(t["entries"]):
            ep = f"{tp}.entries[{k}]"
            bbox = e.get("bbox")
            _expect(isinstance(bbox, list) and len(bbox) == 4, f"{ep}.bbox", "expected [x, y, w, h]")
            seg = e.get("segmentation")
            entries.append(TrackEntry(
                _int(e.get("frame"), f"{ep}.frame"),
                Box(*map(float, bbox)),
                None if seg is None else rle_from_json(seg, f"{ep}.segmentation"),
                float(_num(e.get("score"), f"{ep}.score")),
                bool(e.get("interpolated", False)),
            ))
        out.append(Tracklet(_int(t.get("id"), f"{tp}.id"), entries))
    return out


# --------------------------------------------------------------------------
# event files

BIN_MAGIC = b"EVT1"
BIN_HEADER = np.dtype([("magic", "S4"), ("width", "<u2"), ("height", "<u2"), ("count", "<u8")])
BIN_RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1")])


def _check_events(ev, where, shape=None):
    if not is_sorted(ev):
        bad = int(np.flatnonzero(np.diff(ev["t"]) < 0)[0]) + 1
        raise SchemaError(where, f"timestamps not sorted at event {bad}")
    if shape is not None and len(ev):
        h, w = shape
        if ev["x"].max() >= w or ev["y"].max() >= h:
            raise SchemaError(where, f"event coordinates outside {w}x{h} sensor")


def read_events_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "x,y,t,p":
            raise SchemaError(f"{path}:1", "expected header 'x,y,t,p'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise SchemaError(f"{path}:{lineno}", "expected 4 comma-separated fields")
            try:
                x, y, t, p = (int(v) for v in parts)
            except ValueError:
                raise SchemaError(f"{path}:{lineno}", "fields must be integers") from None
            if p not in (-1, 0, 1):
                raise SchemaError(f"{path}:{lineno}", f"polarity {p} not in {{-1, 0, 1}}")
            if x < 0 or y < 0 or x > 0xFFFF or y > 0xFFFF:
                raise SchemaError(f"{path}:{lineno}", "coordinates out of range")
            rows.append((x, y, t, -1 if p == 0 else p))
    ev = np.array(rows, dtype=EVENT_DTYPE) if rows else np.zeros(0, dtype=EVENT_DTYPE)
    _check_events(ev, str(path))
    return ev


def write_events_csv(path, events: np.ndarray) -> None:
    lines = ["x,y,t,p"]
    lines += [f"{int(e['x'])},{int(e['y'])},{int(e['t'])},{int(e['p'])}" for e in events]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_events_bin(path):
    """Return ``(events, (height, width))``."""
    raw = Path(path).read_bytes()
    if len(raw) < BIN_HEADER.itemsize:
        raise SchemaError(str(path), "file shorter than the 16-byte header")
    hdr = np.frombuffer(raw[: BIN_HEADER.itemsize], dtype=BIN_HEADER)[0]
    if bytes(hdr["magic"]) != BIN_MAGIC:
        raise SchemaError(str(path), "bad magic, expected EVT1")
    count = int(hdr["count"])
    body = raw[BIN_HEADER.itemsize:]
    if len(body) != count * BIN_RECORD.itemsize:
        raise SchemaError(str(path), f"header declares {count} records, body holds "
                          f"{len(body) / BIN_RECORD.itemsize:g}")
    rec = np.frombuffer(body, dtype=BIN_RECORD)
    if len(rec) and not np.isin(rec["p"], (-1, 1)).all():
        raise SchemaError(str(path), "polarity must be -1 or +1")
    ev = np.empty(count, dtype=EVENT_DTYPE)
    ev["x"], ev["y"], ev["p"] = rec["x"], rec["y"], rec["p"]
    ev["t"] = rec["t"].astype(np.int64)
    shape = (int(hdr["height"]), int(hdr["width"]))
    _check_events(ev, str(path), shape)
    return ev, shape


def write_events_bin(path, events: np.ndarray, shape) -> None:
    h, w = shape
    hdr = np.array([(BIN_MAGIC, w, h, len(events))], dtype=BIN_HEADER)
    rec = np.empty(len(events), dtype=BIN_RECORD)
    rec["x"], rec["y"], rec["t"], rec["p"] = events["x"], events["y"], events["t"], events["p"]
    atomic_write_bytes(path, hdr.tobytes() + rec.tobytes())


def read_events(path):
    """Dispatch on suffix: ``.csv`` or binary. Returns ``(events, shape_or_None)``."""
    if str(path).lower().endswith(".csv"):
        return read_events_csv(path), None
    return read_events_bin(path)


def write_events(path, events, shape=None) -> None:
    if str(path).lower().endswith(".csv"):
        write_events_csv(path, events)
    else:
        if shape is None:
            shape = (int(events["y"].max()) + 1, int(events["x"].max()) + 1) if len(events) else (0, 0)
        write_events_bin(path, events, shape)


def read_frame_times(path) -> list[int]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        obj = load_json(path)
        _expect(all(isinstance(v, int) for v in obj), str(path), "expected list of integer timestamps")
        return list(obj)
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise SchemaError(f"{path}:{lineno}", "expected integer timestamp") from None
    return out


# --------------------------------------------------------------------------
# voxel grids


def write_voxel_grid(path, grid: VoxelGrid) -> Path:
    """Write C-order float32 values plus a JSON sidecar next to ``path``."""
    path = Path(path)
    atomic_write_bytes(path, np.ascontiguousarray(grid.values, dtype="<f4").tobytes())
    sidecar = path.with_suffix(".json")
    meta = {"H": grid.height, "W": grid.width, "B": grid.bins, "t_start": int(grid.t_start),
            "t_end": int(grid.t_end), "polarity_mode": grid.polarity_mode}
    atomic_write_text(sidecar, dumps_json(meta))
    return sidecar


def read_voxel_grid(path) -> VoxelGrid:
    path = Path(path)
    meta = load_json(path.with_suffix(".json"))
    mode = meta.get("polarity_mode", "signed")
    nb = meta["B"] if mode == "signed" else 2 * meta["B"]
    vals = np.frombuffer(path.read_bytes(), dtype="<f4")
    if vals.size != meta["H"] * meta["W"] * nb:
        raise SchemaError(str(path), "voxel payload size does not match sidecar")
    return VoxelGrid(vals.reshape(meta["H"], meta["W"], nb).astype(np.float64),
                     meta["t_start"], meta["t_end"], mode)


# --------------------------------------------------------------------------
# PGM frames

_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PGM_TOKEN.match(raw, pos)
        if not m:
            raise SchemaError(str(path), "truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise SchemaError(str(path), "only binary PGM (P5) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise SchemaError(str(path), "malformed PGM header") from None
    if maxval != 255:
        raise SchemaError(str(path), f"maxval {maxval} unsupported, expected 255")
    pos += 1  # single whitespace byte after maxval
    data = raw[pos:pos + w * h]
    if len(data) != w * h:
        raise SchemaError(str(path), "PGM pixel data truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, frame: np.ndarray) -> None:
    f = np.asarray(frame, dtype=np.uint8)
    h, w = f.shape
    atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode("ascii") + f.tobytes())
