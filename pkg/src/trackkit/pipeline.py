"""End-to-end sequence processing: fusion, tracking and refinement."""

from __future__ import annotations

from collections import defaultdict

from .config import PipelineConfig
from .detect import AugTransform, Detection, fuse_tta, nms
from .formats import DetectionSequence
from .mask_ops import box_mask, encode_rle
from .metrics import Instance, VideoSequence
from .postprocess import interpolate_gaps, merge_tracklets, smooth_tracklet_masks
from .track import Tracker, Tracklet


def fuse_frame(dets, transforms, config: PipelineConfig, image_size=None) -> list[Detection]:
    """TTA fusion per modality (when augmented views exist), then cross-modality NMS."""
    by_modality: dict[str, list[tuple[Detection, AugTransform | None]]] = defaultdict(list)
    for d, tr in zip(dets, transforms):
        by_modality[d.modality.value].append((d, tr))
    fused: list[Detection] = []
    for modality in sorted(by_modality):
        items = by_modality[modality]
        if all(tr is None or tr.is_identity for _, tr in items):
            fused.extend(d for d, _ in items)
            continue
        groups: dict[AugTransform, list[Detection]] = {}
        ident = AugTransform("identity", image_size or (1, 1))
        groups[ident] = []
        for d, tr in items:
            key = ident if tr is None or tr.is_identity else tr
            groups.setdefault(key, []).append(d)
        fused.extend(fuse_tta(list(groups.items()), config.tta.iou_gate, config.tta.area_ratio_bounds))
    return nms(fused, config.nms_iou)


def track_sequence(seq: DetectionSequence, config: PipelineConfig = PipelineConfig(),
                   refine: bool = True, smooth: bool = True) -> list[Tracklet]:
    per_frame: dict[int, list[tuple[Detection, AugTransform | None]]] = defaultdict(list)
    transforms = seq.transforms or [None] * len(seq.detections)
    for d, tr in zip(seq.detections, transforms):
        per_frame[d.frame_index].append((d, tr))
    tracker = Tracker(config.tracker)
    for t in range(seq.length):
        items = per_frame.get(t, [])
        dets = fuse_frame([d for d, _ in items], [tr for _, tr in items], config, seq.image_size)
        tracker.step(t, dets)
    tracklets = tracker.finalize()
    if refine:
        tracklets = [interpolate_gaps(t) for t in merge_tracklets(tracklets, config.merge)]
    if smooth:
        s = config.smooth
        tracklets = [smooth_tracklet_masks(t, s.dilate_iters, s.erode_iters) for t in tracklets]
    return tracklets


def tracklets_to_sequence(tracklets: list[Tracklet], sequence_id: str, length: int,
                          image_size=None) -> VideoSequence:
    """Predictions for evaluation/submission; entries without masks are
    rasterized from their box when the image size is known."""
    instances = []
    for tl in sorted(tracklets, key=lambda t: t.id):
        masks = [None] * length
        scores = []
        for e in tl.entries:
            if not 0 <= e.frame_index < length:
                continue
            if e.mask is not None:
                masks[e.frame_index] = e.mask
            elif image_size is not None:
                masks[e.frame_index] = encode_rle(box_mask(e.box, *image_size))
            if not e.interpolated:
                scores.append(e.score)
        if all(m is None for m in masks):
            continue
        if not scores:
            scores = [e.score for e in tl.entries]
        instances.append(Instance(tl.id, masks, sum(scores) / len(scores)))
    return VideoSequence(sequence_id, length, instances)


def run_sequence(seq: DetectionSequence, config: PipelineConfig = PipelineConfig()) -> VideoSequence:
    tracklets = track_sequence(seq, config)
    return tracklets_to_sequence(tracklets, seq.id, seq.length, seq.image_size)
