"""Mask-based tracking evaluation: HOTA (DetA/AssA), CLEAR-MOT and IDF1.

Per-sequence results are kept as additive count structures so that the
combined score pools counts across sequences instead of averaging ratios.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .assign import hungarian
from .errors import ConsistencyWarning, SizeMismatch, UnknownSequenceId
from .mask_ops import RleMask, decode_rle

ALPHAS = tuple(k / 20 for k in range(1, 20))
DEFAULT_MATCH_IOU = 0.5


@dataclass
class Instance:
    id: int
    masks: list[Optional[RleMask]]
    score: Optional[float] = None


@dataclass
class VideoSequence:
    id: str
    length: int
    instances: list[Instance]

    def __post_init__(self):
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError(f"sequence {self.id}: instance ids are not unique")
        for inst in self.instances:
            if len(inst.masks) != self.length:
                raise ValueError(
                    f"sequence {self.id}: instance {inst.id} has {len(inst.masks)} "
                    f"segmentations, expected {self.length}"
                )


GtSequence = VideoSequence
PredSequence = VideoSequence


@dataclass
class FrameData:
    gt_ids: list[int]
    pred_ids: list[int]
    iou: np.ndarray  # (len(gt_ids), len(pred_ids))


def iou_matrix_masks(gt: list[np.ndarray], pred: list[np.ndarray]) -> np.ndarray:
    if not gt or not pred:
        return np.zeros((len(gt), len(pred)))
    shape = gt[0].shape
    if any(m.shape != shape for m in gt + pred):
        raise SizeMismatch("masks within a frame differ in size")
    G = np.stack([m.ravel() for m in gt]).astype(np.float64)
    P = np.stack([m.ravel() for m in pred]).astype(np.float64)
    inter = G @ P.T
    union = G.sum(1)[:, None] + P.sum(1)[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def frame_data(gt: VideoSequence, pred: VideoSequence, overlap_warn: float = 0.1) -> list[FrameData]:
    if gt.length != pred.length:
        raise ValueError(
            f"sequence {gt.id}: GT length {gt.length} != prediction length {pred.length}"
        )
    out = []
    for t in range(gt.length):
        g_ids, g_masks = [], []
        for inst in gt.instances:
            if inst.masks[t] is not None:
                g_ids.append(inst.id)
                g_masks.append(decode_rle(inst.masks[t]))
        p_ids, p_masks = [], []
        for inst in pred.instances:
            if inst.masks[t] is not None:
                p_ids.append(inst.id)
                p_masks.append(decode_rle(inst.masks[t]))
        if len(g_masks) > 1:
            _check_gt_overlap(gt.id, t, g_ids, g_masks, overlap_warn)
        out.append(FrameData(g_ids, p_ids, iou_matrix_masks(g_masks, p_masks)))
    return out


def _check_gt_overlap(seq_id, t, ids, masks, limit):
    G = np.stack([m.ravel() for m in masks]).astype(np.float64)
    inter = G @ G.T
    area = G.sum(1)
    small = np.minimum(area[:, None], area[None, :])
    frac = np.where(small > 0, inter / np.where(small > 0, small, 1.0), 0.0)
    np.fill_diagonal(frac, 0.0)
    if (frac > limit).any():
        warnings.warn(
            f"sequence {seq_id} frame {t}: GT masks overlap by more than {limit:.0%}",
            ConsistencyWarning,
            stacklevel=3,
        )


def match_frame_iou(iou: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    """Max-IoU assignment restricted to pairs with ``IoU >= alpha``."""
    if iou.size == 0:
        return []
    sim = np.where(iou >= alpha, iou, 0.0)
    return [(i, j) for i, j in hungarian(sim, maximize=True) if sim[i, j] > 0]


def match_frame(gt_masks, pred_masks, alpha: float) -> list[tuple[int, int]]:
    """Match one frame's GT and predicted masks; unmatched ones are FN / FP."""
    return match_frame_iou(iou_matrix_masks(list(gt_masks), list(pred_masks)), alpha)


# --------------------------------------------------------------------------
# additive count structures


@dataclass
class HotaCounts:
    tp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    fn: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    fp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    ass_sum: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))

    def __add__(self, o: "HotaCounts") -> "HotaCounts":
        return HotaCounts(self.tp + o.tp, self.fn + o.fn, self.fp + o.fp, self.ass_sum + o.ass_sum)

    def per_alpha(self):
        denom = self.tp + self.fn + self.fp
        det = np.where(denom > 0, self.tp / np.where(denom > 0, denom, 1), 0.0)
        ass = np.where(self.tp > 0, self.ass_sum / np.maximum(self.tp, 1), 0.0)
        return np.sqrt(det * ass), det, ass

    def summary(self) -> tuple[float, float, float]:
        h, d, a = self.per_alpha()
        return float(h.mean()), float(d.mean()), float(a.mean())


@dataclass
class ClearCounts:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    idsw: int = 0

    def __add__(self, o: "ClearCounts") -> "ClearCounts":
        return ClearCounts(self.tp + o.tp, self.fn + o.fn, self.fp + o.fp, self.idsw + o.idsw)

    @property
    def num_gt(self) -> int:
        return self.tp + self.fn

    @property
    def mota(self) -> float:
        return 1.0 - (self.fn + self.fp + self.idsw) / max(1, self.num_gt)


@dataclass
class IdCounts:
    idtp: int = 0
    idfn: int = 0
    idfp: int = 0

    def __add__(self, o: "IdCounts") -> "IdCounts":
        return IdCounts(self.idtp + o.idtp, self.idfn + o.idfn, self.idfp + o.idfp)

    @property
    def idf1(self) -> float:
        denom = 2 * self.idtp + self.idfp + self.idfn
        return 2 * self.idtp / denom if denom else 0.0


# --------------------------------------------------------------------------
# metric kernels on precomputed per-frame IoU


def hota_counts(frames: list[FrameData], alphas=ALPHAS) -> HotaCounts:
    gt_count: dict[int, int] = {}
    pr_count: dict[int, int] = {}
    for f in frames:
        for g in f.gt_ids:
            gt_count[g] = gt_count.get(g, 0) + 1
        for p in f.pred_ids:
            pr_count[p] = pr_count.get(p, 0) + 1
    c = HotaCounts(np.zeros(len(alphas)), np.zeros(len(alphas)), np.zeros(len(alphas)), np.zeros(len(alphas)))
    for k, alpha in enumerate(alphas):
        pair_count: dict[tuple[int, int], int] = {}
        tp = fn = fp = 0
        for f in frames:
            pairs = match_frame_iou(f.iou, alpha)
            tp += len(pairs)
            fn += len(f.gt_ids) - len(pairs)
            fp += len(f.pred_ids) - len(pairs)
            for i, j in pairs:
                key = (f.gt_ids[i], f.pred_ids[j])
                pair_count[key] = pair_count.get(key, 0) + 1
        ass = 0.0
        for (g, p), m in sorted(pair_count.items()):
            ass += m * m / (gt_count[g] + pr_count[p] - m)
        c.tp[k], c.fn[k], c.fp[k], c.ass_sum[k] = tp, fn, fp, ass
    return c


def clear_counts(frames: list[FrameData], match_iou: float = DEFAULT_MATCH_IOU) -> ClearCounts:
    c = ClearCounts()
    prev: dict[int, int] = {}
    last: dict[int, int] = {}
    for f in frames:
        ng, npr = len(f.gt_ids), len(f.pred_ids)
        gi = {g: i for i, g in enumerate(f.gt_ids)}
        pj = {p: j for j, p in enumerate(f.pred_ids)}
        pairs = []
        # keep last frame's correspondences that are still valid
        for g, p in prev.items():
            if g in gi and p in pj and f.iou[gi[g], pj[p]] >= match_iou:
                pairs.append((gi[g], pj[p]))
        used_r = {i for i, _ in pairs}
        used_c = {j for _, j in pairs}
        rr = [i for i in range(ng) if i not in used_r]
        cc = [j for j in range(npr) if j not in used_c]
        if rr and cc:
            sub = f.iou[np.ix_(rr, cc)]
            for a, b in match_frame_iou(sub, match_iou):
                pairs.append((rr[a], cc[b]))
        c.tp += len(pairs)
        c.fn += ng - len(pairs)
        c.fp += npr - len(pairs)
        cur = {}
        for i, j in pairs:
            g, p = f.gt_ids[i], f.pred_ids[j]
            if g in last and last[g] != p:
                c.idsw += 1
            last[g] = p
            cur[g] = p
        prev = cur
    return c


def id_counts(frames: list[FrameData], match_iou: float = DEFAULT_MATCH_IOU) -> IdCounts:
    gts = sorted({g for f in frames for g in f.gt_ids})
    prs = sorted({p for f in frames for p in f.pred_ids})
    n_gt = sum(len(f.gt_ids) for f in frames)
    n_pr = sum(len(f.pred_ids) for f in frames)
    if not gts or not prs:
        return IdCounts(0, n_gt, n_pr)
    gi = {g: i for i, g in enumerate(gts)}
    pj = {p: j for j, p in enumerate(prs)}
    w = np.zeros((len(gts), len(prs)))
    for f in frames:
        if f.iou.size == 0:
            continue
        ii, jj = np.nonzero(f.iou >= match_iou)
        for i, j in zip(ii, jj):
            w[gi[f.gt_ids[i]], pj[f.pred_ids[j]]] += 1
    idtp = int(sum(w[i, j] for i, j in hungarian(w, maximize=True)))
    return IdCounts(idtp, n_gt - idtp, n_pr - idtp)


# --------------------------------------------------------------------------
# public per-sequence entry points


def hota(gt: VideoSequence, pred: VideoSequence) -> tuple[float, float, float]:
    """``(HOTA, DetA, AssA)``, each averaged over IoU thresholds 0.05 ... 0.95."""
    return hota_counts(frame_data(gt, pred)).summary()


def clear_mot(gt: VideoSequence, pred: VideoSequence, match_iou: float = DEFAULT_MATCH_IOU):
    """``(MOTA, IDSW, FP, FN)``."""
    c = clear_counts(frame_data(gt, pred), match_iou)
    return c.mota, c.idsw, c.fp, c.fn


def idf1(gt: VideoSequence, pred: VideoSequence, match_iou: float = DEFAULT_MATCH_IOU) -> float:
    return id_counts(frame_data(gt, pred), match_iou).idf1


@dataclass
class SequenceCounts:
    hota: HotaCounts
    clear: ClearCounts
    ident: IdCounts
    empty: bool = False

    def __add__(self, o: "SequenceCounts") -> "SequenceCounts":
        return SequenceCounts(self.hota + o.hota, self.clear + o.clear, self.ident + o.ident,
                              self.empty and o.empty)

    def metrics(self) -> dict:
        h, d, a = self.hota.summary()
        return {
            "HOTA": h,
            "DetA": d,
            "AssA": a,
            "MOTA": self.clear.mota,
            "IDF1": self.ident.idf1,
            "IDSW": self.clear.idsw,
            "TP": self.clear.tp,
            "FP": self.clear.fp,
            "FN": self.clear.fn,
        }


def sequence_counts(gt: VideoSequence, pred: VideoSequence,
                    match_iou: float = DEFAULT_MATCH_IOU) -> SequenceCounts:
    frames = frame_data(gt, pred)
    empty = not any(f.gt_ids or f.pred_ids for f in frames)
    if empty:
        warnings.warn(f"sequence {gt.id} has no GT and no predictions; scored 0",
                      ConsistencyWarning, stacklevel=2)
    return SequenceCounts(hota_counts(frames), clear_counts(frames, match_iou),
                          id_counts(frames, match_iou), empty)


@dataclass
class EvalReport:
    sequences: dict[str, dict]
    combined: dict

    def to_dict(self) -> dict:
        return {"sequences": self.sequences, "combined": self.combined}

    def to_table(self) -> str:
        cols = ["HOTA", "DetA", "AssA", "MOTA", "IDF1", "IDSW", "TP", "FP", "FN"]
        names = list(self.sequences) + ["COMBINED"]
        rows = [self.sequences[n] for n in self.sequences] + [self.combined]
        wid = max(8, *(len(n) for n in names))
        lines = ["Sequence".ljust(wid) + "".join(c.rjust(9) for c in cols)]
        for name, r in zip(names, rows):
            cells = []
            for c in cols:
                v = r[c]
                cells.append((f"{v:.4f}" if isinstance(v, float) else str(v)).rjust(9))
            lines.append(name.ljust(wid) + "".join(cells))
        return "\n".join(lines)


def evaluate(gts: Iterable[VideoSequence], preds: Iterable[VideoSequence],
             match_iou: float = DEFAULT_MATCH_IOU, jobs: int = 1) -> EvalReport:
    gts = list(gts)
    pred_by_id = {p.id: p for p in preds}
    gt_ids = [g.id for g in gts]
    missing = [i for i in gt_ids if i not in pred_by_id]
    extra = sorted(set(pred_by_id) - set(gt_ids))
    if missing or extra:
        raise UnknownSequenceId(
            f"sequence ids do not align (missing predictions: {missing}, unknown: {extra})"
        )
    pairs = [(g, pred_by_id[g.id]) for g in gts]
    if jobs > 1 and len(pairs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            counts = list(ex.map(sequence_counts, [g for g, _ in pairs], [p for _, p in pairs],
                                 [match_iou] * len(pairs)))
    else:
        counts = [sequence_counts(g, p, match_iou) for g, p in pairs]
    per_seq = {g.id: c.metrics() for (g, _), c in zip(pairs, counts)}
    total = counts[0] if counts else SequenceCounts(HotaCounts(), ClearCounts(), IdCounts(), True)
    for c in counts[1:]:
        total = total + c
    return EvalReport(per_seq, total.metrics())

