"""Model-free multi-object tracking and segmentation toolkit.

Covers the non-neural parts of a mask-level tracking-by-detection pipeline:
RLE mask codecs, detection fusion, two-stage association, tracklet merging
and gap interpolation, event-stream denoising and voxelization, contrast
enhancement, and HOTA / CLEAR-MOT / IDF1 evaluation.
"""

from .assign import CostMatrix, fused_iou_cost, greedy_assign, hungarian
from .detect import AugTransform, Detection, Modality, box_iou, fuse_tta, inverse_map_box, map_box, nms
from .enhance import clahe, hist_equalize
from .events import (
    EVENT_DTYPE,
    EventWindow,
    GmmFit,
    VoxelGrid,
    fit_count_gmm,
    make_events,
    select_events,
    voxelize,
    window_at,
)
from .mask_ops import (
    Box,
    RleMask,
    box_from_mask,
    centroid,
    decode_rle,
    encode_rle,
    mask_iou,
    morph_smooth,
    rle_from_string,
    rle_to_string,
    translate_mask,
)
from .metrics import EvalReport, Instance, VideoSequence, clear_mot, evaluate, hota, idf1, match_frame
from .postprocess import MergeConfig, interpolate_gaps, merge_tracklets, smooth_tracklet_masks
from .track import Tracker, TrackerConfig, Tracklet

__version__ = "0.1.0"
