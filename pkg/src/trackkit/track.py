"""Tracking-by-detection: constant-velocity Kalman motion, two-stage
confidence-split association and track lifecycle management."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .assign import fused_iou_cost, hungarian, iou_matrix
from .detect import Detection
from .errors import ConfigError, NonMonotonicFrame
from .mask_ops import Box, RleMask


@dataclass(frozen=True)
class KalmanNoise:
    """Noise scalars of the (cx, cy, aspect, h) constant-velocity filter.

    Position and velocity standard deviations scale with box height.
    """

    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    init_position_scale: float = 2.0
    init_velocity_scale: float = 10.0
    aspect_std: float = 1e-2
    aspect_velocity_std: float = 1e-5
    aspect_measure_std: float = 1e-1
    measure_position_scale: float = 1.0


@dataclass(frozen=True)
class TrackerConfig:
    track_high_thresh: float = 0.6
    track_low_thresh: float = 0.1
    new_track_thresh: float = 0.7
    match_thresh: float = 0.8
    track_buffer: int = 60
    min_hits: int = 1
    motion: str = "constant_velocity"
    kalman: KalmanNoise = field(default_factory=KalmanNoise)

    def __post_init__(self):
        if not 0.0 <= self.track_low_thresh <= self.track_high_thresh <= 1.0:
            raise ConfigError("need 0 <= track_low_thresh <= track_high_thresh <= 1")
        if not 0.0 <= self.new_track_thresh <= 1.0:
            raise ConfigError("new_track_thresh must lie in [0, 1]")
        if not 0.0 <= self.match_thresh <= 1.0:
            raise ConfigError("match_thresh must lie in [0, 1]")
        if self.track_buffer < 1:
            raise ConfigError("track_buffer must be >= 1")
        if self.min_hits < 1:
            raise ConfigError("min_hits must be >= 1")
        if self.motion not in ("constant_velocity", "static"):
            raise ConfigError(f"unknown motion model {self.motion!r}")


class KalmanXYAH:
    """Linear Kalman filter over ``(cx, cy, a, h, vcx, vcy, va, vh)``."""

    def __init__(self, noise: KalmanNoise = KalmanNoise()):
        self.noise = noise
        self._motion = np.eye(8)
        self._motion[:4, 4:] = np.eye(4)
        self._update = np.eye(4, 8)

    def initiate(self, z: np.ndarray):
        n = self.noise
        h = z[3]
        mean = np.r_[z, np.zeros(4)]
        std = [
            n.init_position_scale * n.std_weight_position * h,
            n.init_position_scale * n.std_weight_position * h,
            n.aspect_std,
            n.init_position_scale * n.std_weight_position * h,
            n.init_velocity_scale * n.std_weight_velocity * h,
            n.init_velocity_scale * n.std_weight_velocity * h,
            n.aspect_velocity_std,
            n.init_velocity_scale * n.std_weight_velocity * h,
        ]
        return mean, np.diag(np.square(std))

    def predict(self, mean, cov):
        n = self.noise
        h = mean[3]
        std = [
            n.std_weight_position * h,
            n.std_weight_position * h,
            n.aspect_std,
            n.std_weight_position * h,
            n.std_weight_velocity * h,
            n.std_weight_velocity * h,
            n.aspect_velocity_std,
            n.std_weight_velocity * h,
        ]
        mean = self._motion @ mean
        cov = self._motion @ cov @ self._motion.T + np.diag(np.square(std))
        return mean, cov

    def update(self, mean, cov, z):
        n = self.noise
        h = mean[3]
        std = [
            n.measure_position_scale * n.std_weight_position * h,
            n.measure_position_scale * n.std_weight_position * h,
            n.aspect_measure_std,
            n.measure_position_scale * n.std_weight_position * h,
        ]
        proj_mean = self._update @ mean
        proj_cov = self._update @ cov @ self._update.T + np.diag(np.square(std))
        gain = np.linalg.solve(proj_cov, self._update @ cov).T
        mean = mean + gain @ (z - proj_mean)
        cov = cov - gain @ proj_cov @ gain.T
        return mean, cov


def box_to_xyah(b: Box) -> np.ndarray:
    cx, cy = b.center
    return np.array([cx, cy, b.w / b.h, b.h])


def xyah_to_box(v) -> Box:
    cx, cy, a, h = (float(q) for q in v[:4])
    h = max(h, 1e-3)
    w = max(a * h, 1e-3)
    return Box(cx - w / 2.0, cy - h / 2.0, w, h)


class TrackState(str, Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class TrackEntry:
    frame_index: int
    box: Box
    mask: Optional[RleMask]
    score: float
    interpolated: bool = False


@dataclass
class Track:
    id: int
    state: TrackState
    hits: int
    frames_since_update: int
    mean: np.ndarray
    covariance: np.ndarray
    last_box: Box
    history: list[TrackEntry] = field(default_factory=list)
    activated_at: Optional[int] = None


@dataclass
class Tracklet:
    id: int
    entries: list[TrackEntry]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a tracklet needs at least one entry")
        self.entries = sorted(self.entries, key=lambda e: e.frame_index)

    @property
    def start(self) -> int:
        return self.entries[0].frame_index

    @property
    def end(self) -> int:
        return self.entries[-1].frame_index

    @property
    def first_box(self) -> Box:
        return self.entries[0].box

    @property
    def last_box(self) -> Box:
        return self.entries[-1].box

    def frames(self) -> list[int]:
        return [e.frame_index for e in self.entries]


class Tracker:
    """Stateful per-sequence tracker.

    Detections are split by confidence. High-confidence detections are
    matched first to active and lost tracks on a confidence-weighted IoU
    cost; leftover active tracks are then matched to low-confidence
    detections on plain IoU; finally tentative tracks claim remaining
    high-confidence detections. One instance per sequence, not thread-safe.
    """

    def __init__(self, config: TrackerConfig = TrackerConfig()):
        self.config = config
        self.kf = KalmanXYAH(config.kalman)
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: Optional[int] = None

    # -- motion -----------------------------------------------------------
    def motion_predict(self, track: Track) -> Box:
        """Advance ``track`` one step and return its predicted box."""
        if self.config.motion == "static":
            return track.last_box
        track.mean, track.covariance = self.kf.predict(track.mean, track.covariance)
        return xyah_to_box(track.mean)

    def _spawn(self, det: Detection, frame: int) -> Track:
        mean, cov = self.kf.initiate(box_to_xyah(det.box))
        t = Track(
            id=self._next_id,
            state=TrackState.TENTATIVE,
            hits=1,
            frames_since_update=0,
            mean=mean,
            covariance=cov,
            last_box=det.box,
        )
        self._next_id += 1
        t.history.append(TrackEntry(frame, det.box, det.mask, det.score))
        if t.hits >= self.config.min_hits:
            t.state = TrackState.ACTIVE
            t.activated_at = frame
        self.tracks.append(t)
        return t

    def _apply(self, track: Track, det: Detection, frame: int) -> None:
        if self.config.motion != "static":
            track.mean, track.covariance = self.kf.update(
                track.mean, track.covariance, box_to_xyah(det.box)
            )
        track.last_box = det.box
        track.hits += 1
        track.frames_since_update = 0
        track.history.append(TrackEntry(frame, det.box, det.mask, det.score))
        if track.state == TrackState.LOST:
            track.state = TrackState.ACTIVE
        elif track.state == TrackState.TENTATIVE and track.hits >= self.config.min_hits:
            track.state = TrackState.ACTIVE
            track.activated_at = frame

    def _match(self, tracks, boxes, dets, fused: bool):
        if not tracks or not dets:
            return [], list(range(len(tracks))), list(range(len(dets)))
        if fused:
            cost = fused_iou_cost(boxes, dets).values
        else:
            cost = 1.0 - iou_matrix(boxes, [d.box for d in dets])
        gate = self.config.match_thresh
        pairs = [(i, j) for i, j in hungarian(cost) if cost[i, j] <= gate]
        mi = {i for i, _ in pairs}
        mj = {j for _, j in pairs}
        return (
            pairs,
            [i for i in range(len(tracks)) if i not in mi],
            [j for j in range(len(dets)) if j not in mj],
        )

    # -- main loop ----------------------------------------------------------
    def step(self, frame_index: int, dets: list[Detection]) -> list[tuple[int, Detection]]:
        cfg = self.config
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise NonMonotonicFrame(
                f"frame {frame_index} does not follow previous frame {self._last_frame}"
            )
        self._last_frame = frame_index

        high = [d for d in dets if d.score >= cfg.track_high_thresh]
        low = [d for d in dets if cfg.track_low_thresh <= d.score < cfg.track_high_thresh]

        live = [t for t in self.tracks if t.state != TrackState.REMOVED]
        predicted = {t.id: self.motion_predict(t) for t in live}
        matched: dict[int, Detection] = {}

        # stage 1: active + lost vs high pool, confidence-weighted IoU
        pool1 = [t for t in live if t.state in (TrackState.ACTIVE, TrackState.LOST)]
        pairs, un_t, un_high = self._match(pool1, [predicted[t.id] for t in pool1], high, fused=True)
        for i, j in pairs:
            self._apply(pool1[i], high[j], frame_index)
            matched[pool1[i].id] = high[j]

        # stage 2: still-unmatched active tracks vs low pool, plain IoU
        pool2 = [pool1[i] for i in un_t if pool1[i].state == TrackState.ACTIVE]
        pairs, _, _ = self._match(pool2, [predicted[t.id] for t in pool2], low, fused=False)
        for i, j in pairs:
            self._apply(pool2[i], low[j], frame_index)
            matched[pool2[i].id] = low[j]

        # stage 3: tentative tracks vs remaining high detections
        rest = [high[j] for j in un_high]
        pool3 = [t for t in live if t.state == TrackState.TENTATIVE]
        pairs, _, un_rest = self._match(pool3, [predicted[t.id] for t in pool3], rest, fused=True)
        for i, j in pairs:
            self._apply(pool3[i], rest[j], frame_index)
            matched[pool3[i].id] = rest[j]

        # lifecycle for unmatched tracks
        for t in live:
            if t.id in matched:
                continue
            t.frames_since_update += 1
            if t.state == TrackState.TENTATIVE:
                t.state = TrackState.REMOVED
            elif t.state == TrackState.ACTIVE:
                t.state = TrackState.LOST
            if t.state == TrackState.LOST and t.frames_since_update > cfg.track_buffer:
                t.state = TrackState.REMOVED

        for j in un_rest:
            if rest[j].score >= cfg.new_track_thresh:
                t = self._spawn(rest[j], frame_index)
                matched[t.id] = rest[j]

        return [
            (t.id, matched[t.id])
            for t in self.tracks
            if t.id in matched and t.state == TrackState.ACTIVE
        ]

    def finalize(self) -> list[Tracklet]:
        """Export every track that was ever active, from its activation frame on."""
        out = []
        for t in self.tracks:
            if t.activated_at is None:
                continue
            entries = [e for e in t.history if e.frame_index >= t.activated_at]
            out.append(Tracklet(t.id, entries))
        return out
