import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackkit.errors import ConfigError, MissingBorderMask
from trackkit.mask_ops import Box, centroid, decode_rle, encode_rle
from trackkit.postprocess import (
    MergeConfig,
    interpolate_gaps,
    merge_candidates,
    merge_tracklets,
    smooth_tracklet_masks,
)
from trackkit.track import TrackEntry, Tracklet

from conftest import rect_mask


def tl(tid, frames, box=Box(0, 0, 10, 10), mask=None, score=0.9):
    return Tracklet(tid, [TrackEntry(f, box, mask, score) for f in frames])


def entry(frame, m, score=0.9):
    from trackkit.mask_ops import box_from_mask

    return TrackEntry(frame, box_from_mask(m), encode_rle(m), score)


def test_config_validation():
    with pytest.raises(ConfigError):
        MergeConfig(delta_min=5, delta_max=5)
    with pytest.raises(ConfigError):
        MergeConfig(theta=1.5)
    assert (MergeConfig().delta_min, MergeConfig().delta_max, MergeConfig().theta) == (-15, 15, 0.1)


class TestMerge:
    def test_empty(self):
        assert merge_tracklets([]) == []

    def test_merge_iou_half(self):
        a = tl(1, range(0, 11), Box(0, 0, 12, 10))
        # shifted by 4 px: IoU = 8*10 / (16*10) = 0.5
        b = tl(2, range(12, 20), Box(4, 0, 12, 10))
        (m,) = merge_tracklets([a, b])
        assert m.id == 1 and m.frames() == list(range(0, 11)) + list(range(12, 20))

    def test_low_iou_not_merged(self):
        a = tl(1, range(0, 11), Box(0, 0, 20, 10))
        # IoU 1/19 ~ 0.053 < 0.1
        b = tl(2, range(12, 20), Box(19, 0, 20, 10))
        assert len(merge_tracklets([a, b])) == 2

    def test_gap_window(self):
        a = tl(1, range(0, 5))
        assert len(merge_tracklets([a, tl(2, range(19, 25))])) == 1  # gap 15 allowed
        assert len(merge_tracklets([a, tl(2, range(20, 25))])) == 2  # gap 16 rejected

    def test_overlap_earlier_wins(self):
        a = tl(1, range(0, 10), score=0.9)
        b = tl(2, range(7, 15), score=0.5)
        (m,) = merge_tracklets([a, b])
        assert all(e.score == 0.9 for e in m.entries if e.frame_index < 10)
        assert m.frames() == list(range(15))

    def test_single_pass_no_chain(self):
        a, b, c = tl(1, range(0, 5)), tl(2, range(6, 10)), tl(3, range(11, 15))
        out = merge_tracklets([a, b, c])
        assert [t.id for t in out] == [1, 3]

    @settings(max_examples=40)
    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(1, 10), st.integers(0, 3)), max_size=6),
           st.randoms())
    def test_properties(self, specs, rnd):
        tls = [tl(k + 1, range(s, s + n), Box(10 * x, 0, 10, 10)) for k, (s, n, x) in enumerate(specs)]
        out = merge_tracklets(tls)
        assert len(out) <= len(tls)
        assert {t.id for t in out} <= {t.id for t in tls}
        shuffled = list(tls)
        rnd.shuffle(shuffled)
        again = merge_tracklets(shuffled)
        assert [(t.id, t.frames()) for t in again] == [(t.id, t.frames()) for t in out]

    def test_candidates_sorted(self):
        a = tl(1, range(0, 5), Box(0, 0, 10, 10))
        b = tl(2, range(6, 9), Box(0, 0, 10, 10))
        c = tl(3, range(6, 9), Box(2, 0, 10, 10))
        ious = [c[0] for c in merge_candidates([a, b, c], MergeConfig())]
        assert ious == sorted(ious, reverse=True)


class TestInterpolate:
    def test_no_gap(self):
        m = rect_mask(20, 20, 5, 5, 4, 4)
        t = Tracklet(1, [entry(0, m), entry(1, m)])
        assert interpolate_gaps(t).frames() == [0, 1]

    def test_hand_example(self):
        m0 = rect_mask(30, 30, 8, 8, 5, 5)  # centroid (10, 10)
        m4 = rect_mask(30, 30, 8, 12, 5, 5)  # centroid (14, 10)
        assert centroid(m0) == (10.0, 10.0) and centroid(m4) == (14.0, 10.0)
        out = interpolate_gaps(Tracklet(1, [entry(0, m0, 0.8), entry(4, m4, 0.6)]))
        assert out.frames() == [0, 1, 2, 3, 4]
        mid = out.entries[2]
        np.testing.assert_array_equal(decode_rle(mid.mask), rect_mask(30, 30, 8, 10, 5, 5))
        assert mid.interpolated and mid.score == 0.6
        assert mid.box == Box(10, 8, 5, 5)

    def test_missing_border_mask(self):
        t = Tracklet(1, [TrackEntry(0, Box(0, 0, 4, 4), None, 0.9), TrackEntry(3, Box(0, 0, 4, 4), None, 0.9)])
        with pytest.warns(MissingBorderMask):
            out = interpolate_gaps(t)
        assert out.frames() == [0, 3]

    def test_random_gaps_collinear(self):
        rnd = random.Random(7)
        for _ in range(50):
            h = w = 64
            m1 = rect_mask(h, w, rnd.randint(5, 30), rnd.randint(5, 30), rnd.randint(3, 12), rnd.randint(3, 12))
            m2 = rect_mask(h, w, rnd.randint(5, 30), rnd.randint(5, 30), rnd.randint(3, 12), rnd.randint(3, 12))
            t1, t2 = 0, rnd.randint(2, 8)
            out = interpolate_gaps(Tracklet(1, [entry(t1, m1), entry(t2, m2)]))
            assert out.frames() == list(range(t1, t2 + 1))
            c1, c2 = np.array(centroid(m1)), np.array(centroid(m2))
            for e in out.entries[1:-1]:
                a = (e.frame_index - t1) / (t2 - t1)
                target = (1 - a) * c1 + a * c2
                assert np.all(np.abs(np.array(centroid(decode_rle(e.mask))) - target) <= 1.0)


class TestSmooth:
    def test_zero_iterations(self):
        m = rect_mask(20, 20, 5, 5, 4, 4)
        t = Tracklet(1, [entry(0, m)])
        assert smooth_tracklet_masks(t, 0, 0) is t

    def test_empty_mask_unchanged(self):
        e = TrackEntry(0, Box(0, 0, 1, 1), encode_rle(np.zeros((5, 5), bool)), 0.9)
        out = smooth_tracklet_masks(Tracklet(1, [e]))
        assert out.entries[0] == e

    def test_hole_filled_and_box_updated(self):
        m = rect_mask(30, 30, 5, 5, 10, 10)
        m[9, 9] = False
        out = smooth_tracklet_masks(Tracklet(1, [entry(0, m)]))
        sm = decode_rle(out.entries[0].mask)
        assert sm[9, 9]
        assert out.entries[0].box.area >= Box(5, 5, 10, 10).area
