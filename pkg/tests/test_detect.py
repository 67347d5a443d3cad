import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackkit.detect import (
    AugTransform,
    Detection,
    box_iou,
    check_mask_consistency,
    fuse_tta,
    inverse_map_box,
    map_box,
    nms,
)
from trackkit.errors import ConsistencyWarning, NoReferenceGroup
from trackkit.mask_ops import Box, box_mask, encode_rle

IDENT = AugTransform("identity", (100, 100))

boxes = st.builds(
    Box,
    st.integers(0, 60),
    st.integers(0, 60),
    st.integers(1, 30),
    st.integers(1, 30),
)


def det(box, score=0.9, frame=0):
    return Detection(frame, box, score)


def test_box_iou_examples():
    assert box_iou(Box(0, 0, 2, 2), Box(0, 0, 2, 2)) == 1.0
    assert box_iou(Box(0, 0, 2, 2), Box(5, 5, 2, 2)) == 0.0
    assert box_iou(Box(0, 0, 2, 2), Box(1, 0, 2, 2)) == pytest.approx(1 / 3)


def test_score_range():
    with pytest.raises(ValueError):
        Detection(0, Box(0, 0, 1, 1), 1.5)


def test_mask_consistency_warns():
    m = box_mask(Box(0, 0, 20, 20), 32, 32)
    d = Detection(0, Box(0, 0, 5, 5), 0.9, encode_rle(m))
    with pytest.warns(ConsistencyWarning):
        assert not check_mask_consistency(d)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_mask_consistency(Detection(0, Box(0, 0, 20, 20), 0.9, encode_rle(m)))


class TestNms:
    def test_duplicates(self):
        a, b = det(Box(0, 0, 10, 10), 0.9), det(Box(0, 0, 10, 10), 0.8)
        assert nms([b, a], 0.5) == [a]

    def test_disjoint(self):
        a, b = det(Box(0, 0, 10, 10), 0.9), det(Box(50, 50, 10, 10), 0.8)
        assert set(nms([a, b], 0.5)) == {a, b}

    def test_chain(self):
        # A~B and B~C overlap at IoU 0.6, A~C only 3/13
        a, b, c = det(Box(0, 0, 8, 8), 0.9), det(Box(2, 0, 8, 8), 0.8), det(Box(4, 0, 8, 8), 0.7)
        assert box_iou(a.box, b.box) == pytest.approx(0.6)
        assert box_iou(b.box, c.box) == pytest.approx(0.6)
        assert box_iou(a.box, c.box) < 0.5
        assert nms([c, b, a], 0.5) == [a, c]

    def test_rejects_mixed_frames(self):
        with pytest.raises(ValueError):
            nms([det(Box(0, 0, 2, 2), frame=0), det(Box(0, 0, 2, 2), frame=1)], 0.5)

    @given(st.lists(st.tuples(boxes, st.floats(0, 1)), max_size=12), st.floats(0.1, 0.9))
    def test_properties(self, items, thr):
        dets = [det(b, s) for b, s in items]
        kept = nms(dets, thr)
        assert all(k in dets for k in kept)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                assert box_iou(a.box, b.box) <= thr
        assert nms(kept, thr) == kept


class TestTransforms:
    def test_identity(self):
        b = Box(3, 4, 5, 6)
        assert map_box(b, IDENT) == b == inverse_map_box(b, IDENT)

    def test_flip(self):
        t = AugTransform("horizontal_flip", (10, 10))
        assert map_box(Box(0, 0, 2, 2), t) == Box(8, 0, 2, 2)

    def test_scale_inverse(self):
        t = AugTransform("scale", (10, 10), factor=2.0)
        assert inverse_map_box(Box(2, 2, 4, 4), t) == Box(1, 1, 2, 2)

    @given(boxes, st.sampled_from([0.5, 1.5, 2.0, 4.0]))
    def test_exact_round_trips(self, b, factor):
        for t in (AugTransform("horizontal_flip", (100, 100)), AugTransform("scale", (100, 100), factor=factor)):
            assert inverse_map_box(map_box(b, t), t) == b

    @given(
        st.integers(30, 60), st.integers(30, 60), st.integers(2, 25), st.integers(2, 25),
        st.floats(-1.0, 1.0),
    )
    def test_rotate_round_trip_within_one_pixel(self, x, y, w, h, deg):
        t = AugTransform("rotate", (120, 120), degrees=deg)
        b = Box(x, y, w, h)
        back = inverse_map_box(map_box(b, t), t)
        assert np.allclose(back.to_list(), b.to_list(), atol=1.0)

    def test_rotate_quarter_turn_of_centered_square(self):
        t = AugTransform("rotate", (20, 20), degrees=45)
        out = map_box(Box(5, 5, 10, 10), t)
        assert out.center == pytest.approx((10.0, 10.0))
        assert out.w == pytest.approx(10 * np.sqrt(2))


class TestFuse:
    def test_single_identity_group(self):
        dets = [det(Box(0, 0, 10, 10)), det(Box(30, 30, 5, 5), 0.7)]
        assert fuse_tta([(IDENT, dets)]) == dets

    def test_needs_reference(self):
        with pytest.raises(NoReferenceGroup):
            fuse_tta([(AugTransform("scale", (10, 10), factor=2.0), [])])

    def test_same_box_same_score(self):
        flip = AugTransform("horizontal_flip", (100, 100))
        ref = det(Box(10, 10, 20, 20), 0.6)
        aug = det(map_box(ref.box, flip), 0.6)
        (out,) = fuse_tta([(IDENT, [ref]), (flip, [aug])])
        assert out.box == ref.box and out.score == 0.6

    def test_low_iou_not_fused(self):
        ref = det(Box(0, 0, 10, 10), 0.6)
        other = det(Box(6, 0, 10, 10), 0.9)  # IoU 4/16 = 0.25
        assert box_iou(ref.box, other.box) == pytest.approx(0.25)
        out = fuse_tta([(IDENT, [ref]), (AugTransform("scale", (100, 100), factor=1.0), [other])])
        assert out == [ref]

    def test_area_ratio_gate(self):
        ref = det(Box(0, 0, 10, 10), 0.6)
        big = det(Box(0, 0, 10, 25), 0.9)  # IoU 0.4, area ratio 2.5
        s = AugTransform("scale", (100, 100), factor=1.0)
        assert fuse_tta([(IDENT, [ref]), (s, [big])]) == [ref]
        assert fuse_tta([(IDENT, [ref]), (s, [big])], area_ratio_bounds=(0.5, 3.0))[0].score == 0.9

    def test_weighted_average(self):
        ref = det(Box(0, 0, 10, 10), 0.75)
        aug = det(Box(2, 0, 10, 10), 0.25)
        s = AugTransform("scale", (100, 100), factor=1.0)
        (out,) = fuse_tta([(IDENT, [ref]), (s, [aug])])
        assert out.box.x == pytest.approx(0.5) and out.score == 0.75

    @given(st.lists(boxes, min_size=1, max_size=5, unique=True), st.integers(1, 4))
    def test_identical_copies_keep_reference(self, bs, k):
        dets = [det(b, 0.8) for b in bs]
        s = AugTransform("scale", (100, 100), factor=1.0)
        out = fuse_tta([(IDENT, dets)] + [(s, list(dets)) for _ in range(k)])
        assert [d.box for d in out] == bs
