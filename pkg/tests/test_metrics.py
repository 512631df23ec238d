import random

import pytest

from geotag_facade.metrics import (EvalBox, average_precision,
                                   coarse_accuracy, coco_summary, iou_1d,
                                   iou_2d)

from oracle_utils import brute_iou_1d, brute_iou_2d

W = 2048.0


class TestIou1d:
    def test_identical(self):
        assert iou_1d((100, 200), (100, 200), W) == 1.0

    def test_partial(self):
        assert iou_1d((100, 200), (150, 250), W) == pytest.approx(50 / 150)

    def test_disjoint(self):
        assert iou_1d((0, 10), (500, 600), W) == 0.0

    def test_wrapped_vs_box_at_seam(self):
        # interval [2000, 2048) u [0, 100), box [0, 100]
        assert iou_1d((2000, 100), (0, 100), W) == pytest.approx(100 / 148)

    def test_overflow_representation(self):
        # hi > width means the same wrapped interval
        assert iou_1d((2000, 2148), (0, 100), W) == pytest.approx(100 / 148)

    def test_degenerate_union_raises(self):
        with pytest.raises(ValueError):
            iou_1d((5, 5), (9, 9), W)

    def test_symmetry_and_bounds_random(self):
        rng = random.Random(1)
        for _ in range(2000):
            a = (rng.uniform(0, W), rng.uniform(0, W))
            b = (rng.uniform(0, W), rng.uniform(0, W))
            if a[0] == a[1] and b[0] == b[1]:
                continue
            v1, v2 = iou_1d(a, b, W), iou_1d(b, a, W)
            assert v1 == pytest.approx(v2)
            assert 0.0 <= v1 <= 1.0
            assert v1 == pytest.approx(brute_iou_1d(*a, *b, W))


class TestIou2d:
    def test_identical(self):
        assert iou_2d((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_half_overlap(self):
        # each box shares half its area, union is 1.5x one box
        assert iou_2d((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_translated_both_axes(self):
        v = iou_2d((0, 0, 10, 10), (2, 2, 10, 10))
        assert v == pytest.approx(0.64 / 1.36)
        assert v == pytest.approx(brute_iou_2d((0, 0, 10, 10), (2, 2, 10, 10)))

    def test_wrap_across_seam(self):
        a = (2000, 100, 148, 50)  # wraps: [2000, 2148] = [2000, 2048)u[0,100)
        b = (0, 100, 100, 50)
        v = iou_2d(a, b, width=W)
        assert v == pytest.approx(brute_iou_2d(a, b, width=W))
        assert v == pytest.approx(100 / 148)

    def test_non_positive_box_raises(self):
        with pytest.raises(ValueError):
            iou_2d((0, 0, 0, 10), (0, 0, 10, 10))

    def test_random_against_oracle(self):
        rng = random.Random(2)
        for _ in range(1000):
            a = (rng.uniform(0, W), rng.uniform(0, 900), rng.uniform(1, 400),
                 rng.uniform(1, 100))
            b = (rng.uniform(0, W), rng.uniform(0, 900), rng.uniform(1, 400),
                 rng.uniform(1, 100))
            assert iou_2d(a, b, width=W) == pytest.approx(
                brute_iou_2d(a, b, width=W))


def box(pano, x, cat, score=None, y=100.0, w=100.0, h=200.0):
    return EvalBox(pano_id=pano, x=x, y=y, w=w, h=h, category=cat,
                   score=score)


class TestCoarseAccuracy:
    def test_exact_match_is_one(self):
        gt = [box("a", 0, 1), box("a", 500, 2)]
        rep = coarse_accuracy(list(gt), gt)
        assert rep.accuracy == 1.0
        assert rep.to_dict()["per_category"]["1"] == {"correct": 1, "total": 1}

    def test_shifted_to_iou_07_fails_at_08(self):
        gt = [box("a", 0, 1), box("a", 500, 2)]
        shift = 300.0 / 17.0  # gives exactly IoU 0.7 for w=100
        coarse = [box("a", 0, 1), box("a", 500 + shift, 2)]
        assert iou_2d(coarse[1], gt[1]) == pytest.approx(0.7)
        rep = coarse_accuracy(coarse, gt)
        assert rep.accuracy == 0.5

    def test_good_box_wrong_label_incorrect(self):
        gt = [box("a", 0, 1)]
        coarse = [box("a", 1, 2)]  # IoU ~0.95+, wrong category
        assert iou_2d(coarse[0], gt[0]) > 0.9
        rep = coarse_accuracy(coarse, gt)
        assert rep.correct == 0 and rep.accuracy == 0.0

    def test_empty_coarse_undefined(self):
        rep = coarse_accuracy([], [box("a", 0, 1)])
        assert rep.accuracy is None
        assert rep.to_dict()["accuracy"] is None

    def test_one_to_one_assignment(self):
        # two coarse boxes over one gt: only one may count
        gt = [box("a", 0, 1)]
        coarse = [box("a", 0, 1), box("a", 1, 1)]
        rep = coarse_accuracy(coarse, gt)
        assert rep.correct == 1 and rep.total == 2

    def test_permutation_invariant(self):
        rng = random.Random(3)
        gt = [box("a", i * 150, 1 + i % 3) for i in range(6)]
        coarse = [box("a", i * 150 + rng.uniform(-5, 5), 1 + i % 3)
                  for i in range(6)]
        base = coarse_accuracy(coarse, gt).accuracy
        for _ in range(5):
            c2, g2 = coarse[:], gt[:]
            rng.shuffle(c2)
            rng.shuffle(g2)
            assert coarse_accuracy(c2, g2).accuracy == base


class TestAveragePrecision:
    def test_single_perfect(self):
        gt = [box("a", 0, 1)]
        preds = [box("a", 0, 1, score=0.9)]
        rep = average_precision(preds, gt, 0.5)
        assert rep.per_category[1] == 1.0 and rep.mean == 1.0

    def test_tp_fp_tp_gives_0835(self):
        gt = [box("a", 0, 1), box("a", 1000, 1)]
        preds = [box("a", 0, 1, score=0.9),      # TP
                 box("a", 500, 1, score=0.8),    # FP, overlaps nothing
                 box("a", 1000, 1, score=0.7)]   # TP
        rep = average_precision(preds, gt, 0.5)
        assert rep.per_category[1] == pytest.approx(0.834983, abs=1e-4)

    def test_all_below_iou_threshold(self):
        gt = [box("a", 0, 1)]
        preds = [box("a", 90, 1, score=0.9)]  # IoU 10/190
        rep = average_precision(preds, gt, 0.5)
        assert rep.per_category[1] == 0.0

    def test_score_rank_invariance(self):
        gt = [box("a", 0, 1), box("a", 1000, 1)]
        preds = [box("a", 0, 1, score=0.9),
                 box("a", 500, 1, score=0.8),
                 box("a", 1000, 1, score=0.7)]
        squashed = [EvalBox(p.pano_id, p.x, p.y, p.w, p.h, p.category,
                            score=p.score ** 4) for p in preds]
        a = average_precision(preds, gt, 0.5).per_category[1]
        b = average_precision(squashed, gt, 0.5).per_category[1]
        assert a == b

    def test_zero_gt_category_excluded(self):
        gt = [box("a", 0, 1)]
        preds = [box("a", 0, 1, score=0.9), box("a", 500, 2, score=0.8)]
        rep = average_precision(preds, gt, 0.5)
        assert rep.excluded == [2]
        assert 2 not in rep.per_category

    def test_gt_matched_once(self):
        gt = [box("a", 0, 1)]
        preds = [box("a", 0, 1, score=0.9), box("a", 0, 1, score=0.8)]
        rep = average_precision(preds, gt, 0.5)
        # second pred is an FP: precision falls to 1/2 at recall 1
        assert rep.per_category[1] == 1.0  # max precision at recall>=r is 1.0

    def test_coco_summary_shape(self):
        gt = [box("a", 0, 1), box("a", 500, 2)]
        preds = [box("a", 0, 1, score=0.9), box("a", 500, 2, score=0.8)]
        summary = coco_summary(preds, gt)
        assert summary["mAP50"] == 1.0
        assert summary["mAP75"] == 1.0
        assert summary["mAP"] == 1.0
        assert set(summary["per_category_ap50"]) == {"1", "2"}
        # boxes are 100x200 = 20000 px^2: large only
        assert summary["mAP_large"] == 1.0
        assert summary["mAP_small"] is None
