"""Metric correctness against brute-force pair counting and hand cases."""

import itertools

import numpy as np
import pytest

from hiseg.errors import RangeError
from hiseg.metrics import (
    AlignmentThresholds,
    Segmentation,
    align,
    evaluate_segmentation,
    pk,
    precision_recall,
    s_measure,
)


def brute_force_pk(ref_cps, hyp_cps, length, k):
    """Direct pair counting from the definition; independent of the library."""
    def seg_ids(cps):
        ids, current = [], 0
        cuts = set(cps)
        for position in range(length):
            if position in cuts:
                current += 1
            ids.append(current)
        return ids

    ref_ids, hyp_ids = seg_ids(ref_cps), seg_ids(hyp_cps)
    pairs = [(i, i + k) for i in range(length - k)]
    disagreements = sum(
        1 for i, j in pairs
        if (ref_ids[i] == ref_ids[j]) != (hyp_ids[i] == hyp_ids[j])
    )
    return disagreements / len(pairs)


def all_segmentations(length):
    for mask in range(1 << (length - 1)):
        yield tuple(p + 1 for p in range(length - 1) if mask >> p & 1)


class TestPkCalibration:
    def test_identity_is_zero(self):
        seg = Segmentation(10, (3, 7))
        for k in range(1, 10):
            assert pk(seg, seg, k) == 0.0

    def test_all_boundaries_vs_one_segment(self):
        length = 8
        one = Segmentation(length, ())
        every = Segmentation(length, tuple(range(1, length)))
        assert pk(one, every, 1) == 1.0

    def test_hand_case(self):
        ref = Segmentation(10, (5,))
        hyp = Segmentation(10, (4,))
        expected = brute_force_pk((5,), (4,), 10, 3)
        assert pk(ref, hyp, 3) == pytest.approx(expected, abs=1e-12)

    def test_window_bounds(self):
        seg = Segmentation(5, (2,))
        with pytest.raises(RangeError):
            pk(seg, seg, 0)
        with pytest.raises(RangeError):
            pk(seg, seg, 5)

    def test_length_mismatch(self):
        with pytest.raises(RangeError):
            pk(Segmentation(5, ()), Segmentation(6, ()), 2)

    def test_axis_mismatch(self):
        with pytest.raises(RangeError):
            pk(Segmentation(5, (), "token"), Segmentation(5, (), "sentence"), 2)


class TestPkOracle:
    @pytest.mark.parametrize("length", range(2, 9))
    def test_exhaustive_small(self, length):
        segs = list(all_segmentations(length))
        for k in range(1, length):
            for ref_cps in segs:
                ref = Segmentation(length, ref_cps)
                for hyp_cps in segs:
                    hyp = Segmentation(length, hyp_cps)
                    assert pk(ref, hyp, k) == pytest.approx(
                        brute_force_pk(ref_cps, hyp_cps, length, k), abs=1e-12)

    def test_sampled_larger(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            length = int(rng.integers(9, 40))
            ref_cps = tuple(sorted(rng.choice(
                np.arange(1, length), size=int(rng.integers(0, 5)), replace=False)))
            hyp_cps = tuple(sorted(rng.choice(
                np.arange(1, length), size=int(rng.integers(0, 5)), replace=False)))
            k = int(rng.integers(1, length))
            assert pk(Segmentation(length, ref_cps), Segmentation(length, hyp_cps),
                      k) == pytest.approx(
                brute_force_pk(ref_cps, hyp_cps, length, k), abs=1e-12)

    def test_reversal_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            length = int(rng.integers(4, 20))
            ref_cps = tuple(sorted(rng.choice(
                np.arange(1, length), size=int(rng.integers(0, 4)), replace=False)))
            hyp_cps = tuple(sorted(rng.choice(
                np.arange(1, length), size=int(rng.integers(0, 4)), replace=False)))
            k = int(rng.integers(1, length))
            reverse = lambda cps: tuple(sorted(length - p for p in cps))
            assert pk(Segmentation(length, ref_cps), Segmentation(length, hyp_cps), k) \
                == pytest.approx(pk(Segmentation(length, reverse(ref_cps)),
                                    Segmentation(length, reverse(hyp_cps)), k),
                                 abs=1e-12)


class TestSMeasure:
    def test_perfect(self):
        seg = Segmentation(12, (4, 8))
        assert s_measure(seg, seg) == 0.0

    def test_equal_segments_degenerate(self):
        ref = Segmentation(12, (4, 8))  # all segment lengths 4
        hyp = Segmentation(12, (6,))
        assert s_measure(ref, hyp) == pytest.approx(pk(ref, hyp, 4), abs=1e-12)

    def test_hand_case_mean_of_three(self):
        ref = Segmentation(12, (4, 8))
        hyp = Segmentation(12, (6,))
        ks = [4, 4, 4]  # max, min, round(mean) of segment lengths 4,4,4
        expected = np.mean([brute_force_pk((4, 8), (6,), 12, k) for k in ks])
        assert s_measure(ref, hyp) == pytest.approx(expected, abs=1e-12)

    def test_uneven_reference(self):
        ref = Segmentation(12, (2,))  # lengths 2 and 10 -> ks 10, 2, 6
        hyp = Segmentation(12, (7,))
        expected = np.mean([brute_force_pk((2,), (7,), 12, k) for k in (10, 2, 6)])
        assert s_measure(ref, hyp) == pytest.approx(expected, abs=1e-12)

    def test_single_segment_reference_clamps(self):
        ref = Segmentation(6, ())
        hyp = Segmentation(6, (3,))
        assert s_measure(ref, hyp) == pytest.approx(
            brute_force_pk((), (3,), 6, 5), abs=1e-12)


class TestAlignment:
    def test_identity_aligns_everything(self):
        segments = [(0, 5), (5, 9), (9, 20)]
        pairs = align(segments, segments, threshold=3)
        assert {(i, i) for i in range(3)} <= set(pairs)
        assert precision_recall(segments, segments, 3) == (1.0, 1.0)

    def test_strict_inequality_at_threshold(self):
        reference = [(0, 10)]
        offset_by_threshold = [(5, 15)]
        assert align(reference, offset_by_threshold, threshold=5) == []
        just_inside = [(4, 14)]
        assert align(reference, just_inside, threshold=5) == [(0, 0)]

    def test_straddling_segment_aligns_to_both(self):
        reference = [(0, 10), (10, 20)]
        hypothesis = [(1, 11)]
        pairs = align(reference, hypothesis, threshold=12)
        assert set(pairs) == {(0, 0), (0, 1)}

    def test_precision_recall_ratios(self):
        # 3 hypothesis segments, 2 aligned; 4 reference segments, 3 aligned
        # (the second hypothesis straddles two short reference segments)
        reference = [(0, 10), (10, 18), (18, 26), (26, 40)]
        hypothesis = [(1, 11), (14, 22), (100, 200)]
        precision, recall = precision_recall(reference, hypothesis, threshold=5)
        assert precision == pytest.approx(2 / 3)
        assert recall == pytest.approx(3 / 4)

    def test_disjoint_far_apart(self):
        assert precision_recall([(0, 5)], [(100, 200)], 10) == (0.0, 0.0)

    def test_empty_hypothesis(self):
        assert precision_recall([(0, 5)], [], 10) == (0.0, 0.0)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            cuts = np.sort(rng.choice(np.arange(1, 100), size=4, replace=False))
            ref = Segmentation(100, tuple(cuts)).segments()
            cuts = np.sort(rng.choice(np.arange(1, 100), size=3, replace=False))
            hyp = Segmentation(100, tuple(cuts)).segments()
            values = [precision_recall(ref, hyp, t) for t in (2, 5, 10, 50)]
            for (p_small, r_small), (p_large, r_large) in zip(values, values[1:]):
                assert p_small <= p_large and r_small <= r_large


class TestReport:
    def test_identity_report(self):
        from hiseg.corpus import GoldSegmentation, make_corpus
        corpus = make_corpus(
            [[[0, 1, 2], [2, 1], [0, 0, 1], [1, 2]]], vocab_size=3)
        gold = GoldSegmentation(((3, 8),), ((2,),))
        report = evaluate_segmentation(corpus, gold, gold)
        scores = report.per_transcript[0]
        assert scores.s1 == 0.0 and scores.s2 == 0.0
        assert (scores.pr1, scores.rc1, scores.pr2, scores.rc2) == (1, 1, 1, 1)
        assert report.mean("s1") == 0.0
