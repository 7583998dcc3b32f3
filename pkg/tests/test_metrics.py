"""Metric math against hand computations and pair-counting references."""

import math

import numpy as np
import pytest

from oracles import mann_whitney_auc

from fedleak.data import LabeledImage, Partition
from fedleak.errors import MetricError
from fedleak.metrics import (RoundRecord, confusion, macro_scores,
                             reconstruction_distance, roc_auc)
from fedleak.tensor import Tensor


class TestConfusion:
    def test_perfect_predictions(self):
        c = confusion([0, 1, 2], [0, 1, 2], 3)
        np.testing.assert_array_equal(c.tp, [1, 1, 1])
        np.testing.assert_array_equal(c.fp, [0, 0, 0])
        np.testing.assert_array_equal(c.fn, [0, 0, 0])
        np.testing.assert_array_equal(c.tn, [2, 2, 2])

    def test_hand_tallied_case(self):
        c = confusion([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0], 3)
        np.testing.assert_array_equal(c.tp, [1, 2, 1])
        np.testing.assert_array_equal(c.fp, [1, 1, 0])
        np.testing.assert_array_equal(c.fn, [1, 0, 1])
        for k in range(3):
            assert c.tp[k] + c.fp[k] + c.tn[k] + c.fn[k] == 6

    def test_empty_inputs(self):
        c = confusion([], [], 3)
        assert c.tp.sum() == 0 and c.total == 0

    def test_fake_class_prediction_is_fp_free(self):
        # class-10 predictions are wrong answers without being FPs anywhere
        c = confusion([0, 1, 2], [10, 10, 2], 3)
        np.testing.assert_array_equal(c.fp, [0, 0, 0])
        np.testing.assert_array_equal(c.fn, [1, 1, 0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0], 3)


class TestMacroScores:
    def test_hand_tallied_values(self):
        c = confusion([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0], 3)
        accuracy, precision, recall, f1 = macro_scores(c)
        assert accuracy == pytest.approx(0.6667, abs=1e-4)
        assert precision == pytest.approx(0.7222, abs=1e-4)
        assert recall == pytest.approx(0.6667, abs=1e-4)
        assert f1 == pytest.approx(0.6933, abs=1e-4)

    def test_perfect(self):
        c = confusion(list(range(10)), list(range(10)), 10)
        assert macro_scores(c) == (1.0, 1.0, 1.0, 1.0)

    def test_all_predictions_fake(self):
        c = confusion([0, 1, 2], [10, 10, 10], 3)
        assert macro_scores(c) == (0.0, 0.0, 0.0, 0.0)

    def test_permutation_invariant(self):
        y_true = [0, 0, 1, 1, 2, 2, 0, 2]
        y_pred = [0, 1, 1, 2, 2, 0, 0, 2]
        base = macro_scores(confusion(y_true, y_pred, 3))
        order = np.random.default_rng(0).permutation(len(y_true))
        shuffled = macro_scores(confusion([y_true[i] for i in order],
                                          [y_pred[i] for i in order], 3))
        assert base == shuffled

    def test_f1_consistency_in_record(self):
        c = confusion([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0], 3)
        accuracy, precision, recall, f1 = macro_scores(c)
        rec = RoundRecord(round=1, accuracy=accuracy, macro_precision=precision,
                          macro_recall=recall, f1=f1, per_class_auc=[])
        expect = 2 * rec.macro_precision * rec.macro_recall / (
            rec.macro_precision + rec.macro_recall)
        assert rec.f1 == pytest.approx(expect, abs=1e-12)


class TestRocAuc:
    def test_perfectly_separated(self):
        _, auc = roc_auc([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
        assert auc == 1.0

    def test_hand_case_three_quarters(self):
        _, auc = roc_auc([0.9, 0.4, 0.7, 0.1], [True, True, False, False])
        assert auc == pytest.approx(0.75, abs=1e-12)

    def test_curve_endpoints(self):
        curve, _ = roc_auc([0.9, 0.4, 0.7, 0.1], [True, True, False, False])
        assert curve[0] == (0.0, 0.0) and curve[-1] == (1.0, 1.0)

    def test_complement_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(4, 30))
            scores = rng.normal(size=n)
            pos = rng.random(n) < 0.5
            if pos.all() or not pos.any():
                continue
            _, a = roc_auc(scores, pos)
            _, b = roc_auc(scores, ~pos)
            assert a + b == pytest.approx(1.0, abs=1e-9)

    def test_matches_pair_counting_with_ties(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(3, 50))
            # coarse grid of scores forces plenty of ties
            scores = rng.integers(0, 5, size=n).astype(float) / 4.0
            pos = rng.random(n) < rng.uniform(0.2, 0.8)
            if pos.all() or not pos.any():
                continue
            _, auc = roc_auc(scores, pos)
            assert auc == pytest.approx(mann_whitney_auc(scores, pos), abs=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_auc([0.5, 0.6], [True, True])


def as_partition(arrays, owner=1):
    samples = [LabeledImage(Tensor.from_array(a.reshape(1, 28, 28)), owner)
               for a in arrays]
    return Partition(owner, samples)


class TestReconstructionDistance:
    def test_zero_when_fakes_equal_class_mean(self, rng):
        base = rng.uniform(-1, 1, (28, 28)).astype(np.float32)
        part = as_partition([base, base])
        fakes = [Tensor.from_array(base.reshape(1, 28, 28))]
        assert reconstruction_distance(fakes, part) == pytest.approx(0.0, abs=1e-7)

    def test_two_pixel_hand_case(self):
        # rms of a two-pixel [1, 0] image against a zero mean: sqrt(0.5)
        fake = Tensor.from_array([1.0, 0.0])
        part = Partition(0, [LabeledImage(Tensor.from_array([0.0, 0.0]), 0)])
        d = reconstruction_distance([fake], part)
        assert d == pytest.approx(math.sqrt(0.5), abs=1e-9)

    def test_translation_consistent(self, rng):
        fakes_raw = [rng.uniform(-0.5, 0.5, (28, 28)) for _ in range(3)]
        reals_raw = [rng.uniform(-0.5, 0.5, (28, 28)) for _ in range(4)]
        d0 = reconstruction_distance(
            [Tensor.from_array(f.reshape(1, 28, 28)) for f in fakes_raw],
            as_partition(reals_raw))
        shift = 0.25
        d1 = reconstruction_distance(
            [Tensor.from_array((f + shift).reshape(1, 28, 28)) for f in fakes_raw],
            as_partition([r + shift for r in reals_raw]))
        assert d1 == pytest.approx(d0, abs=1e-6)

    def test_nonnegative(self, rng):
        fakes = [Tensor.from_array(rng.uniform(-1, 1, (1, 28, 28))) for _ in range(2)]
        part = as_partition([rng.uniform(-1, 1, (28, 28)) for _ in range(3)])
        assert reconstruction_distance(fakes, part) >= 0.0

    def test_empty_inputs_rejected(self, rng):
        part = as_partition([rng.uniform(-1, 1, (28, 28))])
        with pytest.raises(ValueError):
            reconstruction_distance([], part)
        with pytest.raises(ValueError):
            reconstruction_distance(
                [Tensor.from_array(np.zeros((1, 28, 28), np.float32))],
                Partition(1, []))
