import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skullct import metrics as mx


EXAMPLE_CM = np.array([[1, 0, 0], [0, 0, 1], [0, 0, 2]])


def onehot(labels, k=3):
    labels = np.asarray(labels)
    out = np.zeros((len(labels), k), dtype=np.int64)
    out[np.arange(len(labels)), labels] = 1
    return out


class TestConfusionMatrix:
    def test_hand_counts(self):
        cm = mx.confusion_matrix([0, 1, 2, 2], [0, 2, 2, 2], 3)
        assert cm.tolist() == EXAMPLE_CM.tolist()

    def test_perfect_is_diagonal(self):
        cm = mx.confusion_matrix([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert (cm == np.diag([1, 2, 1])).all()

    def test_empty_inputs_zero_matrix(self):
        cm = mx.confusion_matrix([], [], 3)
        assert (cm == 0).all()
        with pytest.raises(mx.EmptyMatrix):
            mx.accuracy(cm)

    def test_label_out_of_range(self):
        with pytest.raises(mx.LabelOutOfRange):
            mx.confusion_matrix([0, 3], [0, 0], 3)


class TestPrecisionRecallF1:
    def test_hand_example(self):
        prec, rec, f1, support = mx.precision_recall_f1(EXAMPLE_CM)
        assert prec[2] == pytest.approx(2 / 3)
        assert rec[2] == 1.0
        assert f1[2] == pytest.approx(0.8)
        assert support.tolist() == [1, 1, 2]
        p, r, f = mx.precision_recall_f1(EXAMPLE_CM, average="micro")
        assert p == r == f == 0.75

    def test_diagonal_all_ones(self):
        cm = np.diag([3, 4, 5])
        prec, rec, f1, _ = mx.precision_recall_f1(cm)
        assert (prec == 1.0).all() and (rec == 1.0).all() and (f1 == 1.0).all()

    def test_zero_support_guard(self):
        cm = np.array([[2, 0, 0], [0, 0, 0], [1, 0, 0]])
        prec, rec, f1, _ = mx.precision_recall_f1(cm)
        assert rec[1] == 0.0 and prec[1] == 0.0 and f1[1] == 0.0
        # macro still averages over all classes
        p, r, f = mx.precision_recall_f1(cm, average="macro")
        assert r == pytest.approx((1.0 + 0.0 + 0.0) / 3)

    def test_empty_matrix(self):
        with pytest.raises(mx.EmptyMatrix):
            mx.precision_recall_f1(np.zeros((3, 3), dtype=int))

    @settings(max_examples=100)
    @given(st.integers(0, 10 ** 6))
    def test_micro_f1_equals_accuracy_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 50))
        cm = mx.confusion_matrix(rng.integers(0, 3, n), rng.integers(0, 3, n), 3)
        _, _, f1 = mx.precision_recall_f1(cm, average="micro")
        assert f1 == mx.accuracy(cm)


class TestAccuracy:
    def test_hand_values(self):
        assert mx.accuracy(EXAMPLE_CM) == 0.75
        assert mx.balanced_accuracy(EXAMPLE_CM) == pytest.approx(2 / 3)

    def test_diagonal(self):
        cm = np.diag([2, 2, 2])
        assert mx.accuracy(cm) == 1.0 and mx.balanced_accuracy(cm) == 1.0

    def test_constant_predictor_on_balanced_truth(self):
        cm = mx.confusion_matrix([0, 1, 2] * 4, [0] * 12, 3)
        assert mx.accuracy(cm) == pytest.approx(1 / 3)
        assert mx.balanced_accuracy(cm) == pytest.approx(1 / 3)

    def test_zero_support_class(self):
        cm = np.array([[2, 0], [0, 0]])
        with pytest.raises(mx.ZeroSupportClass):
            mx.balanced_accuracy(cm)


class TestHamming:
    def test_one_error_among_four(self):
        yt = onehot([0, 1, 2, 2])
        yp = onehot([0, 2, 2, 2])
        score, loss = mx.hamming(yt, yp)
        assert loss == pytest.approx(2 / 12)
        assert score == 0.75

    def test_perfect(self):
        yt = onehot([0, 1, 2])
        assert mx.hamming(yt, yt) == (1.0, 0.0)

    def test_every_sample_wrong(self):
        yt = onehot([0, 0, 0])
        yp = onehot([1, 2, 1])
        score, loss = mx.hamming(yt, yp)
        assert loss == pytest.approx(2 / 3)
        assert score == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(mx.ShapeMismatch):
            mx.hamming(onehot([0, 1]), onehot([0, 1, 2]))

    @settings(max_examples=100)
    @given(st.integers(0, 10 ** 6))
    def test_loss_identity_with_accuracy(self, seed):
        # one-hot rows disagree in exactly 2 of K positions per error, so
        # loss == (2/K)(1 - accuracy); checked against exact rationals
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        yt = rng.integers(0, 3, n)
        yp = rng.integers(0, 3, n)
        _, loss = mx.hamming(onehot(yt), onehot(yp))
        errors = int((yt != yp).sum())
        assert loss == float(Fraction(2 * errors, 3 * n))
        cm = mx.confusion_matrix(yt, yp, 3)
        assert loss == float(Fraction(2, 3) * (1 - Fraction(n - errors, n)))


class TestRocAuc:
    def test_perfect_ranking(self):
        yt = onehot([0, 0, 1, 1, 2, 2])
        scores = yt.astype(float) * 0.8 + 0.1
        assert mx.roc_auc(yt, scores) == 1.0

    def test_constant_scores_give_half(self):
        yt = onehot([0, 1, 2, 0])
        assert mx.roc_auc(yt, np.full((4, 3), 0.5)) == 0.5

    def test_hand_column(self):
        # positives hold ranks 1 and 3: 3 of 4 (pos, neg) pairs concordant
        yt = np.array([[1], [0], [1], [0]])
        scores = np.array([[0.9], [0.8], [0.3], [0.2]])
        assert mx.roc_auc_per_class(yt, scores)[0] == 0.75

    def test_single_class_column(self):
        yt = onehot([0, 0, 0])
        with pytest.raises(mx.SingleClassColumn):
            mx.roc_auc(yt, np.random.rand(3, 3))

    @settings(max_examples=100)
    @given(st.integers(0, 10 ** 6))
    def test_matches_concordant_pair_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        pos = rng.integers(0, 2, n)
        if pos.all() or not pos.any():
            pos[0] = 1 - pos[0]
        scores = np.round(rng.uniform(0, 1, n), 1)  # coarse grid forces ties
        auc = mx.roc_auc_per_class(pos[:, None], scores[:, None])[0]
        total, credit = 0, 0.0
        for i in np.nonzero(pos)[0]:
            for j in np.nonzero(1 - pos)[0]:
                total += 1
                if scores[i] > scores[j]:
                    credit += 1.0
                elif scores[i] == scores[j]:
                    credit += 0.5
        assert abs(auc - credit / total) < 1e-12


class TestKappa:
    def test_diagonal_is_one(self):
        assert mx.cohen_kappa(np.diag([5, 1, 3])) == 1.0

    def test_chance_level_zero(self):
        cm = mx.confusion_matrix([0, 1, 2] * 5, [0] * 15, 3)
        assert mx.cohen_kappa(cm) == pytest.approx(0.0)

    def test_hand_example(self):
        assert mx.cohen_kappa(np.array([[4, 1], [2, 3]])) == pytest.approx(0.4)

    def test_degenerate_agreement(self):
        with pytest.raises(mx.DegenerateAgreement):
            mx.cohen_kappa(np.array([[5, 0], [0, 0]]))

    def test_invariant_under_class_permutation(self):
        rng = np.random.default_rng(0)
        cm = rng.integers(0, 10, (3, 3))
        cm[0, 0] += 1  # ensure nondegenerate
        perm = [2, 0, 1]
        assert mx.cohen_kappa(cm[np.ix_(perm, perm)]) == \
            pytest.approx(mx.cohen_kappa(cm))


class TestLogLoss:
    def test_uniform_rows_ln3(self):
        p = np.full((7, 3), 1 / 3)
        assert mx.log_loss(np.arange(7) % 3, p) == pytest.approx(
            math.log(3), abs=1e-12)

    def test_perfect_close_to_zero(self):
        p = onehot([0, 1, 2]).astype(float)
        assert mx.log_loss([0, 1, 2], p) == pytest.approx(0.0, abs=1e-9)

    def test_zero_probability_clipped(self):
        p = np.array([[0.0, 1.0, 0.0]])
        loss = mx.log_loss([0], p)
        assert loss == pytest.approx(-math.log(1e-15), abs=1e-9)

    def test_bad_row(self):
        with pytest.raises(mx.BadProbabilityRow):
            mx.log_loss([0], np.array([[0.5, 0.2, 0.2]]))

    def test_monotone_as_mass_moves_to_truth(self):
        y = [0, 1, 2]
        losses = []
        for a in np.linspace(0.4, 0.9, 6):
            rest = (1 - a) / 2
            p = np.full((3, 3), rest)
            p[np.arange(3), y] = a
            losses.append(mx.log_loss(y, p))
        assert all(b < a for a, b in zip(losses, losses[1:]))


class TestReport:
    def test_table_structure_and_supports(self):
        # supports taken from the published classwise table
        cm = np.diag([2548, 1373, 2588])
        cm[1, 0] = 100
        cm[1, 1] -= 100
        names = ("Depressed Fracture", "Linear Fracture", "Not Fractured")
        report = mx.classification_report(cm, names)
        assert report.support.tolist() == [2548, 1373, 2588]
        assert int(report.support.sum()) == 6509
        table = report.format_table()
        for row in ("Depressed Fracture", "Linear Fracture", "Not Fractured",
                    "micro avg", "macro avg", "weighted avg", "samples avg"):
            assert row in table
        assert table.count("6509") == 4

    def test_per_class_rows_match_prf(self):
        report = mx.classification_report(EXAMPLE_CM, ("a", "b", "c"))
        assert report.precision[2] == pytest.approx(2 / 3)
        assert report.recall[2] == 1.0
        assert report.f1[2] == pytest.approx(0.8)
        assert report.averages["micro"][2] == 0.75

    def test_diagonal_all_ones(self):
        report = mx.classification_report(np.diag([4, 4, 4]), ("a", "b", "c"))
        assert (report.f1 == 1.0).all()
        assert report.panel["kappa"] == 1.0

    def test_json_keys_stable(self):
        report = mx.classification_report(EXAMPLE_CM, ("a", "b", "c"))
        payload = json.loads(report.to_json())
        assert set(payload) == {"per_class", "averages", "panel"}
        assert set(payload["per_class"]["a"]) == \
            {"precision", "recall", "f1", "support"}
        assert set(payload["panel"]) == set(mx.PANEL_KEYS)

    def test_evaluate_predictions_full_panel(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, 60)
        proba = rng.dirichlet(np.ones(3), 60)
        pred = proba.argmax(axis=1)
        report = mx.evaluate_predictions(y, pred, proba, ("a", "b", "c"))
        panel = report.panel
        assert all(panel[k] is not None for k in mx.PANEL_KEYS)
        assert 0 <= panel["roc_auc"] <= 1
        assert panel["hamming_score"] == pytest.approx(
            mx.accuracy(mx.confusion_matrix(y, pred, 3)))


@settings(max_examples=50)
@given(st.integers(0, 10 ** 6))
def test_metrics_invariant_under_sample_permutation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    y = rng.integers(0, 3, n)
    pred = rng.integers(0, 3, n)
    proba = rng.dirichlet(np.ones(3), n)
    perm = rng.permutation(n)
    cm1 = mx.confusion_matrix(y, pred, 3)
    cm2 = mx.confusion_matrix(y[perm], pred[perm], 3)
    assert (cm1 == cm2).all()
    if len(set(y)) == 3:
        assert mx.roc_auc(onehot(y), proba) == \
            pytest.approx(mx.roc_auc(onehot(y[perm]), proba[perm]), abs=1e-12)
    assert mx.log_loss(y, proba) == pytest.approx(
        mx.log_loss(y[perm], proba[perm]), abs=1e-12)
