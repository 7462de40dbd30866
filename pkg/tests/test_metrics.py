import numpy as np
import pytest

from dflsim import metrics
from dflsim.metrics import MetricRow


def test_macro_f1_perfect_diagonal():
    cm = np.diag([5, 7, 9])
    assert metrics.macro_f1(cm) == pytest.approx(1.0)


def test_macro_f1_all_one_class_binary():
    # balanced 2-class, everything predicted class A:
    # class A: P=0.5, R=1 -> F1=2/3; class B: F1=0 -> macro=1/3
    cm = np.array([[10, 0], [10, 0]])
    assert metrics.macro_f1(cm) == pytest.approx(1 / 3)


def test_macro_f1_uniform_random_simulation():
    rng = np.random.default_rng(77)
    labels = np.repeat(np.arange(10), 1000)
    preds = rng.integers(0, 10, size=10000)
    cm = np.zeros((10, 10), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    assert metrics.macro_f1(cm) == pytest.approx(0.1, abs=0.02)


def test_macro_f1_relabeling_invariance():
    rng = np.random.default_rng(3)
    cm = rng.integers(0, 30, size=(6, 6))
    perm = rng.permutation(6)
    assert metrics.macro_f1(cm[np.ix_(perm, perm)]) == pytest.approx(metrics.macro_f1(cm))


def test_macro_f1_empty_matrix_rejected():
    with pytest.raises(ValueError):
        metrics.macro_f1(np.zeros((3, 3), dtype=int))


def test_asr_targeted_formula():
    cm = np.zeros((10, 10), dtype=int)
    cm[7, 4] = 8
    cm[7, 7] = 2
    assert metrics.asr_targeted(cm, 7, 4) == pytest.approx(0.8)


def test_asr_targeted_perfect_and_total():
    perfect = np.diag(np.full(10, 5))
    assert metrics.asr_targeted(perfect, 7, 4) == 0.0
    total = np.zeros((10, 10), dtype=int)
    total[7, 4] = 11
    assert metrics.asr_targeted(total, 7, 4) == 1.0


def test_asr_targeted_errors():
    cm = np.diag(np.full(10, 5))
    with pytest.raises(ValueError):
        metrics.asr_targeted(cm, 4, 4)
    empty_row = cm.copy()
    empty_row[7, 7] = 0
    with pytest.raises(ValueError):
        metrics.asr_targeted(empty_row, 7, 4)


def test_asr_backdoor_formula():
    # |D|=100, c_tt=10, column-t total=55 -> (55-10)/(100-10) = 0.5
    cm = np.zeros((10, 10), dtype=int)
    cm[4, 4] = 10
    for i in range(9):
        if i != 4:
            cm[i, 4] = 5
    cm[9, 4] = 5
    cm[0, 0] = 100 - cm.sum()
    assert cm.sum() == 100 and cm[:, 4].sum() == 55
    assert metrics.asr_backdoor(cm, 4) == pytest.approx(0.5)


def test_asr_backdoor_extremes():
    clean = np.diag(np.full(10, 10))
    assert metrics.asr_backdoor(clean, 4) == 0.0
    hijacked = np.zeros((10, 10), dtype=int)
    hijacked[:, 4] = 10
    assert metrics.asr_backdoor(hijacked, 4) == 1.0


def test_asr_backdoor_degenerate():
    only_target = np.zeros((10, 10), dtype=int)
    only_target[4, 4] = 50
    with pytest.raises(ValueError):
        metrics.asr_backdoor(only_target, 4)


def test_benign_average():
    values = {0: 0.8, 1: 0.9, 2: 0.1}
    assert metrics.benign_average(values, {0, 1}) == pytest.approx(0.85)
    assert metrics.benign_average(values, {2}) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        metrics.benign_average(values, set())
    with pytest.raises(ValueError):
        metrics.benign_average(values, {0, 5})


def test_benign_average_order_invariance():
    a = {0: 0.2, 1: 0.4, 2: 0.9}
    b = {2: 0.9, 0: 0.2, 1: 0.4}
    assert metrics.benign_average(a, {0, 1, 2}) == metrics.benign_average(b, {0, 1, 2})


def test_metrics_stay_in_unit_interval_random():
    rng = np.random.default_rng(19)
    for _ in range(200):
        cm = rng.integers(0, 50, size=(5, 5))
        cm[2, 2] += 1          # keep src row and denominator non-degenerate
        cm[0, 0] += 1
        assert 0.0 <= metrics.macro_f1(cm) <= 1.0
        assert 0.0 <= metrics.asr_targeted(cm, 2, 3) <= 1.0
        if cm.sum() - cm[1, 1] > 0:
            assert 0.0 <= metrics.asr_backdoor(cm, 1) <= 1.0


def test_asr_plus_correct_fraction_row_bound():
    rng = np.random.default_rng(31)
    for _ in range(100):
        cm = rng.integers(0, 20, size=(4, 4))
        cm[1, 1] += 1
        asr = metrics.asr_targeted(cm, 1, 3)
        correct = cm[1, 1] / cm[1].sum()
        assert asr + correct <= 1.0 + 1e-12


def test_metric_row_validation():
    MetricRow("abc", 1, "f1_benign_avg", 0.5)
    with pytest.raises(ValueError):
        MetricRow("abc", 1, "bogus", 0.5)
    with pytest.raises(ValueError):
        MetricRow("abc", 1, "asr_targeted", 1.5)
