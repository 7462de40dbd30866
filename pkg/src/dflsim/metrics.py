"""Scoring from confusion matrices: macro F1 and the two attack success rates.

Conventions: counts[i, j] is the number of samples with true label i and
predicted label j. Classes whose precision/recall denominator is empty
contribute an F1 of 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRIC_NAMES = ("f1_benign_avg", "asr_targeted", "asr_backdoor")


@dataclass(frozen=True)
class MetricRow:
    scenario_id: str
    round_index: int
    metric: str
    value: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean over classes of 2PR/(P+R)."""
    cm = np.asarray(cm)
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    true_pos = np.diag(cm).astype(np.float64)
    pred_totals = cm.sum(axis=0).astype(np.float64)
    true_totals = cm.sum(axis=1).astype(np.float64)
    f1s = np.zeros(cm.shape[0])
    for c in range(cm.shape[0]):
        if pred_totals[c] == 0 or true_totals[c] == 0:
            continue
        precision = true_pos[c] / pred_totals[c]
        recall = true_pos[c] / true_totals[c]
        if precision + recall > 0:
            f1s[c] = 2 * precision * recall / (precision + recall)
    return float(f1s.mean())


def asr_targeted(cm: np.ndarray, src: int, tgt: int) -> float:
    """Fraction of true-src samples predicted as tgt: c[src,tgt] / sum_j c[src,j]."""
    cm = np.asarray(cm)
    if src == tgt:
        raise ValueError("source and target label must differ")
    row_total = cm[src].sum()
    if row_total == 0:
        raise ValueError(f"test set contains no samples of source label {src}")
    return float(cm[src, tgt] / row_total)


def asr_backdoor(cm_triggered: np.ndarray, tgt: int) -> float:
    """Triggered-set success rate: (sum_j c[j,tgt] - c[tgt,tgt]) / (|D| - c[tgt,tgt]).

    The matrix must come from evaluating on the fully triggered test set with
    ground-truth labels retained, so true-target samples are excluded.
    """
    cm = np.asarray(cm_triggered)
    total = cm.sum()
    tgt_correct = cm[tgt, tgt]
    denom = total - tgt_correct
    if denom <= 0:
        raise ValueError("degenerate denominator: every sample is a correctly-predicted target")
    return float((cm[:, tgt].sum() - tgt_correct) / denom)


def benign_average(per_node: dict[int, float], benign: set[int]) -> float:
    """Arithmetic mean of per-node values over benign node ids only."""
    if not benign:
        raise ValueError("benign set must be non-empty")
    missing = benign - per_node.keys()
    if missing:
        raise ValueError(f"missing values for benign nodes {sorted(missing)}")
    return float(np.mean([per_node[i] for i in sorted(benign)]))
