"""Evaluation metrics.

``excess_risk_mc`` averages the pointwise conditional excess risk against the
known posterior instead of drawing labels, which targets the same quantity
with less variance.  The ranking metrics treat ``+1`` as the positive class.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .data import check_features, sign
from .exceptions import DimMismatch, LengthMismatch, MissingClass


def pointwise_excess_risk(pred, eta) -> np.ndarray:
    """``risk(pred) - min(eta, 1 - eta)``, where risk(+1) = 1 - eta, risk(-1) = eta."""
    pred = np.asarray(pred)
    eta = np.asarray(eta, dtype=np.float64)
    risk = np.where(pred == 1, 1.0 - eta, eta)
    return risk - np.minimum(eta, 1.0 - eta)


def excess_risk_mc(model, eval_features, oracle_eta) -> float:
    """Monte-Carlo excess 0-1 risk of ``sign(model.decision_function)``."""
    X = check_features(eval_features)
    n_in = getattr(model, "n_features_in_", X.shape[1])
    if X.shape[1] != n_in:
        raise DimMismatch(f"model expects {n_in} features, got {X.shape[1]}")
    pred = sign(model.decision_function(X))
    return float(pointwise_excess_risk(pred, oracle_eta(X)).mean())


def _check_pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if len(a) != len(b):
        raise LengthMismatch(f"length mismatch: {len(a)} vs {len(b)}")
    return a, b


def accuracy(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(pred == truth)) if len(pred) else 0.0


def f1(pred, truth) -> float:
    """``2 TP / (2 TP + FP + FN)``; 0 when the denominator is 0."""
    pred, truth = _check_pair(pred, truth)
    tp = np.count_nonzero((pred == 1) & (truth == 1))
    fp = np.count_nonzero((pred == 1) & (truth != 1))
    fn = np.count_nonzero((pred != 1) & (truth == 1))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + P(tie)/2."""
    scores, labels = _check_pair(np.asarray(scores, dtype=np.float64), labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MissingClass("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Area under the precision-recall step curve (no interpolation).

    Thresholds sweep the distinct scores from high to low with ties grouped:
    ``sum_k (R_k - R_{k-1}) P_k``.
    """
    scores, labels = _check_pair(np.asarray(scores, dtype=np.float64), labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise MissingClass("PR-AUC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(p)[last]
    predicted = last + 1
    precision = tp / predicted
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass(frozen=True)
class MetricsReport:
    excess_risk: float | None
    acc: float
    auc: float
    f1: float
    pr_auc: float
    n_eval: int

    def to_dict(self):
        return asdict(self)


def evaluate(model, X, y, oracle_eta=None) -> MetricsReport:
    """All metrics for ``model`` on ``(X, y)``; excess risk needs ``oracle_eta``."""
    X = check_features(X)
    scores = np.asarray(model.decision_function(X), dtype=np.float64)
    pred = sign(scores)
    excess = None
    if oracle_eta is not None:
        excess = float(pointwise_excess_risk(pred, oracle_eta(X)).mean())
    return MetricsReport(
        excess_risk=excess,
        acc=accuracy(pred, y),
        auc=auc(scores, y),
        f1=f1(pred, y),
        pr_auc=pr_auc(scores, y),
        n_eval=int(X.shape[0]),
    )
