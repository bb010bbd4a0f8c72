"""Bayes-optimal sample extraction with a security margin.

Each noisy sample gets a margin score

    s_i = eta_rho_hat(x_i) - (1/2 - (rho_plus_hat(x_i) - rho_minus_hat(x_i)) / 2)

It is extracted with label ``+1`` when ``s_i > tau``, with ``-1`` when
``s_i < -tau``, and is a boundary sample otherwise (``|s_i| <= tau``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import NoisyDataset, check_features, sign


def margin_scores(X, eta_rho: Callable, noise) -> np.ndarray:
    """Signed distance of ``eta_rho_hat`` from the corrected threshold."""
    X = check_features(X)
    rp, rm = noise.rates(X)
    return np.asarray(eta_rho(X), dtype=np.float64) - (0.5 - 0.5 * (rp - rm))


@dataclass(frozen=True)
class Partition:
    bo_indices: np.ndarray
    bo_labels: np.ndarray
    boundary_indices: np.ndarray
    tau: float
    scores: np.ndarray

    @property
    def n(self) -> int:
        return len(self.scores)

    @property
    def m(self) -> int:
        return len(self.bo_indices)

    def bo_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.bo_indices] = True
        return mask

    def to_csv(self, path) -> None:
        """Write ``index,status,bo_label,margin_score`` rows in index order."""
        labels = dict(zip(self.bo_indices.tolist(), self.bo_labels.tolist()))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "status", "bo_label", "margin_score"])
            for i, s in enumerate(self.scores):
                if i in labels:
                    w.writerow([i, "bo", labels[i], repr(float(s))])
                else:
                    w.writerow([i, "boundary", "", repr(float(s))])


def partition_from_scores(scores, tau: float, boundary=None) -> Partition:
    """Build a partition from precomputed scores.

    ``boundary`` optionally overrides the margin rule with an explicit index
    set (used for exact-budget partitions when scores tie).
    """
    tau = float(tau)
    if not np.isfinite(tau) or tau < 0:
        raise ValueError("tau must be finite and non-negative")
    scores = np.asarray(scores, dtype=np.float64)
    if boundary is None:
        is_boundary = np.abs(scores) <= tau
    else:
        is_boundary = np.zeros(len(scores), dtype=bool)
        is_boundary[np.asarray(boundary, dtype=np.int64)] = True
    bo = np.flatnonzero(~is_boundary)
    return Partition(
        bo_indices=bo,
        bo_labels=sign(scores[bo]),
        boundary_indices=np.flatnonzero(is_boundary),
        tau=tau,
        scores=scores,
    )


def extract_bo(noisy: NoisyDataset, eta_rho: Callable, noise, tau: float) -> Partition:
    """Split ``noisy`` into extracted BO samples and boundary samples."""
    return partition_from_scores(margin_scores(noisy.features, eta_rho, noise), tau)


@dataclass(frozen=True)
class ExtractionStats:
    m: int
    fraction: float
    purity: float | None


def extraction_stats(p: Partition, features=None, oracle_eta: Callable | None = None) -> ExtractionStats:
    """Extraction count/fraction and, given the true posterior, label purity.

    Purity is the share of BO labels equal to ``sign(eta(x) - 1/2)``; it is
    ``None`` when nothing was extracted or no oracle is supplied.
    """
    m = p.m
    fraction = m / p.n if p.n else 0.0
    purity = None
    if oracle_eta is not None and m > 0:
        if features is None:
            raise ValueError("purity needs the feature matrix")
        X = np.asarray(features)[p.bo_indices]
        truth = sign(np.asarray(oracle_eta(X)) - 0.5)
        purity = float(np.mean(truth == p.bo_labels))
    return ExtractionStats(m, fraction, purity)


def budget_margin_search(scores, budget: int) -> float:
    """Smallest margin leaving ``budget`` boundary samples.

    Returns the ``budget``-th smallest ``|s_i|``.  ``budget = 0`` gives half
    the smallest ``|s_i|`` so that nothing falls inside the margin (unless
    some score is exactly zero).
    """
    a = np.sort(np.abs(np.asarray(scores, dtype=np.float64)))
    n = len(a)
    if not 0 <= budget <= n:
        raise ValueError(f"budget must lie in [0, {n}]")
    if budget == 0:
        return float(a[0] / 2.0) if n else 0.0
    return float(a[budget - 1])


def extract_bo_budget(noisy: NoisyDataset, eta_rho: Callable, noise, budget: int) -> Partition:
    """Partition with exactly ``budget`` boundary samples.

    Boundary samples are the ``budget`` smallest ``|s_i|``; ties at the
    cut-off are taken in ascending index order.
    """
    scores = margin_scores(noisy.features, eta_rho, noise)
    return budget_partition(scores, budget)


def budget_partition(scores, budget: int) -> Partition:
    scores = np.asarray(scores, dtype=np.float64)
    tau = budget_margin_search(scores, budget)
    order = np.argsort(np.abs(scores), kind="stable")
    return partition_from_scores(scores, tau, boundary=order[:budget])
