"""Cross-validated choice of the security margin.

The noisy posterior is fitted once on the noisy set.  For each fold the noise
rates are re-estimated on the remaining audited folds, the full pipeline is
run for every candidate margin, and accuracy is measured against the clean
labels of the held-out fold.  The candidate with the best mean accuracy wins,
ties going to the smallest margin.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import AuditedDataset, NoisyDataset, as_rng, kfold_split, validate_dataset
from .exceptions import MissingClass, TooFewSamples
from .learners import predict_labels
from .metrics import accuracy
from .noise import estimate_noise, estimate_noisy_posterior
from .pipeline import PipelineSpec, run_pipeline


def check_grid(grid) -> np.ndarray:
    g = np.asarray(list(grid), dtype=np.float64)
    if g.size == 0:
        raise ValueError("tau grid is empty")
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise ValueError("tau candidates must be finite and non-negative")
    if np.any(np.diff(g) <= 0):
        raise ValueError("tau grid must be strictly ascending")
    return g


@dataclass(frozen=True)
class CvReport:
    grid: np.ndarray
    accuracies: np.ndarray  # shape (len(grid), folds)
    tau_star: float
    cv_queries: int = 0

    @property
    def mean_accuracy(self) -> np.ndarray:
        return self.accuracies.mean(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "fold", "accuracy"])
            for j, tau in enumerate(self.grid):
                for k, acc in enumerate(self.accuracies[j]):
                    w.writerow([repr(float(tau)), k, repr(float(acc))])

    def to_json(self) -> str:
        return json.dumps({
            "tau_star": float(self.tau_star),
            "grid": [float(t) for t in self.grid],
            "mean_accuracy": [float(a) for a in self.mean_accuracy],
            "cv_queries": int(self.cv_queries),
        }, indent=2, sort_keys=True)


def argmax_smallest(grid, means) -> float:
    """Grid value with the largest mean; the first (smallest) one on ties."""
    means = np.asarray(means)
    return float(np.asarray(grid)[int(np.flatnonzero(means == means.max())[0])])


def select_tau_cv(grid, noisy: NoisyDataset, audited: AuditedDataset, mode: str,
                  spec: PipelineSpec, rng=None, *, expert: Callable | None = None,
                  folds: int = 5, eta_rho: Callable | None = None) -> CvReport:
    """Pick the security margin from ``grid`` by ``folds``-fold CV on the audited set.

    ``expert`` answers boundary queries in AT/HYBRID mode; pass one backed
    by its own stream so CV queries stay separate from the final run.  A
    precomputed ``eta_rho`` skips the noisy-posterior fit.
    """
    grid = check_grid(grid)
    validate_dataset(noisy)
    validate_dataset(audited)
    if len(audited) < folds:
        raise TooFewSamples(f"{len(audited)} audited rows cannot fill {folds} folds")
    rng = as_rng(rng)
    if eta_rho is None:
        eta_rho = estimate_noisy_posterior(noisy, spec.nuisance, rng.child("eta_rho"))
    splits = kfold_split(len(audited), folds, rng.child("folds"))
    start_queries = getattr(expert, "n_queries", 0)
    acc = np.zeros((len(grid), folds))
    for k, val_idx in enumerate(splits):
        train_idx = np.setdiff1d(np.arange(len(audited)), val_idx)
        train, val = audited.subset(train_idx), audited.subset(val_idx)
        for c in (-1, 1):
            if not np.any(train.clean_labels == c):
                raise MissingClass(f"training folds lack class {c:+d}", fold=k)
        noise = estimate_noise(train, spec.noise_kind, spec.noise_spec, rng.child("noise", k))
        for j, tau in enumerate(grid):
            res = run_pipeline(noisy, None, mode, spec, rng.child("cell", k, j), tau=float(tau),
                               expert=expert, eta_rho=eta_rho, noise=noise)
            acc[j, k] = accuracy(predict_labels(res.model, val.features), val.clean_labels)
    used = getattr(expert, "n_queries", 0) - start_queries
    return CvReport(grid, acc, argmax_smallest(grid, acc.mean(axis=1)), int(used))
