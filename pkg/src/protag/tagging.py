"""Labelling the boundary samples and assembling the fused training set.

Pro-AT asks an expert for the boundary labels; Pro-PT attaches the corrected
posterior to each boundary sample and redraws a hard pseudo-label from it at
every training epoch.  A hybrid mode queries the most ambiguous share of the
boundary and pseudo-tags the rest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import NoisyDataset, as_rng
from .exceptions import ModeMismatch
from .noise import pseudo_posterior
from .purify import Partition

MODES = ("AT", "PT", "HYBRID")


class SimulatedExpert:
    """Expert that answers with ``y ~ Bernoulli(eta(x))`` mapped to +/-1.

    Each call consumes fresh uniforms from the expert's own stream.  The
    number of labels handed out is tracked in ``n_queries``.
    """

    def __init__(self, eta_fn: Callable, rng=None):
        self.eta_fn = eta_fn
        self.rng = as_rng(rng)
        self._gen = self.rng.generator()
        self.n_queries = 0

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        u = self._gen.random(X.shape[0])
        self.n_queries += X.shape[0]
        return np.where(u < self.eta_fn(X), 1, -1).astype(np.int64)


@dataclass
class QueryLedger:
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def cost(self) -> int:
        return int(len(np.unique(self.indices)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "label"])
            for i, y in zip(self.indices.tolist(), self.labels.tolist()):
                w.writerow([i, y])


@dataclass(frozen=True)
class FusedTrainingSet:
    """All noisy-set covariates with exactly one label source per row.

    ``labels`` holds fixed labels (BO labels and expert answers); rows in
    ``pseudo_indices`` carry ``eta_pse`` instead and their ``labels`` entry
    is a placeholder ``0``.
    """

    features: np.ndarray
    labels: np.ndarray
    mode: str
    pseudo_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    eta_pse: np.ndarray = field(default_factory=lambda: np.zeros(0))
    queried_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.labels)

    def source(self) -> np.ndarray:
        """Per-row label source: ``"bo"``, ``"expert"`` or ``"pseudo"``."""
        out = np.full(len(self), "bo", dtype=object)
        out[self.queried_indices] = "expert"
        out[self.pseudo_indices] = "pseudo"
        return out


def _bo_labels(p: Partition) -> np.ndarray:
    labels = np.zeros(p.n, dtype=np.int64)
    labels[p.bo_indices] = p.bo_labels
    return labels


def pro_at_tag(p: Partition, noisy: NoisyDataset, oracle: Callable):
    """Query every boundary sample; BO samples keep their extracted label."""
    labels = _bo_labels(p)
    idx = p.boundary_indices
    answers = np.asarray(oracle(noisy.features[idx]), dtype=np.int64)
    labels[idx] = answers
    fused = FusedTrainingSet(noisy.features, labels, "AT", queried_indices=idx)
    return fused, QueryLedger(idx.copy(), answers)


def pro_pt_tag(p: Partition, noisy: NoisyDataset, eta_rho: Callable, noise) -> FusedTrainingSet:
    """Attach the corrected posterior to every boundary sample."""
    idx = p.boundary_indices
    Xb = noisy.features[idx]
    rp, rm = noise.rates(Xb)
    eta_pse = pseudo_posterior(np.asarray(eta_rho(Xb)), rp, rm)
    return FusedTrainingSet(noisy.features, _bo_labels(p), "PT",
                            pseudo_indices=idx, eta_pse=np.atleast_1d(eta_pse))


def hybrid_tag(p: Partition, noisy: NoisyDataset, eta_rho: Callable, noise,
               oracle: Callable, query_fraction: float):
    """Query the ``query_fraction`` most ambiguous boundary samples, pseudo-tag the rest.

    Ambiguity is ``|s_i|``; the smallest scores are queried first (a
    heuristic, no ordering is prescribed by the method itself).
    """
    if not 0.0 <= query_fraction <= 1.0:
        raise ValueError("query_fraction must lie in [0, 1]")
    idx = p.boundary_indices
    order = idx[np.argsort(np.abs(p.scores[idx]), kind="stable")]
    k = int(np.floor(query_fraction * len(idx)))
    asked, rest = np.sort(order[:k]), np.sort(order[k:])
    labels = _bo_labels(p)
    answers = np.asarray(oracle(noisy.features[asked]), dtype=np.int64)
    labels[asked] = answers
    Xr = noisy.features[rest]
    rp, rm = noise.rates(Xr)
    eta_pse = np.atleast_1d(pseudo_posterior(np.asarray(eta_rho(Xr)), rp, rm))
    fused = FusedTrainingSet(noisy.features, labels, "HYBRID", pseudo_indices=rest,
                             eta_pse=eta_pse, queried_indices=asked)
    return fused, QueryLedger(asked.copy(), answers)


def bernoulli_label(u, p) -> np.ndarray:
    """``2 I(u < p) - 1``."""
    return np.where(np.asarray(u) < np.asarray(p), 1, -1).astype(np.int64)


class PseudoLabelProvider:
    """Per-epoch labels for a PT/HYBRID fused set.

    Epoch ``e`` draws ``u_i ~ U[0, 1]`` from the stream ``rng.child(e)`` and
    sets ``y_i = 2 I(u_i < eta_pse_i) - 1`` for each pseudo-tagged row; fixed
    rows are returned unchanged.  Draws depend only on ``(rng, epoch)``, so
    replaying an epoch reproduces its labels.
    """

    def __init__(self, fused: FusedTrainingSet, rng=None):
        if fused.mode == "AT":
            raise ModeMismatch("pseudo-label provider needs a PT or HYBRID fused set")
        self.fused = fused
        self.rng = as_rng(rng)

    def __len__(self):
        return len(self.fused)

    def draw(self, epoch: int) -> np.ndarray:
        """Pseudo-labels for the boundary rows only."""
        u = self.rng.child(int(epoch)).generator().random(len(self.fused.pseudo_indices))
        return bernoulli_label(u, self.fused.eta_pse)

    def __call__(self, epoch: int) -> np.ndarray:
        labels = self.fused.labels.copy()
        labels[self.fused.pseudo_indices] = self.draw(epoch)
        return labels


def pt_label_provider(fused: FusedTrainingSet, rng=None) -> PseudoLabelProvider:
    return PseudoLabelProvider(fused, rng)


def bo_only_set(p: Partition, noisy: NoisyDataset):
    """Features and labels of the extracted samples alone (boundary discarded)."""
    return noisy.features[p.bo_indices], p.bo_labels.copy()
