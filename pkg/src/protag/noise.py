"""Noise-rate estimation, the noisy-posterior link and its inverse.

The noisy posterior relates to the clean one through

    eta_rho(x) = (1 - rho_plus(x) - rho_minus(x)) * eta(x) + rho_minus(x)

and the corrected ("pseudo") posterior inverts that relation with estimated
quantities.  Estimated rate pairs are projected so that
``rho_plus + rho_minus <= 1 - DELTA`` everywhere they are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .data import AuditedDataset, NoisyDataset, check_features, validate_dataset
from .exceptions import EmptyDataset, InvalidNoise, MissingClass
from .learners import LearnerSpec, fit_regressor

DELTA = 0.01
PSEUDO_CLIP = 1e-6


def project_rates(rho_plus, rho_minus, delta=DELTA):
    """Scale each pair down multiplicatively when its sum exceeds ``1 - delta``."""
    rp = np.clip(np.asarray(rho_plus, dtype=np.float64), 0.0, 1.0)
    rm = np.clip(np.asarray(rho_minus, dtype=np.float64), 0.0, 1.0)
    total = rp + rm
    scale = np.divide(1.0 - delta, total, out=np.ones_like(total), where=total > 1.0 - delta)
    return rp * scale, rm * scale


@dataclass(frozen=True)
class ClassNoise:
    rho_plus: float
    rho_minus: float

    def __post_init__(self):
        if not (0 <= self.rho_plus < 1 and 0 <= self.rho_minus < 1):
            raise InvalidNoise("class noise rates must lie in [0, 1)")
        if self.rho_plus + self.rho_minus >= 1:
            raise InvalidNoise("rho_plus + rho_minus must be < 1")

    def rates(self, X):
        n = np.asarray(X).shape[0]
        return np.full(n, self.rho_plus), np.full(n, self.rho_minus)


@dataclass(frozen=True)
class InstanceNoise:
    """Fitted rate functions; evaluation clips to [0, 1] and projects pairs."""

    rho_plus_fn: Callable
    rho_minus_fn: Callable
    delta: float = DELTA

    def rates(self, X):
        return project_rates(self.rho_plus_fn(X), self.rho_minus_fn(X), self.delta)


NoiseModel = Union[ClassNoise, InstanceNoise]


class NoisyPosterior:
    """Callable wrapper around a fitted regressor of ``I(noisy label = +1)``."""

    def __init__(self, model):
        self.model = model

    def __call__(self, X):
        return np.clip(self.model.predict(X), 0.0, 1.0)


def noisy_posterior_forward(eta, rho_plus, rho_minus):
    """``(1 - rho_plus - rho_minus) * eta + rho_minus``."""
    rp = np.asarray(rho_plus, dtype=np.float64)
    rm = np.asarray(rho_minus, dtype=np.float64)
    if np.any(rp + rm >= 1.0):
        raise InvalidNoise("rho_plus + rho_minus must be < 1")
    out = (1.0 - rp - rm) * np.asarray(eta, dtype=np.float64) + rm
    return out if out.ndim else float(out)


def pseudo_posterior(eta_rho, rho_plus, rho_minus):
    """Corrected posterior ``(eta_rho - rho_minus) / (1 - rho_plus - rho_minus)``.

    The denominator is floored at ``1e-6`` and the ratio clipped to [0, 1].
    """
    rp = np.asarray(rho_plus, dtype=np.float64)
    rm = np.asarray(rho_minus, dtype=np.float64)
    denom = np.maximum(1.0 - rp - rm, PSEUDO_CLIP)
    out = np.clip((np.asarray(eta_rho, dtype=np.float64) - rm) / denom, 0.0, 1.0)
    return out if out.ndim else float(out)


def estimate_class_noise(audited: AuditedDataset, delta=DELTA) -> ClassNoise:
    """Per-class flip frequencies in the audited sample, then projected."""
    y = np.asarray(audited.clean_labels)
    yt = np.asarray(audited.noisy_labels)
    pos, neg = y == 1, y == -1
    if not pos.any() or not neg.any():
        raise MissingClass("both clean classes are needed to estimate class noise")
    rp = np.count_nonzero(pos & (yt != y)) / np.count_nonzero(pos)
    rm = np.count_nonzero(neg & (yt != y)) / np.count_nonzero(neg)
    rp, rm = project_rates(rp, rm, delta)
    return ClassNoise(float(rp), float(rm))


def estimate_instance_noise(audited: AuditedDataset, spec: LearnerSpec, rng=None,
                            min_rows=10, delta=DELTA) -> InstanceNoise:
    """Regress the mismatch indicator on ``x`` separately within each clean class."""
    X = check_features(audited.features)
    y = np.asarray(audited.clean_labels)
    mismatch = (np.asarray(audited.noisy_labels) != y).astype(np.float64)
    models = {}
    for c, role in ((1, "rho_plus"), (-1, "rho_minus")):
        mask = y == c
        if np.count_nonzero(mask) < max(min_rows, 1):
            raise MissingClass(
                f"class {c:+d} has {np.count_nonzero(mask)} audited rows; need {min_rows}")
        child = rng.child(role) if hasattr(rng, "child") else rng
        models[role] = fit_regressor(X[mask], mismatch[mask], spec, child)
    return InstanceNoise(models["rho_plus"].predict, models["rho_minus"].predict, delta)


def estimate_noisy_posterior(noisy: NoisyDataset, spec: LearnerSpec, rng=None) -> NoisyPosterior:
    """Regress ``I(noisy label = +1)`` on ``x`` over the noisy set."""
    if len(noisy) == 0:
        raise EmptyDataset("noisy dataset is empty")
    validate_dataset(noisy)
    target = (np.asarray(noisy.noisy_labels) == 1).astype(np.float64)
    return NoisyPosterior(fit_regressor(noisy.features, target, spec, rng))


def estimate_noise(audited: AuditedDataset, kind: str, spec: LearnerSpec | None = None,
                   rng=None) -> NoiseModel:
    """Dispatch on ``kind`` in {"class", "instance"}."""
    if kind == "class":
        return estimate_class_noise(audited)
    if kind == "instance":
        if spec is None:
            raise ValueError("instance noise estimation needs a learner spec")
        return estimate_instance_noise(audited, spec, rng)
    raise ValueError(f"unknown noise kind {kind!r}")
