"""Synthetic data-generating processes with exact posterior access.

Three covariate models are provided (``ex1``, ``ex2``, ``ex3``).  All of them
share a scalar latent ``S = U + V + W`` with ``eta(x) = sigmoid(S)``:

* ``U`` has CDF ``F(u) = (8 + u^3)/16`` on ``(-2, 2)``; inverted in closed form.
* ``Z ~ Bernoulli(1/2)``.
* ``V ~ Uniform(0, 3)`` when ``|U| > 1/2`` and ``Z = 1``, else ``V = 0``.
* ``W ~ Uniform(0, 1)`` when ``|U| + V > 1`` and ``Z = 1``, else ``W = 0``.

The indicator reading of ``V``/``W`` (draw when the condition holds, zero
otherwise) is an interpretation of the original generator description.

``ex1``: ``d = 10``, ``X1 ~ N(0,1)``, ``X2 = -2 sin(2 X1) + S``, rest ``N(0,1)``,
so ``eta(x) = sigmoid(2 sin(2 x1) + x2)``.  ``ex2`` is ``ex1`` with ``d = 100``.
``ex3``: ``d = 100``, ``x = R theta / |theta|`` with ``theta ~ N(0, I)`` and
``R = (6 + S)/6``, so ``eta(x) = sigmoid(6 (|x| - 1))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import AuditedDataset, as_rng, check_labels
from .exceptions import ConfigError, TooFewSamples

EXAMPLES = ("ex1", "ex2", "ex3")
MECHANISMS = ("class_low", "class_high", "class", "instance")

CLASS_LOW = (0.3, 0.1)  # (rho_plus, rho_minus)
CLASS_HIGH = (0.35, 0.15)


def sigmoid(z):
    return expit(z)


def sample_u(gen: np.random.Generator, n: int) -> np.ndarray:
    """Inverse-CDF draw from ``F(u) = (8 + u^3)/16`` on ``(-2, 2)``."""
    p = gen.random(n)
    return np.cbrt(16.0 * p - 8.0)


def u_cdf(u):
    u = np.clip(np.asarray(u, dtype=np.float64), -2.0, 2.0)
    return (8.0 + u ** 3) / 16.0


def sample_latent(gen: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``S = U + V + W`` (see module docstring)."""
    u = sample_u(gen, n)
    z = gen.random(n) < 0.5
    v_draw = gen.uniform(0.0, 3.0, n)
    w_draw = gen.uniform(0.0, 1.0, n)
    v = np.where((np.abs(u) > 0.5) & z, v_draw, 0.0)
    w = np.where((np.abs(u) + v > 1.0) & z, w_draw, 0.0)
    return u + v + w


def eta_ex12(X):
    X = np.asarray(X, dtype=np.float64)
    return sigmoid(2.0 * np.sin(2.0 * X[:, 0]) + X[:, 1])


def eta_ex3(X):
    X = np.asarray(X, dtype=np.float64)
    return sigmoid(6.0 * (np.linalg.norm(X, axis=1) - 1.0))


@dataclass(frozen=True)
class GeneratorSpec:
    example_id: str = "ex1"
    n: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.example_id not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example_id!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")

    @property
    def dim(self) -> int:
        return 10 if self.example_id == "ex1" else 100


def _default_rho_plus(X):
    return 0.1 + 0.25 * sigmoid(-np.asarray(X)[:, 0])


def _default_rho_minus(X):
    return 0.05 + 0.2 * sigmoid(np.asarray(X)[:, 0])


@dataclass(frozen=True)
class NoiseSpec:
    """Label-noise mechanism.

    ``class_low``/``class_high`` are the fixed class-dependent levels,
    ``class`` takes explicit ``rho_plus``/``rho_minus`` constants and
    ``instance`` takes two callables of the feature matrix (defaults:
    ``rho_minus(x) = 0.05 + 0.2 sigmoid(x1)``, ``rho_plus(x) = 0.1 + 0.25
    sigmoid(-x1)``; their sum never exceeds 0.6).
    """

    mechanism: str = "class_low"
    rho_plus: float | None = None
    rho_minus: float | None = None
    rho_plus_fn: Callable | None = field(default=None, compare=False)
    rho_minus_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown noise mechanism {self.mechanism!r}")
        if self.mechanism == "class":
            if self.rho_plus is None or self.rho_minus is None:
                raise ConfigError("class mechanism needs rho_plus and rho_minus")
            if not (0 <= self.rho_plus < 1 and 0 <= self.rho_minus < 1
                    and self.rho_plus + self.rho_minus < 1):
                raise ConfigError("class noise rates must satisfy rho_plus + rho_minus < 1")

    def rates(self, X):
        """Return ``(rho_plus(x), rho_minus(x))`` arrays for each row of ``X``."""
        n = np.asarray(X).shape[0]
        if self.mechanism == "instance":
            rp = self.rho_plus_fn or _default_rho_plus
            rm = self.rho_minus_fn or _default_rho_minus
            return np.asarray(rp(X), dtype=np.float64), np.asarray(rm(X), dtype=np.float64)
        if self.mechanism == "class_low":
            p, m = CLASS_LOW
        elif self.mechanism == "class_high":
            p, m = CLASS_HIGH
        else:
            p, m = self.rho_plus, self.rho_minus
        return np.full(n, float(p)), np.full(n, float(m))

    def to_dict(self) -> dict:
        d = {"mechanism": self.mechanism}
        if self.mechanism == "class":
            d.update(rho_plus=self.rho_plus, rho_minus=self.rho_minus)
        return d


@dataclass(frozen=True)
class OracleAccess:
    """Exact ``eta`` plus the noise functions and the implied ``eta_rho``."""

    eta_fn: Callable
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def rho_plus_fn(self, X):
        return self.noise.rates(X)[0]

    def rho_minus_fn(self, X):
        return self.noise.rates(X)[1]

    def eta_rho_fn(self, X):
        rp, rm = self.noise.rates(X)
        return (1.0 - rp - rm) * self.eta_fn(X) + rm

    def with_noise(self, noise: NoiseSpec) -> "OracleAccess":
        return OracleAccess(self.eta_fn, noise)


def gen_features(spec: GeneratorSpec, rng=None):
    """Covariates and the exact posterior function for ``spec``."""
    gen = (as_rng(rng) if rng is not None else as_rng(spec.seed)).generator()
    n = spec.n
    s = sample_latent(gen, n)
    if spec.example_id in ("ex1", "ex2"):
        X = gen.standard_normal((n, spec.dim))
        X[:, 1] = -2.0 * np.sin(2.0 * X[:, 0]) + s
        return X, OracleAccess(eta_ex12)
    theta = gen.standard_normal((n, spec.dim))
    r = (6.0 + s) / 6.0
    X = theta * (r / np.linalg.norm(theta, axis=1))[:, None]
    return X, OracleAccess(eta_ex3)


def gen_clean(spec: GeneratorSpec, rng=None):
    """Return ``(X, y, oracle)`` with ``y ~ Bernoulli(eta(x))`` mapped to +/-1.

    ``rng`` defaults to a stream seeded with ``spec.seed``.
    """
    base = as_rng(rng) if rng is not None else as_rng(spec.seed)
    X, oracle = gen_features(spec, base.child("features"))
    u = base.child("labels").generator().random(spec.n)
    y = np.where(u < oracle.eta_fn(X), 1, -1).astype(np.int64)
    return X, y, oracle


def inject_noise(labels, features, noise: NoiseSpec, rng) -> np.ndarray:
    """Flip ``+1`` with prob. ``rho_plus(x)`` and ``-1`` with prob. ``rho_minus(x)``."""
    y = check_labels(labels)
    rp, rm = noise.rates(features)
    if len(rp) != len(y):
        raise ValueError("labels and features disagree in length")
    flip_p = np.where(y == 1, rp, rm)
    u = as_rng(rng).generator().random(len(y))
    return np.where(u < flip_p, -y, y).astype(np.int64)


def make_audited(features, clean_labels, noisy_labels, n0: int, rng) -> AuditedDataset:
    """Uniform subsample of ``n0`` rows without replacement (in random order)."""
    n = len(clean_labels)
    if n0 < 1 or n0 > n:
        raise TooFewSamples(f"need 1 <= n0 <= {n}, got n0={n0}")
    idx = as_rng(rng).generator().permutation(n)[:n0]
    return AuditedDataset(np.asarray(features)[idx], np.asarray(clean_labels)[idx],
                          np.asarray(noisy_labels)[idx])


def build_eval_set(spec: GeneratorSpec, rng=None):
    """Evaluation covariates and oracle; labels are not drawn here."""
    return gen_features(spec, rng)
