"""Dataset containers, label conventions, seeded randomness and fold splitting."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimMismatch,
    EmptyDataset,
    LengthMismatch,
    MissingClass,
    NonFiniteFeature,
    TooFewSamples,
)

LABELS = (-1, 1)


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


@dataclass(frozen=True)
class SeededRng:
    """A reproducible random stream identified by ``(seed, stream)``.

    ``stream`` is a path of non-negative integers; string keys passed to
    :meth:`child` are mapped through CRC32 so call sites can use readable
    role names.  Identical ``(seed, stream)`` pairs always yield the same
    draws and distinct streams are statistically independent (they map to
    distinct ``SeedSequence`` spawn keys).
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", tuple(_key(k) for k in self.stream))

    def child(self, *keys) -> "SeededRng":
        return SeededRng(self.seed, self.stream + tuple(_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))


def as_rng(rng) -> SeededRng:
    """Coerce ``None``/int/SeededRng into a :class:`SeededRng`."""
    if isinstance(rng, SeededRng):
        return rng
    if rng is None:
        return SeededRng(0)
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng))
    raise TypeError(f"cannot build a SeededRng from {type(rng).__name__}")


def check_features(X, n_features=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimMismatch(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[1] < 1:
        raise DimMismatch("feature matrix needs at least one column")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature matrix contains NaN or infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise DimMismatch(f"model was fitted on {n_features} features, got {X.shape[1]}")
    return X


def check_labels(y, n=None, name="labels") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.reshape(-1)
    if n is not None and len(y) != n:
        raise LengthMismatch(f"{name}: expected {n} entries, got {len(y)}")
    if len(y) and not np.all(np.isin(y, LABELS)):
        raise ValueError(f"{name} must take values in {{-1, +1}}")
    return y.astype(np.int64)


def sign(scores) -> np.ndarray:
    """Sign with the tie rule ``sign(0) = +1``."""
    return np.where(np.asarray(scores) >= 0, 1, -1).astype(np.int64)


@dataclass(frozen=True)
class NoisyDataset:
    features: np.ndarray
    noisy_labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        X.setflags(write=False)
        y = np.asarray(self.noisy_labels).reshape(-1)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "noisy_labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class AuditedDataset:
    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        for name in ("clean_labels", "noisy_labels"):
            y = np.asarray(getattr(self, name)).reshape(-1)
            y.setflags(write=False)
            object.__setattr__(self, name, y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx) -> "AuditedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return AuditedDataset(
            self.features[idx], self.clean_labels[idx], self.noisy_labels[idx]
        )


def validate_dataset(ds) -> None:
    """Raise if ``ds`` breaks a container invariant; return ``None`` otherwise."""
    X = np.asarray(ds.features)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DimMismatch(f"features must be 2-D with dim >= 1, got shape {X.shape}")
    n = X.shape[0]
    label_sets = [("noisy_labels", ds.noisy_labels)]
    if isinstance(ds, AuditedDataset):
        label_sets.insert(0, ("clean_labels", ds.clean_labels))
    for name, y in label_sets:
        if len(y) != n:
            raise LengthMismatch(f"{name} has {len(y)} entries for {n} feature rows")
        if n and not np.all(np.isin(y, LABELS)):
            raise ValueError(f"{name} must take values in {{-1, +1}}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("features contain NaN or infinite values")
    if isinstance(ds, AuditedDataset):
        for c in LABELS:
            if not np.any(ds.clean_labels == c):
                raise MissingClass(f"audited clean labels have no samples of class {c:+d}")


def kfold_split(n: int, k: int, rng) -> list[np.ndarray]:
    """Random permutation chopped into ``k`` contiguous folds.

    The first ``n % k`` folds get one extra element, so sizes differ by at
    most one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise TooFewSamples(f"cannot split {n} samples into {k} folds")
    perm = as_rng(rng).generator().permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


# -- CSV -------------------------------------------------------------------

def save_csv(ds, path) -> None:
    """Write ``x0..x{d-1},y_noisy[,y_clean]`` with labels as -1/1."""
    X = ds.features
    header = [f"x{j}" for j in range(X.shape[1])] + ["y_noisy"]
    cols = [ds.noisy_labels]
    if isinstance(ds, AuditedDataset):
        header.append("y_clean")
        cols.append(ds.clean_labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(X.shape[0]):
            w.writerow([repr(float(v)) for v in X[i]] + [int(c[i]) for c in cols])


def load_csv(path):
    """Read a dataset written by :func:`save_csv`.

    Returns an :class:`AuditedDataset` when a ``y_clean`` column is present,
    otherwise a :class:`NoisyDataset`.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyDataset(f"{path} is empty")
    header, body = rows[0], rows[1:]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if "y_noisy" not in header:
        raise ValueError(f"{path}: missing y_noisy column")
    arr = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    X = arr[:, xcols]
    y_noisy = arr[:, header.index("y_noisy")].astype(np.int64)
    if "y_clean" in header:
        ds = AuditedDataset(X, arr[:, header.index("y_clean")].astype(np.int64), y_noisy)
    else:
        ds = NoisyDataset(X, y_noisy)
    validate_dataset(ds)
    return ds
