"""Pluggable learners: a from-scratch MLP, a Nadaraya-Watson smoother and
boosted decision stumps.

Every learner is an sklearn-compatible estimator (``get_params``/``set_params``
work, ``fit`` returns ``self``).  Classifiers expose ``decision_function`` (the
real-valued score ``f``) and ``predict`` (``sign(f)`` with ``sign(0) = +1``);
regressors expose ``predict`` with outputs clipped to ``[0, 1]``.

Classifier ``fit`` accepts either a fixed label vector or a *label provider*:
any callable ``provider(epoch) -> labels`` that returns the full ``{-1, +1}``
label vector to use during that epoch (boosting treats each round as an
epoch).  This is how per-epoch pseudo-label resampling plugs in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import as_rng, check_features, check_labels, sign
from .exceptions import DimMismatch, DivergedTraining, EmptyDataset

LOSSES = ("mse", "hinge", "sigmoid")


# -- losses ----------------------------------------------------------------

def loss_value(kind: str, y, f) -> np.ndarray:
    """Pointwise loss.  For ``mse`` ``y`` is a target in [0, 1]."""
    if kind == "hinge":
        return np.maximum(1.0 - y * f, 0.0)
    if kind == "sigmoid":
        return 1.0 - np.tanh(y * f)
    if kind == "mse":
        return (y - f) ** 2
    raise ValueError(f"unknown loss {kind!r}")


def loss_grad(kind: str, y, f) -> np.ndarray:
    """Derivative of :func:`loss_value` with respect to ``f``."""
    if kind == "hinge":
        return np.where(y * f < 1.0, -y, 0.0).astype(np.float64)
    if kind == "sigmoid":
        t = np.tanh(y * f)
        return -y * (1.0 - t * t)
    if kind == "mse":
        return 2.0 * (f - y)
    raise ValueError(f"unknown loss {kind!r}")


# -- label providers -------------------------------------------------------

class StaticLabels:
    """Label provider returning the same labels at every epoch."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def __call__(self, epoch: int) -> np.ndarray:
        return self.labels

    def __len__(self):
        return len(self.labels)


def as_label_provider(y, n: int):
    if callable(y) and not isinstance(y, np.ndarray):
        return y
    return StaticLabels(check_labels(y, n))


# -- MLP primitives --------------------------------------------------------

def init_mlp(sizes, gen: np.random.Generator) -> list[list[np.ndarray]]:
    """He-initialised weights, zero biases.  ``sizes = [d, h1, ..., 1]``."""
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = gen.normal(0.0, np.sqrt(2.0 / a), size=(a, b))
        params.append([W, np.zeros(b)])
    return params


def mlp_forward(params, X):
    acts = [X]
    pre = []
    for i, (W, b) in enumerate(params):
        z = acts[-1] @ W + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if i < len(params) - 1 else z)
    return acts[-1][:, 0], (acts, pre)


def mlp_backward(params, cache, dout):
    """Gradients of ``sum(dout * f)`` with respect to every parameter."""
    acts, pre = cache
    g = dout[:, None]
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W = params[i][0]
        grads[i] = [acts[i].T @ g, g.sum(axis=0)]
        if i > 0:
            g = (g @ W.T) * (pre[i - 1] > 0)
    return grads


def mlp_loss_and_grad(params, X, y, loss):
    """Mean loss over the rows of ``X`` and its parameter gradients."""
    f, cache = mlp_forward(params, X)
    value = loss_value(loss, y, f).mean()
    grads = mlp_backward(params, cache, loss_grad(loss, y, f) / len(f))
    return value, grads


def _train_mlp(params, X, provider, loss, epochs, batch_size, step_size,
               momentum, weight_decay, gen):
    n = X.shape[0]
    vel = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    history = []
    for epoch in range(epochs):
        y = np.asarray(provider(epoch), dtype=np.float64)
        perm = gen.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            f, cache = mlp_forward(params, X[idx])
            yb = y[idx]
            total += loss_value(loss, yb, f).sum()
            grads = mlp_backward(params, cache, loss_grad(loss, yb, f) / len(idx))
            for p, v, g in zip(params, vel, grads):
                for j in range(2):
                    step = g[j] + weight_decay * p[j] if j == 0 else g[j]
                    v[j] *= momentum
                    v[j] -= step_size * step
                    p[j] += v[j]
        mean = total / n
        if not np.isfinite(mean):
            raise DivergedTraining(f"non-finite training loss at epoch {epoch}")
        history.append(mean)
    return history


class _MLPBase(BaseEstimator):
    _loss = None

    def _fit(self, X, provider, target_mean=None):
        if self.epochs < 0 or self.batch_size < 1 or self.step_size <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and step_size > 0 required")
        rng = as_rng(self.random_state)
        gen = rng.generator()
        self.n_features_in_ = X.shape[1]
        self.x_mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.x_scale_ = np.where(scale > 1e-12, scale, 1.0)
        Z = (X - self.x_mean_) / self.x_scale_
        sizes = [X.shape[1], *self.hidden, 1]
        self.params_ = init_mlp(sizes, gen)
        if target_mean is not None:
            self.params_[-1][1][:] = target_mean
        self.loss_history_ = _train_mlp(
            self.params_, Z, provider, self._loss_kind(), int(self.epochs),
            int(self.batch_size), float(self.step_size), float(self.momentum),
            float(self.weight_decay), gen,
        )
        self.n_epochs_ = int(self.epochs)
        return self

    def _raw(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X, self.n_features_in_)
        f, _ = mlp_forward(self.params_, (X - self.x_mean_) / self.x_scale_)
        return f


class NeuralScorer(ClassifierMixin, _MLPBase):
    """ReLU network trained by minibatch SGD (with momentum) on a margin loss.

    Parameters
    ----------
    hidden : tuple of int
        Hidden-layer widths; at least one layer.
    epochs, batch_size, step_size, momentum : training schedule.
    weight_decay : float
        L2 penalty on weight matrices (not biases).
    loss : {"hinge", "sigmoid"}
    random_state : int or SeededRng
    """

    def __init__(self, hidden=(64, 64), epochs=30, batch_size=128, step_size=0.005,
                 momentum=0.9, weight_decay=0.0, loss="hinge", random_state=None):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.step_size = step_size
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.loss = loss
        self.random_state = random_state

    def _loss_kind(self):
        if self.loss not in ("hinge", "sigmoid"):
            raise ValueError(f"classifier loss must be hinge or sigmoid, got {self.loss!r}")
        return self.loss

    def fit(self, X, y):
        X = check_features(X)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        self._loss_kind()
        self.classes_ = np.array([-1, 1])
        return self._fit(X, as_label_provider(y, X.shape[0]))

    def decision_function(self, X):
        return self._raw(X)

    def predict(self, X):
        return sign(self.decision_function(X))


class NeuralRegressor(RegressorMixin, _MLPBase):
    """Same network trained on squared error; predictions clipped to [0, 1]."""

    def __init__(self, hidden=(64, 64), epochs=30, batch_size=128, step_size=0.01,
                 momentum=0.9, weight_decay=0.02, random_state=None):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.step_size = step_size
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _loss_kind(self):
        return "mse"

    def fit(self, X, y):
        X = check_features(X)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if len(y) != X.shape[0]:
            raise DimMismatch("targets and features disagree in length")
        return self._fit(X, StaticLabels(y), target_mean=float(y.mean()))

    def predict(self, X):
        return np.clip(self._raw(X), 0.0, 1.0)


# -- kernel smoother -------------------------------------------------------

def _sq_dists(A, B):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def _nw_weights(d2, h):
    if np.isinf(h):
        return np.ones_like(d2)
    e = d2 / (2.0 * h * h)
    e -= e.min(axis=1, keepdims=True)
    return np.exp(-e)


class KernelRegressor(RegressorMixin, BaseEstimator):
    """Nadaraya-Watson regression with a Gaussian kernel.

    ``m(x) = sum_i K((x - x_i)/h) t_i / sum_i K((x - x_i)/h)``.  Weights are
    shifted by the nearest training point before exponentiating, so the
    estimate stays defined far from the data (it tends to the nearest
    neighbour's target).  ``bandwidth="loo"`` picks ``h`` from
    ``bandwidth_grid`` (or a data-scaled default grid) by leave-one-out
    squared error.
    """

    def __init__(self, bandwidth="loo", bandwidth_grid=None, chunk_size=512):
        self.bandwidth = bandwidth
        self.bandwidth_grid = bandwidth_grid
        self.chunk_size = chunk_size

    def fit(self, X, y):
        X = check_features(X)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if len(y) != X.shape[0]:
            raise DimMismatch("targets and features disagree in length")
        self.n_features_in_ = X.shape[1]
        self.X_ = X
        self.y_ = y
        if self.bandwidth == "loo":
            grid = self.bandwidth_grid
            if grid is None:
                grid = default_bandwidth_grid(X)
            self.loo_errors_ = loo_errors(X, y, grid, self.chunk_size)
            self.bandwidth_ = float(np.asarray(grid)[int(np.argmin(self.loo_errors_))])
        else:
            if not float(self.bandwidth) > 0:
                raise ValueError("bandwidth must be positive")
            self.bandwidth_ = float(self.bandwidth)
        self.n_epochs_ = 0
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_features(X, self.n_features_in_)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], self.chunk_size):
            w = _nw_weights(_sq_dists(X[s:s + self.chunk_size], self.X_), self.bandwidth_)
            out[s:s + self.chunk_size] = (w @ self.y_) / w.sum(axis=1)
        return np.clip(out, 0.0, 1.0)


def default_bandwidth_grid(X, size=12):
    sub = X[: min(len(X), 1000)]
    d = np.sqrt(_sq_dists(sub, sub))
    med = float(np.median(d[np.triu_indices(len(sub), 1)])) if len(sub) > 1 else 1.0
    med = med if med > 0 else 1.0
    return med * np.geomspace(0.02, 1.0, size)


def loo_errors(X, y, grid, chunk_size=512):
    """Leave-one-out mean squared error of the smoother for each bandwidth."""
    grid = [float(h) for h in grid]
    err = np.zeros(len(grid))
    n = X.shape[0]
    for s in range(0, n, chunk_size):
        d2 = _sq_dists(X[s:s + chunk_size], X)
        rows = np.arange(d2.shape[0])
        for k, h in enumerate(grid):
            e = d2 / (2.0 * h * h)
            e[rows, s + rows] = np.inf
            e -= e.min(axis=1, keepdims=True)
            w = np.exp(-e)
            pred = (w @ y) / w.sum(axis=1)
            err[k] += ((pred - y[s:s + chunk_size]) ** 2).sum()
    return err / n


# -- boosted stumps --------------------------------------------------------

def _fit_stump(X, order, g):
    """Least-squares depth-1 tree on residuals ``g``.

    ``order[:, j]`` holds the argsort of column ``j``.  Returns
    ``(feature, threshold, left_value, right_value)``; a constant fit is
    returned when no column has a usable split.
    """
    n = len(g)
    total = g.sum()
    best = (-1, 0.0, total / n, total / n)
    best_gain = total * total / n
    for j in range(X.shape[1]):
        idx = order[:, j]
        xs = X[idx, j]
        cs = np.cumsum(g[idx])[:-1]
        nl = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        gain = cs ** 2 / nl + (total - cs) ** 2 / (n - nl)
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain + 1e-12:
            best_gain = gain[k]
            best = (j, 0.5 * (xs[k] + xs[k + 1]), cs[k] / nl[k], (total - cs[k]) / (n - nl[k]))
    return best


class BoostedStumps(ClassifierMixin, BaseEstimator):
    """Functional gradient boosting of a margin loss with axis-aligned stumps.

    Each round fits a least-squares stump to the negative loss gradient and
    adds ``shrinkage`` times it to the score.
    """

    def __init__(self, n_rounds=200, shrinkage=0.1, loss="hinge"):
        self.n_rounds = n_rounds
        self.shrinkage = shrinkage
        self.loss = loss

    def fit(self, X, y):
        X = check_features(X)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        if self.loss not in ("hinge", "sigmoid"):
            raise ValueError(f"classifier loss must be hinge or sigmoid, got {self.loss!r}")
        provider = as_label_provider(y, X.shape[0])
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        order = np.argsort(X, axis=0, kind="stable")
        f = np.zeros(X.shape[0])
        self.stumps_ = []
        self.loss_history_ = []
        for r in range(int(self.n_rounds)):
            yr = np.asarray(provider(r), dtype=np.float64)
            j, thr, lv, rv = _fit_stump(X, order, -loss_grad(self.loss, yr, f))
            lv, rv = self.shrinkage * lv, self.shrinkage * rv
            self.stumps_.append((j, thr, lv, rv))
            f += lv if j < 0 else np.where(X[:, j] <= thr, lv, rv)
            mean = float(loss_value(self.loss, yr, f).mean())
            if not np.isfinite(mean):
                raise DivergedTraining(f"non-finite training loss at round {r}")
            self.loss_history_.append(mean)
        self.n_epochs_ = int(self.n_rounds)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "stumps_")
        X = check_features(X, self.n_features_in_)
        f = np.zeros(X.shape[0])
        for j, thr, lv, rv in self.stumps_:
            f += lv if j < 0 else np.where(X[:, j] <= thr, lv, rv)
        return f

    def predict(self, X):
        return sign(self.decision_function(X))


class ConstantRegressor(RegressorMixin, BaseEstimator):
    """Exact fit for a constant target; used to short-circuit degenerate fits."""

    def __init__(self, value=0.0):
        self.value = value

    def fit(self, X, y=None):
        self.n_features_in_ = check_features(X).shape[1]
        self.n_epochs_ = 0
        return self

    def predict(self, X):
        X = check_features(X, self.n_features_in_)
        return np.full(X.shape[0], float(np.clip(self.value, 0.0, 1.0)))


# -- specs and functional entry points --------------------------------------

KINDS = ("mlp", "kernel", "boosted_stumps")

_MLP_DEFAULTS = dict(hidden=(64, 64), epochs=30, batch_size=128, step_size=0.005,
                     momentum=0.9, weight_decay=0.0)
_KERNEL_DEFAULTS = dict(bandwidth="loo", bandwidth_grid=None)
_STUMP_DEFAULTS = dict(n_rounds=200, shrinkage=0.1)


@dataclass(frozen=True)
class LearnerSpec:
    """Learner family plus hyperparameters, as written in experiment configs."""

    kind: str = "mlp"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        defaults = {"mlp": _MLP_DEFAULTS, "kernel": _KERNEL_DEFAULTS,
                    "boosted_stumps": _STUMP_DEFAULTS}[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparameters: {sorted(unknown)}")
        merged = {**defaults, **dict(self.params)}
        if self.kind == "mlp":
            merged["hidden"] = tuple(int(h) for h in merged["hidden"])
            if len(merged["hidden"]) < 1 or min(merged["hidden"]) < 1:
                raise ValueError("mlp needs at least one hidden layer of positive width")
            if merged["batch_size"] < 1 or merged["step_size"] <= 0 or merged["epochs"] < 0:
                raise ValueError("mlp requires batch_size >= 1, step_size > 0, epochs >= 0")
            if not 0 <= merged["momentum"] < 1 or merged["weight_decay"] < 0:
                raise ValueError("mlp requires 0 <= momentum < 1 and weight_decay >= 0")
        elif self.kind == "kernel":
            bw = merged["bandwidth"]
            if bw != "loo" and not float(bw) > 0:
                raise ValueError("kernel bandwidth must be positive or 'loo'")
        else:
            if merged["n_rounds"] < 0 or merged["shrinkage"] <= 0:
                raise ValueError("boosted_stumps requires n_rounds >= 0 and shrinkage > 0")
        object.__setattr__(self, "params", merged)

    @classmethod
    def from_dict(cls, d) -> "LearnerSpec":
        d = dict(d)
        kind = d.pop("kind", "mlp")
        params = d.pop("params", None)
        if params is None:
            params = d
        return cls(kind, params)

    def to_dict(self) -> dict:
        p = dict(self.params)
        if "hidden" in p:
            p["hidden"] = list(p["hidden"])
        return {"kind": self.kind, "params": p}


def fit_regressor(features, targets, spec: LearnerSpec, rng=None):
    """Fit ``E[target | x]`` by squared-error minimisation.

    A constant target vector is fitted exactly without training.
    """
    if spec.kind not in ("mlp", "kernel"):
        raise ValueError(f"regression needs an mlp or kernel learner, got {spec.kind!r}")
    X = check_features(features)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise EmptyDataset("cannot fit a regressor on an empty dataset")
    if len(t) != X.shape[0]:
        raise DimMismatch("targets and features disagree in length")
    if np.all(t == t[0]):
        return ConstantRegressor(float(t[0])).fit(X)
    if spec.kind == "kernel":
        return KernelRegressor(**spec.params).fit(X, t)
    return NeuralRegressor(**spec.params, random_state=as_rng(rng)).fit(X, t)


def fit_classifier(features, labels, loss: str, spec: LearnerSpec, rng=None):
    """Minimise the empirical ``loss`` over the learner's function class.

    ``labels`` is either a ``{-1, +1}`` vector or a label provider.
    """
    if loss not in ("hinge", "sigmoid"):
        raise ValueError(f"classifier loss must be hinge or sigmoid, got {loss!r}")
    if spec.kind == "mlp":
        est = NeuralScorer(**spec.params, loss=loss, random_state=as_rng(rng))
    elif spec.kind == "boosted_stumps":
        est = BoostedStumps(**spec.params, loss=loss)
    else:
        raise ValueError(f"classification needs an mlp or boosted_stumps learner, got {spec.kind!r}")
    return est.fit(features, labels)


def predict_labels(model, features) -> np.ndarray:
    """``sign(f(x))`` per row, with ``sign(0) = +1``."""
    return sign(model.decision_function(features))

