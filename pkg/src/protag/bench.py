"""Repeated-trial simulation benchmark.

A trial draws a fresh noisy set, audited set and evaluation set from the
configured generator, runs every requested method on them and scores the
resulting classifiers.  Every random draw comes from a stream derived from
``(seed, trial)``, so a trial can be replayed alone and trials can run in
any order or in parallel.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .data import AuditedDataset, NoisyDataset, SeededRng
from .exceptions import ConfigError, ProtagError
from .learners import LearnerSpec, fit_classifier
from .metrics import MetricsReport, evaluate
from .pipeline import FINAL_DEFAULT, NUISANCE_DEFAULT, PipelineSpec, fit_nuisances, run_pipeline
from .purify import extraction_stats
from .selection import check_grid, select_tau_cv
from .simgen import EXAMPLES, MECHANISMS, GeneratorSpec, NoiseSpec, gen_clean, inject_noise, make_audited
from .tagging import SimulatedExpert

log = logging.getLogger(__name__)

METHODS = ("vanilla_d", "vanilla_drho", "bo_only", "pro_pt", "pro_at", "pro_at_budget", "oracle")
METHOD_LABELS = {
    "vanilla_d": "Vanilla-D",
    "vanilla_drho": "Vanilla-Drho",
    "bo_only": "BO-only",
    "pro_pt": "Pro-PT",
    "pro_at": "Pro-AT",
    "pro_at_budget": "Pro-AT(budget)",
    "oracle": "Oracle",
}
# modes of the methods that go through extraction
_PIPELINE_METHODS = {"bo_only": "BO", "pro_pt": "PT", "pro_at": "AT", "pro_at_budget": "AT"}
METRICS = ("excess_risk", "acc", "auc", "f1", "pr_auc")
EXTRA_METRICS = ("fraction", "purity", "query_cost", "tau")
THREADS_ENV = "PROTAG_THREADS"
DEFAULT_TAU_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4)


@dataclass(frozen=True)
class TauSource:
    """How the security margin is set for extraction-based methods.

    ``fixed`` uses ``value``, either one margin for every method or a
    ``{method: margin}`` mapping; ``cv`` runs the cross-validated search
    over ``grid`` inside every trial; ``budget`` puts ``floor(fraction * n)``
    samples on the boundary.
    """

    kind: str = "fixed"
    value: float | dict = 0.3
    grid: tuple[float, ...] = DEFAULT_TAU_GRID
    folds: int = 5
    fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in ("fixed", "cv", "budget"):
            raise ConfigError(f"tau source must be fixed, cv or budget, got {self.kind!r}")
        object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if self.kind == "cv":
            try:
                check_grid(self.grid)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            if self.folds < 2:
                raise ConfigError("cv needs at least 2 folds")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError("budget fraction must lie in [0, 1]")
        values = self.value.values() if isinstance(self.value, dict) else [self.value]
        for v in values:
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError("fixed tau must be finite and non-negative")
        if isinstance(self.value, dict):
            bad = set(self.value) - set(_PIPELINE_METHODS)
            if bad:
                raise ConfigError(f"tau given for methods without extraction: {sorted(bad)}")
            object.__setattr__(self, "value", {k: float(v) for k, v in sorted(self.value.items())})
        else:
            object.__setattr__(self, "value", float(self.value))

    def fixed_for(self, method: str) -> float:
        if isinstance(self.value, dict):
            if method not in self.value:
                raise ConfigError(f"no fixed tau configured for {method}")
            return self.value[method]
        return self.value


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce an experiment.

    ``noise`` names the mechanism used to corrupt the labels; ``noise_kind``
    is the model fitted to estimate it (class-dependent by default, instance
    for the ``instance`` mechanism).  ``budget_fraction`` is the query
    budget of ``pro_at_budget`` as a share of ``n``.
    """

    generator: str = "ex1"
    noise: str = "class_low"
    rho_plus: float | None = None
    rho_minus: float | None = None
    n0: int = 500
    n: int = 5000
    n_eval: int = 20000
    methods: tuple[str, ...] = ("vanilla_drho", "pro_pt", "pro_at", "oracle")
    nuisance: LearnerSpec = NUISANCE_DEFAULT
    final: LearnerSpec = FINAL_DEFAULT
    noise_learner: LearnerSpec | None = None
    noise_kind: str | None = None
    loss: str = "hinge"
    tau: TauSource = field(default_factory=TauSource)
    budget_fraction: float = 0.1
    trials: int = 50
    seed: int = 0
    output: str = "results"

    def __post_init__(self):
        if self.generator not in EXAMPLES:
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.noise not in MECHANISMS:
            raise ConfigError(f"unknown noise mechanism {self.noise!r}")
        _ = self.noise_spec  # validates explicit class rates
        object.__setattr__(self, "methods", tuple(self.methods))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {unknown}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 1 or self.n0 < 1 or self.n_eval < 2:
            raise ConfigError("n and n0 must be positive and n_eval at least 2")
        if not 0.0 <= self.budget_fraction <= 1.0:
            raise ConfigError("budget_fraction must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.loss not in ("hinge", "sigmoid"):
            raise ConfigError(f"loss must be hinge or sigmoid, got {self.loss!r}")
        if self.noise_kind is None:
            object.__setattr__(self, "noise_kind", "instance" if self.noise == "instance" else "class")
        if self.noise_kind not in ("class", "instance"):
            raise ConfigError(f"noise_kind must be class or instance, got {self.noise_kind!r}")
        for role in ("nuisance", "final", "noise_learner"):
            v = getattr(self, role)
            if v is not None and not isinstance(v, LearnerSpec):
                try:
                    object.__setattr__(self, role, LearnerSpec.from_dict(v))
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"{role}: {e}") from None
        if not isinstance(self.tau, TauSource):
            object.__setattr__(self, "tau", TauSource(**dict(self.tau)))

    @property
    def noise_spec(self) -> NoiseSpec:
        try:
            return NoiseSpec(self.noise, self.rho_plus, self.rho_minus)
        except ProtagError as e:
            raise ConfigError(str(e)) from None

    @property
    def pipeline_spec(self) -> PipelineSpec:
        return PipelineSpec(nuisance=self.nuisance, final=self.final, noise_kind=self.noise_kind,
                            noise_learner=self.noise_learner, loss=self.loss)

    def to_dict(self) -> dict:
        d = asdict(self)
        for role in ("nuisance", "final", "noise_learner"):
            v = getattr(self, role)
            d[role] = None if v is None else v.to_dict()
        d["methods"] = list(self.methods)
        d["tau"]["grid"] = list(self.tau.grid)
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a YAML or JSON config file (JSON is valid YAML)."""
        with open(path) as fh:
            d = yaml.safe_load(fh)
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a mapping at the top level")
        return cls.from_dict(d)

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TrialResult:
    method: str
    trial: int
    metrics: MetricsReport
    m: int | None = None
    fraction: float | None = None
    purity: float | None = None
    query_cost: int = 0
    tau: float | None = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = self.metrics.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "TrialResult":
        d = dict(d)
        d["metrics"] = MetricsReport(**d["metrics"])
        return cls(**d)

    def value(self, name: str):
        if name in METRICS:
            return getattr(self.metrics, name)
        return getattr(self, name)


class TrialFailure(ProtagError, RuntimeError):
    """A method failed inside a trial; ``method``/``trial`` say where."""

    def __init__(self, method: str, trial: int, cause: BaseException):
        super().__init__(f"trial {trial}, method {method}: {type(cause).__name__}: {cause}")
        self.method = method
        self.trial = trial
        self.cause = cause

    def __reduce__(self):
        return (TrialFailure, (self.method, self.trial, self.cause))


@dataclass
class TrialData:
    noisy: NoisyDataset
    clean_labels: np.ndarray
    audited: AuditedDataset
    eval_features: np.ndarray
    eval_labels: np.ndarray
    oracle: Any


def trial_rng(cfg: ExperimentConfig, trial: int) -> SeededRng:
    return SeededRng(cfg.seed).child("trial", int(trial))


def make_trial_data(cfg: ExperimentConfig, trial: int) -> TrialData:
    """Noisy set, independent audited set and evaluation set for one trial."""
    rng = trial_rng(cfg, trial)
    noise = cfg.noise_spec
    X, y, oracle = gen_clean(GeneratorSpec(cfg.generator, cfg.n), rng.child("noisy"))
    oracle = oracle.with_noise(noise)
    y_noisy = inject_noise(y, X, noise, rng.child("flip"))
    Xa, ya, _ = gen_clean(GeneratorSpec(cfg.generator, cfg.n0), rng.child("audit"))
    ya_noisy = inject_noise(ya, Xa, noise, rng.child("audit_flip"))
    audited = make_audited(Xa, ya, ya_noisy, cfg.n0, rng.child("audit_pick"))
    Xe, ye, _ = gen_clean(GeneratorSpec(cfg.generator, cfg.n_eval), rng.child("eval"))
    return TrialData(NoisyDataset(X, y_noisy), y, audited, Xe, ye, oracle)


def _method_tau(cfg, method, data, spec, rng, eta_rho, expert_factory):
    """Return ``(tau, budget)`` for an extraction-based method."""
    if method == "pro_at_budget":
        return None, int(math.floor(cfg.budget_fraction * cfg.n))
    src = cfg.tau
    if src.kind == "fixed":
        return src.fixed_for(method), None
    if src.kind == "budget":
        return None, int(math.floor(src.fraction * cfg.n))
    rep = select_tau_cv(src.grid, data.noisy, data.audited, _PIPELINE_METHODS[method], spec,
                        rng.child("cv", method), expert=expert_factory(("cv_expert", method)),
                        folds=src.folds, eta_rho=eta_rho)
    return rep.tau_star, None


def run_trial(cfg: ExperimentConfig, trial: int) -> list[TrialResult]:
    """Run every configured method on one freshly generated trial.

    All methods train their final classifier from the same ``final``
    stream, so they share initial weights and batch order and differ only
    in their labels.
    """
    rng = trial_rng(cfg, trial)
    data = make_trial_data(cfg, trial)
    spec = cfg.pipeline_spec
    final_rng = rng.child("final")
    eta_fn = data.oracle.eta_fn

    def expert_factory(key):
        return SimulatedExpert(eta_fn, rng.child(*key))

    nuisances = None
    out = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            extra: dict = {}
            if method == "oracle":
                model = fit_classifier(data.noisy.features, data.clean_labels, cfg.loss,
                                       cfg.final, final_rng)
            elif method == "vanilla_drho":
                model = fit_classifier(data.noisy.features, data.noisy.noisy_labels, cfg.loss,
                                       cfg.final, final_rng)
            elif method == "vanilla_d":
                model = fit_classifier(data.audited.features, data.audited.clean_labels,
                                       cfg.loss, cfg.final, final_rng)
            else:
                if nuisances is None:
                    nuisances = fit_nuisances(data.noisy, data.audited, spec, rng.child("nuisance"))
                eta_rho, noise = nuisances
                tau, budget = _method_tau(cfg, method, data, spec, rng, eta_rho, expert_factory)
                res = run_pipeline(data.noisy, None, _PIPELINE_METHODS[method], spec, rng,
                                   tau=tau, budget=budget, expert=expert_factory(("expert", method)),
                                   eta_rho=eta_rho, noise=noise)
                model = res.model
                st = extraction_stats(res.partition, data.noisy.features, eta_fn)
                extra = dict(m=st.m, fraction=st.fraction, purity=st.purity,
                             query_cost=res.ledger.cost, tau=res.partition.tau)
            metrics = evaluate(model, data.eval_features, data.eval_labels, eta_fn)
        except Exception as e:  # noqa: BLE001 - re-raised with context
            raise TrialFailure(method, trial, e) from e
        out.append(TrialResult(method, int(trial), metrics, seconds=time.perf_counter() - t0,
                               **extra))
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialResult]
    failures: list[dict] = field(default_factory=list)

    def by_method(self, method: str) -> list[TrialResult]:
        return [r for r in self.records if r.method == method]

    def values(self, method: str, metric: str) -> np.ndarray:
        v = [r.value(metric) for r in self.by_method(method)]
        return np.array([x for x in v if x is not None], dtype=np.float64)

    def mean(self, method: str, metric: str) -> float:
        return float(np.mean(self.values(method, metric)))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


def _safe_trial(cfg, trial):
    try:
        return trial, run_trial(cfg, trial), None
    except TrialFailure as e:
        return trial, None, {"trial": trial, "method": e.method, "error": str(e)}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run all trials and collect their records, sorted by ``(method, trial)``.

    Trials run in worker processes when ``threads > 1`` (default from the
    ``PROTAG_THREADS`` environment variable).  A failing trial is logged,
    recorded in ``failures`` and left out of every aggregate.
    """
    threads = resolve_threads(threads)
    trials = range(cfg.trials)
    if threads == 1:
        outcomes = [_safe_trial(cfg, t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_safe_trial, [cfg] * cfg.trials, trials))
    records, failures = [], []
    for _, recs, fail in outcomes:
        if fail is not None:
            failures.append(fail)
        else:
            records.extend(recs)
    if failures:
        log.warning("%d of %d trials failed and were excluded", len(failures), cfg.trials)
    order = {m: i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: (order[r.method], r.trial))
    return ExperimentResult(cfg, records, failures)


# -- reporting ---------------------------------------------------------------

def aggregate(result: ExperimentResult) -> list[tuple[str, str, float, float, int]]:
    """``(method, metric, mean, std, trials)`` rows; std is the sample sd (0 for one trial)."""
    rows = []
    for method in result.config.methods:
        if not result.by_method(method):
            continue
        for metric in METRICS + EXTRA_METRICS:
            v = result.values(method, metric)
            if len(v) == 0:
                continue
            std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
            rows.append((method, metric, float(np.mean(v)), std, len(v)))
    return rows


def summary_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "metric", "mean", "std", "trials"])
    for method, metric, mean, std, k in aggregate(result):
        w.writerow([method, metric, repr(mean), repr(std), k])
    return buf.getvalue()


def to_json(result: ExperimentResult) -> str:
    return json.dumps({
        "config": result.config.to_dict(),
        "config_hash": result.config.config_hash(),
        "records": [r.to_dict() for r in result.records],
        "failures": result.failures,
    }, indent=2, sort_keys=True)


def from_json(text: str) -> ExperimentResult:
    d = json.loads(text)
    cfg = ExperimentConfig.from_dict(d["config"])
    if cfg.config_hash() != d.get("config_hash"):
        raise ConfigError("config hash does not match the stored config")
    return ExperimentResult(cfg, [TrialResult.from_dict(r) for r in d["records"]],
                            list(d.get("failures", [])))


def _cell(result: ExperimentResult, method: str, metric: str) -> str:
    v = result.values(method, metric)
    if len(v) == 0:
        return "-"
    std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return f"{np.mean(v):.4f}({std:.4f})"


def markdown_table(results: list[ExperimentResult], labels: list[str] | None = None) -> str:
    """Methods as rows; excess risk, AUC and F1 as ``mean(std)`` per experiment."""
    if not results:
        raise ValueError("nothing to tabulate")
    labels = labels or [f"{r.config.generator}/{r.config.noise}" for r in results]
    cols = [("excess_risk", "Excess 0-1 risk"), ("auc", "AUC"), ("f1", "F1")]
    head = ["Method"] + [f"{lab} {name}" for lab in labels for _, name in cols]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    methods = [m for m in METHODS if any(m in r.config.methods for r in results)]
    for method in methods:
        cells = [METHOD_LABELS[method]]
        for r in results:
            cells += [_cell(r, method, metric) for metric, _ in cols]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(result: ExperimentResult, out_dir, formats=("csv", "json", "markdown")) -> dict:
    """Write ``summary.csv``, ``trials.json`` and ``table.md`` into ``out_dir``."""
    if not result.records:
        raise ValueError("no successful trials to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writers = {
        "csv": ("summary.csv", summary_csv),
        "json": ("trials.json", to_json),
        "markdown": ("table.md", lambda r: markdown_table([r])),
    }
    paths = {}
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}")
        name, fn = writers[fmt]
        path = out / name
        path.write_text(fn(result))
        paths[fmt] = path
    return paths
