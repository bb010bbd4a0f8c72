"""End-to-end extraction, tagging and final training on one noisy/audited pair."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .data import AuditedDataset, NoisyDataset, as_rng, validate_dataset
from .exceptions import EmptyDataset
from .learners import LearnerSpec, fit_classifier
from .noise import estimate_noise, estimate_noisy_posterior
from .purify import Partition, budget_partition, extract_bo, margin_scores
from .tagging import (
    FusedTrainingSet,
    QueryLedger,
    bo_only_set,
    hybrid_tag,
    pro_at_tag,
    pro_pt_tag,
    pt_label_provider,
)

PIPELINE_MODES = ("AT", "PT", "HYBRID", "BO")


NUISANCE_DEFAULT = LearnerSpec("mlp", {"step_size": 0.01, "weight_decay": 0.02})
FINAL_DEFAULT = LearnerSpec("mlp")
NOISE_DEFAULT = LearnerSpec("kernel")


def _spec(value, default: LearnerSpec = FINAL_DEFAULT) -> LearnerSpec:
    if value is None:
        return default
    if isinstance(value, LearnerSpec):
        return value
    return LearnerSpec.from_dict(value)


@dataclass(frozen=True)
class PipelineSpec:
    """Learners and options shared by every run of the pipeline.

    ``noise_learner`` fits the instance-dependent rate functions and
    defaults to a kernel smoother with leave-one-out bandwidth.
    ``query_fraction`` only matters in HYBRID mode.
    """

    nuisance: LearnerSpec = NUISANCE_DEFAULT
    final: LearnerSpec = FINAL_DEFAULT
    noise_kind: str = "class"
    noise_learner: LearnerSpec = NOISE_DEFAULT
    loss: str = "hinge"
    query_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "nuisance", _spec(self.nuisance, NUISANCE_DEFAULT))
        object.__setattr__(self, "final", _spec(self.final))
        object.__setattr__(self, "noise_learner", _spec(self.noise_learner, NOISE_DEFAULT))
        if self.noise_kind not in ("class", "instance"):
            raise ValueError(f"noise_kind must be 'class' or 'instance', got {self.noise_kind!r}")
        if self.loss not in ("hinge", "sigmoid"):
            raise ValueError(f"loss must be 'hinge' or 'sigmoid', got {self.loss!r}")
        if not 0.0 <= self.query_fraction <= 1.0:
            raise ValueError("query_fraction must lie in [0, 1]")

    @property
    def noise_spec(self) -> LearnerSpec:
        return self.noise_learner


@dataclass
class PipelineResult:
    model: Any
    partition: Partition
    eta_rho: Callable
    noise: Any
    fused: FusedTrainingSet | None = None
    ledger: QueryLedger = field(default_factory=QueryLedger)


def fit_nuisances(noisy: NoisyDataset, audited: AuditedDataset, spec: PipelineSpec, rng):
    """Noisy posterior on the noisy set and noise rates on the audited set."""
    rng = as_rng(rng)
    eta_rho = estimate_noisy_posterior(noisy, spec.nuisance, rng.child("eta_rho"))
    noise = estimate_noise(audited, spec.noise_kind, spec.noise_spec, rng.child("noise"))
    return eta_rho, noise


def run_pipeline(noisy: NoisyDataset, audited: AuditedDataset | None, mode: str,
                 spec: PipelineSpec, rng=None, *, tau: float | None = None,
                 budget: int | None = None, expert: Callable | None = None,
                 eta_rho: Callable | None = None, noise=None) -> PipelineResult:
    """Extract BO samples, tag the boundary and train the final classifier.

    Exactly one of ``tau`` and ``budget`` selects the partition.  Precomputed
    ``eta_rho``/``noise`` skip the corresponding estimation step (then
    ``audited`` may be ``None``).  ``expert`` is required in AT and HYBRID
    modes.
    """
    if mode not in PIPELINE_MODES:
        raise ValueError(f"mode must be one of {PIPELINE_MODES}, got {mode!r}")
    if (tau is None) == (budget is None):
        raise ValueError("give exactly one of tau and budget")
    if mode in ("AT", "HYBRID") and expert is None:
        raise ValueError(f"{mode} tagging needs an expert oracle")
    rng = as_rng(rng)
    validate_dataset(noisy)
    if eta_rho is None:
        eta_rho = estimate_noisy_posterior(noisy, spec.nuisance, rng.child("eta_rho"))
    if noise is None:
        validate_dataset(audited)
        noise = estimate_noise(audited, spec.noise_kind, spec.noise_spec, rng.child("noise"))

    if budget is not None:
        part = budget_partition(margin_scores(noisy.features, eta_rho, noise), int(budget))
    else:
        part = extract_bo(noisy, eta_rho, noise, tau)

    final_rng = rng.child("final")
    fused, ledger = None, QueryLedger()
    if mode == "BO":
        X, y = bo_only_set(part, noisy)
        if len(y) == 0:
            raise EmptyDataset("no BO samples were extracted; BO-only training is undefined")
    elif mode == "AT":
        fused, ledger = pro_at_tag(part, noisy, expert)
        X, y = fused.features, fused.labels
    elif mode == "PT":
        fused = pro_pt_tag(part, noisy, eta_rho, noise)
        X, y = fused.features, pt_label_provider(fused, rng.child("pseudo"))
    else:
        fused, ledger = hybrid_tag(part, noisy, eta_rho, noise, expert, spec.query_fraction)
        X, y = fused.features, pt_label_provider(fused, rng.child("pseudo"))
    model = fit_classifier(X, y, spec.loss, spec.final, final_rng)
    return PipelineResult(model, part, eta_rho, noise, fused, ledger)

