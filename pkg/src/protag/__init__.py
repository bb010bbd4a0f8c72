"""Learning from a large noisy-label set and a small audited set.

Samples whose noise-corrected posterior is clearly on one side of the
decision threshold are relabelled with the Bayes-optimal label; the
remaining boundary samples are tagged by an expert or by pseudo-labels
before the final classifier is trained.
"""

from .data import AuditedDataset, NoisyDataset, SeededRng, kfold_split, load_csv, save_csv
from .estimator import ProTagClassifier
from .exceptions import (
    ConfigError,
    DimMismatch,
    DivergedTraining,
    EmptyDataset,
    InvalidNoise,
    LengthMismatch,
    MissingClass,
    ModeMismatch,
    NonFiniteFeature,
    ProtagError,
    TooFewSamples,
)
from .learners import LearnerSpec, fit_classifier, fit_regressor, predict_labels
from .metrics import MetricsReport, accuracy, auc, evaluate, excess_risk_mc, f1, pr_auc
from .noise import (
    ClassNoise,
    InstanceNoise,
    estimate_class_noise,
    estimate_instance_noise,
    estimate_noisy_posterior,
    noisy_posterior_forward,
    pseudo_posterior,
)
from .pipeline import PipelineSpec, run_pipeline
from .purify import budget_margin_search, extract_bo, extract_bo_budget, extraction_stats
from .selection import select_tau_cv
from .tagging import SimulatedExpert, pro_at_tag, pro_pt_tag, pt_label_provider

__version__ = "0.1.0"
