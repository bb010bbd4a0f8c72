"""Scikit-learn style front end for the purify-then-tag pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import AuditedDataset, NoisyDataset, as_rng, check_features, check_labels, sign
from .exceptions import ConfigError
from .pipeline import PipelineSpec, run_pipeline
from .selection import select_tau_cv

DEFAULT_TAU_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4)


class ProTagClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier trained on a large noisy set plus a small audited set.

    Samples whose noise-corrected score clears the security margin get the
    Bayes-optimal label; the remaining boundary samples are labelled by an
    expert (``tagging="AT"``), by per-epoch pseudo-labels (``"PT"``), by a
    mix of both (``"HYBRID"``) or dropped (``"BO"``).

    Parameters
    ----------
    tagging : {"AT", "PT", "HYBRID", "BO"}
    tau : float or "cv"
        Security margin.  ``"cv"`` picks it from ``tau_grid`` by
        ``cv_folds``-fold cross-validation on the audited set.
    tau_grid : sequence of float, optional
    budget : int, optional
        If given, the margin is set so that exactly ``budget`` samples fall
        on the boundary; ``tau`` is then ignored.
    noise_kind : {"class", "instance"}
    nuisance, noise_learner, final : LearnerSpec or dict, optional
        Learners for the noisy posterior, the instance noise functions and
        the final classifier.
    loss : {"hinge", "sigmoid"}
    query_fraction : float
        Share of the boundary sent to the expert in HYBRID mode.
    expert : callable, optional
        ``expert(X) -> labels in {-1, +1}``; required for AT and HYBRID.
    cv_folds : int
    random_state : int or SeededRng, optional

    Attributes
    ----------
    tau_ : float
    eta_rho_ : callable
        Fitted noisy posterior.
    noise_ : ClassNoise or InstanceNoise
    partition_ : Partition
    ledger_ : QueryLedger
    model_ : fitted final classifier
    cv_report_ : CvReport or None
    """

    def __init__(self, tagging="AT", tau=0.1, tau_grid=None, budget=None, noise_kind="class",
                 nuisance=None, noise_learner=None, final=None, loss="hinge",
                 query_fraction=0.0, expert=None, cv_folds=5, random_state=None):
        self.tagging = tagging
        self.tau = tau
        self.tau_grid = tau_grid
        self.budget = budget
        self.noise_kind = noise_kind
        self.nuisance = nuisance
        self.noise_learner = noise_learner
        self.final = final
        self.loss = loss
        self.query_fraction = query_fraction
        self.expert = expert
        self.cv_folds = cv_folds
        self.random_state = random_state

    def _pipeline_spec(self) -> PipelineSpec:
        return PipelineSpec(nuisance=self.nuisance, final=self.final, noise_kind=self.noise_kind,
                            noise_learner=self.noise_learner, loss=self.loss,
                            query_fraction=self.query_fraction)

    def fit(self, X, y, *, X_audit, y_audit, y_audit_noisy):
        """Fit on noisy ``(X, y)`` and the audited triple.

        ``y_audit`` are the verified labels of ``X_audit`` and
        ``y_audit_noisy`` the labels they carried before auditing.
        """
        X = check_features(X)
        noisy = NoisyDataset(X, check_labels(y, X.shape[0], "y"))
        Xa = check_features(X_audit, X.shape[1])
        audited = AuditedDataset(Xa, check_labels(y_audit, Xa.shape[0], "y_audit"),
                                 check_labels(y_audit_noisy, Xa.shape[0], "y_audit_noisy"))
        if self.tagging in ("AT", "HYBRID") and self.expert is None:
            raise ConfigError(f"{self.tagging} tagging needs an expert callable")
        spec = self._pipeline_spec()
        rng = as_rng(self.random_state)

        self.cv_report_ = None
        tau = None
        if self.budget is None:
            if isinstance(self.tau, str):
                if self.tau != "cv":
                    raise ConfigError(f"tau must be a number or 'cv', got {self.tau!r}")
                grid = DEFAULT_TAU_GRID if self.tau_grid is None else self.tau_grid
                self.cv_report_ = select_tau_cv(grid, noisy, audited, self.tagging, spec,
                                                rng.child("cv"), expert=self.expert,
                                                folds=self.cv_folds)
                tau = self.cv_report_.tau_star
            else:
                tau = float(self.tau)
        res = run_pipeline(noisy, audited, self.tagging, spec, rng.child("fit"), tau=tau,
                           budget=self.budget, expert=self.expert)
        self.eta_rho_ = res.eta_rho
        self.noise_ = res.noise
        self.partition_ = res.partition
        self.ledger_ = res.ledger
        self.model_ = res.model
        self.tau_ = res.partition.tau
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.decision_function(check_features(X, self.n_features_in_)))

    def predict(self, X):
        return sign(self.decision_function(X))
