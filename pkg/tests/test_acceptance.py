"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest -m acceptance -s tests/test_acceptance.py``.  The
experiment fixtures are module scoped so each configuration runs once.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from protag.bench import ExperimentConfig, make_trial_data, run_experiment, trial_rng
from protag.data import NoisyDataset, SeededRng
from protag.learners import mlp_loss_and_grad
from protag.metrics import accuracy, auc, f1, pr_auc
from protag.noise import ClassNoise, noisy_posterior_forward, pseudo_posterior
from protag.pipeline import fit_nuisances
from protag.purify import extract_bo, extraction_stats
from protag.simgen import GeneratorSpec, NoiseSpec, gen_clean, inject_noise
from protag.tagging import pro_pt_tag, pt_label_provider

from test_learners import nondifferentiable, numeric_grad, random_config, relative_error
from test_metrics import brute_auc, brute_pr_auc, confusion

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TAU_GRID = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4]


def load(name, **changes):
    cfg = ExperimentConfig.load(CONFIGS / name)
    return cfg.replace(**changes) if changes else cfg


@pytest.fixture(scope="module")
def table_low():
    t0 = time.perf_counter()
    res = run_experiment(load("ex1_class_low.yaml"))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def table_high():
    return run_experiment(load("ex1_class_high.yaml"))


def test_excess_risk_band(table_low, verdict):
    res, seconds = table_low
    mean = {m: res.mean(m, "excess_risk") for m in ("oracle", "pro_at", "pro_pt", "vanilla_drho")}
    trials = len(res.by_method("pro_at"))
    checks = {
        "trials>=50": trials >= 50,
        "Pro-AT in [0.03,0.08]": 0.03 <= mean["pro_at"] <= 0.08,
        "Vanilla-Drho in [0.05,0.12]": 0.05 <= mean["vanilla_drho"] <= 0.12,
        "Oracle<=Pro-AT": mean["oracle"] <= mean["pro_at"],
        "Pro-AT<=Pro-PT": mean["pro_at"] <= mean["pro_pt"],
        "Pro-PT<Vanilla-Drho": mean["pro_pt"] < mean["vanilla_drho"],
        "runtime<=30min": seconds <= 1800,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (", ".join(f"{m}={v:.4f}" for m, v in mean.items())
              + f", trials={trials}, {seconds:.0f}s" + (f"; failed: {failed}" if failed else ""))
    verdict("1 low-noise excess-risk band and ordering", not failed, detail)


def test_noise_robustness(table_low, table_high, verdict):
    low, _ = table_low
    high = table_high
    at = abs(high.mean("pro_at", "f1") - low.mean("pro_at", "f1"))
    drop = low.mean("vanilla_drho", "f1") - high.mean("vanilla_drho", "f1")
    n = min(len(low.by_method("pro_at")), len(high.by_method("pro_at")))
    ok = at <= 0.02 and drop >= 0.015 and n >= 50
    verdict("2 noise robustness of F1", ok,
            f"|dF1 Pro-AT|={at:.4f}, Vanilla-Drho drop={drop:.4f}, trials={n}")


def test_oracle_purity(verdict):
    noise = NoiseSpec("class_low")
    X, y, oracle = gen_clean(GeneratorSpec("ex1", 20_000), SeededRng(101))
    oracle = oracle.with_noise(noise)
    ds = NoisyDataset(X, inject_noise(y, X, noise, SeededRng(102)))
    exact = ClassNoise(*(r[0] for r in noise.rates(X[:1])))
    out = []
    for tau in (0.01, 0.05, 0.1):
        st = extraction_stats(extract_bo(ds, oracle.eta_rho_fn, exact, tau), X, oracle.eta_fn)
        out.append((tau, st.m, st.purity))
    ok = all(m >= 10_000 and p == 1.0 for _, m, p in out)
    verdict("3 oracle-nuisance extraction purity", ok,
            ", ".join(f"tau={t}: m={m} purity={p}" for t, m, p in out))


def test_extraction_fraction_growth(verdict):
    base = load("ex1_class_low.yaml", trials=20)
    tau = base.tau.fixed_for("pro_at")
    spec = base.pipeline_spec
    fractions = []
    for n in (1000, 5000, 20000):
        cfg = base.replace(n=n, n_eval=2)
        f = []
        for t in range(cfg.trials):
            data = make_trial_data(cfg, t)
            eta, noise = fit_nuisances(data.noisy, data.audited, spec, trial_rng(cfg, t).child("nuisance"))
            f.append(extract_bo(data.noisy, eta, noise, tau).m / n)
        fractions.append(float(np.mean(f)))
    ok = fractions[0] <= fractions[1] <= fractions[2]
    verdict("4 extraction fraction non-decreasing in n", ok,
            f"tau={tau}, mean fraction n=1000/5000/20000: "
            + "/".join(f"{v:.4f}" for v in fractions))


def test_pseudo_label_fidelity(verdict):
    noise = NoiseSpec("class_low")
    X, y, oracle = gen_clean(GeneratorSpec("ex1", 5000), SeededRng(201))
    oracle = oracle.with_noise(noise)
    exact = ClassNoise(*(r[0] for r in noise.rates(X[:1])))
    full = NoisyDataset(X, inject_noise(y, X, noise, SeededRng(202)))
    boundary = extract_bo(full, oracle.eta_rho_fn, exact, 0.1).boundary_indices[:100]
    ds = NoisyDataset(X[boundary], full.noisy_labels[boundary])
    part = extract_bo(ds, oracle.eta_rho_fn, exact, 0.1)
    fused = pro_pt_tag(part, ds, oracle.eta_rho_fn, exact)
    provider = pt_label_provider(fused, SeededRng(203))
    R = 10_000
    hits = np.zeros(len(boundary))
    for epoch in range(R):
        hits += provider.draw(epoch) == 1
    q = fused.eta_pse
    inside = int(np.sum(np.abs(hits / R - q) <= 3 * np.sqrt(q * (1 - q) / R)))
    ok = len(boundary) == 100 and inside >= 97
    verdict("5 pseudo-label fidelity", ok, f"{inside}/100 points inside the 3-sigma band")


def test_round_trip(verdict):
    eta = np.linspace(0, 1, 1001)
    pairs = [(0.0, 0.0), (0.3, 0.1), (0.35, 0.15), (0.1, 0.3), (0.2, 0.2),
             (0.45, 0.45), (0.0, 0.49), (0.49, 0.0), (0.6, 0.3)]
    err = max(float(np.max(np.abs(pseudo_posterior(noisy_posterior_forward(eta, rp, rm), rp, rm) - eta)))
              for rp, rm in pairs)
    verdict("6 noisy-posterior round trip", err <= 1e-12, f"max error {err:.3e}")


def test_cv_tau_efficacy(verdict):
    base = load("ex1_class_low.yaml", methods=["pro_at"], trials=20)
    cv = run_experiment(base.replace(tau={"kind": "cv", "grid": TAU_GRID, "folds": 5}))
    fixed = run_experiment(base.replace(tau={"kind": "fixed", "value": 0.01}))
    a_cv, a_fix = cv.mean("pro_at", "acc"), fixed.mean("pro_at", "acc")
    n = min(len(cv.records), len(fixed.records))
    taus = np.array([r.tau for r in cv.records])
    ok = a_cv >= a_fix and n >= 20
    verdict("7 cross-validated margin vs tau=0.01", ok,
            f"acc tau*={a_cv:.4f}, acc tau=0.01={a_fix:.4f}, seeds={n}, "
            f"tau* counts {dict(zip(*np.unique(taus, return_counts=True)))}")


def test_metric_oracles(verdict):
    gen = np.random.default_rng(301)
    worst = 0.0
    counts_ok = True
    for _ in range(100):
        n = int(gen.integers(2, 201))
        scores = np.round(gen.normal(size=n), int(gen.integers(0, 3)))
        labels = np.where(gen.random(n) < 0.5, 1, -1)
        labels[0], labels[1] = 1, -1
        worst = max(worst, abs(auc(scores, labels) - brute_auc(scores, labels)),
                    abs(pr_auc(scores, labels) - brute_pr_auc(scores, labels)))
        pred = np.where(scores >= 0, 1, -1)
        tp, fp, fn, tn = confusion(pred, labels)
        counts_ok &= abs(f1(pred, labels) - 2 * tp / max(2 * tp + fp + fn, 1)) <= 1e-15
        counts_ok &= abs(accuracy(pred, labels) - (tp + tn) / n) <= 1e-15
    verdict("8 metric oracles", worst <= 1e-12 and counts_ok,
            f"max AUC/PR-AUC deviation {worst:.3e}, counts match={counts_ok}")


def test_cli_determinism(tmp_path, verdict):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cmd = [sys.executable, "-m", "protag.cli", "run", "--config", str(CONFIGS / "ex1_class_low.yaml"),
               "--seed", "7", "--trials", "2", "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append((out / "summary.csv").read_bytes())
    verdict("9 run twice gives byte-identical CSV", outs[0] == outs[1], f"{len(outs[0])} bytes")


def test_gradient_check(verdict):
    worst = {}
    for loss, seed in (("mse", 401), ("hinge", 402), ("sigmoid", 403)):
        gen = np.random.default_rng(seed)
        errs = []
        while len(errs) < 20:
            params, X, y = random_config(gen, loss)
            if nondifferentiable(params, X, y, loss):
                continue
            _, grads = mlp_loss_and_grad(params, X, y, loss)
            num = numeric_grad(params, X, y, loss)
            a = np.concatenate([g.ravel() for layer in grads for g in layer])
            b = np.concatenate([g.ravel() for layer in num for g in layer])
            errs.append(relative_error(a, b))
        worst[loss] = max(errs)
    verdict("10 MLP gradient check", all(v <= 1e-4 for v in worst.values()),
            ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()))


def test_instance_noise_ordering(verdict):
    cfg = load("ex1_instance.yaml", methods=["vanilla_drho", "pro_at"])
    res = run_experiment(cfg)
    at, vd = res.mean("pro_at", "excess_risk"), res.mean("vanilla_drho", "excess_risk")
    n = len(res.by_method("pro_at"))
    verdict("instance noise: Pro-AT below Vanilla-Drho", at < vd and n >= 50,
            f"Pro-AT={at:.4f}, Vanilla-Drho={vd:.4f}, trials={n}")
