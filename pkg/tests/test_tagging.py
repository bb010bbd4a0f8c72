import numpy as np
import numpy.testing as npt
import pytest

from protag.data import NoisyDataset, SeededRng
from protag.exceptions import ModeMismatch
from protag.noise import ClassNoise, pseudo_posterior
from protag.purify import partition_from_scores
from protag.tagging import (
    SimulatedExpert,
    bernoulli_label,
    bo_only_set,
    hybrid_tag,
    pro_at_tag,
    pro_pt_tag,
    pt_label_provider,
)


def make(scores, tau=0.1):
    scores = np.asarray(scores, dtype=np.float64)
    X = scores.reshape(-1, 1).copy()
    ds = NoisyDataset(X, np.ones(len(scores), dtype=int))
    return partition_from_scores(scores, tau), ds


class TestExpert:
    def test_eta_one(self):
        e = SimulatedExpert(lambda X: np.ones(len(X)), SeededRng(0))
        npt.assert_array_equal(e(np.zeros((50, 2))), np.ones(50))
        assert e.n_queries == 50

    def test_eta_zero(self):
        e = SimulatedExpert(lambda X: np.zeros(len(X)), SeededRng(0))
        npt.assert_array_equal(e(np.zeros((5, 2))), -np.ones(5))

    def test_frequency(self):
        n = 100_000
        e = SimulatedExpert(lambda X: np.full(len(X), 0.3), SeededRng(1))
        f = np.mean(e(np.zeros((n, 1))) == 1)
        assert abs(f - 0.3) <= 3 * np.sqrt(0.21 / n)

    def test_empty(self):
        e = SimulatedExpert(lambda X: np.ones(len(X)), SeededRng(0))
        assert e(np.zeros((0, 1))).shape == (0,)
        assert e.n_queries == 0


class TestProAT:
    def test_cost_equals_boundary(self):
        p, ds = make([-0.5, -0.05, 0.0, 0.02, 0.7])
        e = SimulatedExpert(lambda X: np.ones(len(X)), SeededRng(0))
        fused, ledger = pro_at_tag(p, ds, e)
        assert ledger.cost == 3 == e.n_queries
        npt.assert_array_equal(fused.labels, [-1, 1, 1, 1, 1])
        npt.assert_array_equal(fused.source(), ["bo", "expert", "expert", "expert", "bo"])

    def test_no_boundary(self):
        p, ds = make([-0.5, 0.7])
        fused, ledger = pro_at_tag(p, ds, SimulatedExpert(lambda X: np.ones(len(X))))
        assert ledger.cost == 0
        npt.assert_array_equal(fused.labels, [-1, 1])

    def test_ledger_csv(self, tmp_path):
        p, ds = make([0.0, 0.5])
        _, ledger = pro_at_tag(p, ds, lambda X: -np.ones(len(X), dtype=int))
        ledger.to_csv(tmp_path / "q.csv")
        assert (tmp_path / "q.csv").read_text().splitlines() == ["index,label", "0,-1"]


class TestProPT:
    def test_eta_pse_half(self):
        # eta_rho at the corrected threshold maps to eta_pse = 1/2
        noise = ClassNoise(0.3, 0.1)
        p, ds = make([0.0, 0.5])
        fused = pro_pt_tag(p, ds, lambda X: np.full(len(X), 0.4), noise)
        npt.assert_array_equal(fused.pseudo_indices, [0])
        npt.assert_allclose(fused.eta_pse, [0.5], atol=1e-15)

    def test_eta_pse_values(self):
        noise = ClassNoise(0.3, 0.1)
        p, ds = make([-0.05, 0.05, 0.0])
        eta_rho = lambda X: 0.4 + X[:, 0]
        fused = pro_pt_tag(p, ds, eta_rho, noise)
        npt.assert_allclose(fused.eta_pse, pseudo_posterior(0.4 + np.array([-0.05, 0.05, 0.0]), 0.3, 0.1))

    def test_label_rule(self):
        npt.assert_array_equal(bernoulli_label([0.1, 0.5, 0.9], [0.5, 0.5, 0.5]), [1, -1, -1])

    def test_sources_exclusive(self):
        p, ds = make([-0.5, 0.0, 0.05, 0.5])
        fused = pro_pt_tag(p, ds, lambda X: np.full(len(X), 0.5), ClassNoise(0.2, 0.2))
        src = fused.source()
        npt.assert_array_equal(src, ["bo", "pseudo", "pseudo", "bo"])

    def test_provider_replays_epochs(self):
        p, ds = make(np.linspace(-0.1, 0.1, 21))
        fused = pro_pt_tag(p, ds, lambda X: np.full(len(X), 0.5), ClassNoise(0.2, 0.2))
        prov = pt_label_provider(fused, SeededRng(5))
        npt.assert_array_equal(prov(3), prov(3))
        assert not np.array_equal(prov(0), prov(1))
        assert set(np.unique(prov(0))) <= {-1, 1}

    def test_provider_rejects_at(self):
        p, ds = make([0.0])
        fused, _ = pro_at_tag(p, ds, lambda X: np.ones(len(X), dtype=int))
        with pytest.raises(ModeMismatch):
            pt_label_provider(fused)

    def test_pseudo_label_fidelity(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(-0.1, 0.1, 100)
        p, ds = make(s, tau=0.1)
        noise = ClassNoise(0.3, 0.1)
        fused = pro_pt_tag(p, ds, lambda X: 0.4 + X[:, 0], noise)
        assert len(fused.pseudo_indices) == 100
        prov = pt_label_provider(fused, SeededRng(7))
        R = 10_000
        hits = np.zeros(100)
        for e in range(R):
            hits += prov.draw(e) == 1
        q = fused.eta_pse
        ok = np.abs(hits / R - q) <= 3 * np.sqrt(q * (1 - q) / R) + 1e-12
        assert ok.sum() >= 97


class TestHybrid:
    def test_most_ambiguous_queried(self):
        p, ds = make([0.08, -0.01, 0.03, -0.06, 0.9])
        e = SimulatedExpert(lambda X: np.ones(len(X)), SeededRng(0))
        fused, ledger = hybrid_tag(p, ds, lambda X: np.full(len(X), 0.5), ClassNoise(0.2, 0.2),
                                   e, 0.5)
        npt.assert_array_equal(ledger.indices, [1, 2])
        npt.assert_array_equal(fused.pseudo_indices, [0, 3])
        src = fused.source()
        npt.assert_array_equal(src, ["pseudo", "expert", "expert", "pseudo", "bo"])

    @pytest.mark.parametrize("q,cost", [(0.0, 0), (1.0, 4)])
    def test_extremes(self, q, cost):
        p, ds = make([0.08, -0.01, 0.03, -0.06, 0.9])
        _, ledger = hybrid_tag(p, ds, lambda X: np.full(len(X), 0.5), ClassNoise(0.2, 0.2),
                               lambda X: np.ones(len(X), dtype=int), q)
        assert ledger.cost == cost

    def test_bad_fraction(self):
        p, ds = make([0.0])
        with pytest.raises(ValueError):
            hybrid_tag(p, ds, lambda X: X[:, 0], ClassNoise(0.1, 0.1), lambda X: X, 1.5)


def test_bo_only():
    p, ds = make([-0.5, 0.0, 0.5])
    X, y = bo_only_set(p, ds)
    npt.assert_array_equal(X[:, 0], [-0.5, 0.5])
    npt.assert_array_equal(y, [-1, 1])
