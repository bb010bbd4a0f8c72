import numpy as np
import numpy.testing as npt
import pytest

from protag.data import AuditedDataset, NoisyDataset, SeededRng
from protag.exceptions import MissingClass, TooFewSamples
from protag.pipeline import PipelineSpec
from protag.selection import CvReport, argmax_smallest, check_grid, select_tau_cv
from protag.simgen import GeneratorSpec, NoiseSpec, gen_clean, inject_noise, make_audited
from protag.tagging import SimulatedExpert

FAST = PipelineSpec(nuisance={"kind": "mlp", "params": {"epochs": 3, "hidden": (8,)}},
                    final={"kind": "mlp", "params": {"epochs": 3, "hidden": (8,)}})


@pytest.fixture(scope="module")
def problem():
    noise = NoiseSpec("class_low")
    X, y, oracle = gen_clean(GeneratorSpec("ex1", 400), SeededRng(1))
    noisy = NoisyDataset(X, inject_noise(y, X, noise, SeededRng(2)))
    X0, y0, _ = gen_clean(GeneratorSpec("ex1", 60), SeededRng(3))
    audited = make_audited(X0, y0, inject_noise(y0, X0, noise, SeededRng(4)), 60, SeededRng(5))
    return noisy, audited, oracle.with_noise(noise)


class TestHelpers:
    def test_argmax_tie_smallest(self):
        assert argmax_smallest([0.1, 0.2, 0.3], [0.7, 0.8, 0.8]) == 0.2
        assert argmax_smallest([0.1, 0.2], [0.5, 0.5]) == 0.1

    @pytest.mark.parametrize("grid", [[], [0.2, 0.1], [0.1, 0.1], [-0.1], [np.nan]])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            check_grid(grid)

    def test_report_outputs(self, tmp_path):
        rep = CvReport(np.array([0.1, 0.2]), np.array([[0.5, 0.7], [0.6, 0.6]]), 0.1, 3)
        npt.assert_allclose(rep.mean_accuracy, [0.6, 0.6])
        rep.to_csv(tmp_path / "cv.csv")
        rows = (tmp_path / "cv.csv").read_text().splitlines()
        assert rows[0] == "tau,fold,accuracy" and len(rows) == 5
        assert '"tau_star": 0.1' in rep.to_json()


class TestSelectTau:
    def test_single_candidate(self, problem):
        noisy, audited, _ = problem
        rep = select_tau_cv([0.07], noisy, audited, "PT", FAST, SeededRng(0))
        assert rep.tau_star == 0.07
        assert rep.accuracies.shape == (1, 5)

    def test_shape_and_range(self, problem):
        noisy, audited, oracle = problem
        grid = [0.01, 0.1, 0.3]
        e = SimulatedExpert(oracle.eta_fn, SeededRng(9))
        rep = select_tau_cv(grid, noisy, audited, "AT", FAST, SeededRng(0), expert=e, folds=4)
        assert rep.accuracies.shape == (3, 4)
        assert np.all((rep.accuracies >= 0) & (rep.accuracies <= 1))
        assert rep.tau_star in grid
        assert rep.tau_star == argmax_smallest(grid, rep.mean_accuracy)
        assert rep.cv_queries == e.n_queries > 0

    def test_deterministic(self, problem):
        noisy, audited, _ = problem
        a = select_tau_cv([0.01, 0.2], noisy, audited, "PT", FAST, SeededRng(3))
        b = select_tau_cv([0.01, 0.2], noisy, audited, "PT", FAST, SeededRng(3))
        npt.assert_array_equal(a.accuracies, b.accuracies)

    def test_too_few(self, problem):
        noisy, audited, _ = problem
        with pytest.raises(TooFewSamples):
            select_tau_cv([0.1], noisy, audited.subset(np.arange(3)), "PT", FAST, folds=5)

    def test_missing_class_reports_fold(self, problem):
        noisy, _, _ = problem
        X = np.random.default_rng(0).normal(size=(10, 10))
        y = np.r_[1, -np.ones(9, dtype=int)]
        audited = AuditedDataset(X, y, y.copy())
        with pytest.raises(MissingClass) as exc:
            select_tau_cv([0.1], noisy, audited, "PT", FAST, SeededRng(0), folds=10)
        assert exc.value.fold is not None

    def test_fixed_posterior_bo_mode(self, problem):
        noisy, audited, _ = problem
        eta = lambda X: 0.4 + 0.3 * np.tanh(X[:, 0])
        rep = select_tau_cv([0.01, 0.2], noisy, audited, "BO", FAST, SeededRng(4), eta_rho=eta)
        assert rep.accuracies.shape == (2, 5)
        assert rep.cv_queries == 0
