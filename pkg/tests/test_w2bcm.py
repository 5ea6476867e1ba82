import numpy as np
import pytest

from lotkit.exact_ot import discrete_w2
from lotkit.lbcm import estimate_lambda
from lotkit.measures import DiscreteMeasure, MapOnSample
from lotkit.sampling import sample_gaussian, sample_uniform, uniform_grid
from lotkit.w2bcm import (
    BarycenterConfig,
    build_gram_bcm,
    estimate_lambda_bcm,
    iterative_barycenter,
)


def _refs():
    return [sample_gaussian([mu], [[s]], 300, 20 + i) for i, (mu, s) in enumerate([(-2, 0.5), (0, 1), (3, 0.25)])]


class TestConfig:
    @pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.5}, {"k": 0}, {"plan_backend": "x"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            BarycenterConfig(**kw)


class TestGram:
    def test_example(self):
        x = np.array([[0.0, 0.0]])
        maps = [MapOnSample(x, [[1.0, 0.0]]), MapOnSample(x, [[0.0, 2.0]])]
        A = build_gram_bcm(DiscreteMeasure(x), maps)
        np.testing.assert_allclose(A, np.diag([1.0, 4.0]))


class TestEstimate:
    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_recovers_reference(self, j):
        refs = _refs()
        assert estimate_lambda_bcm(refs[j], refs).values[j] >= 0.95

    def test_permutation_invariance(self):
        refs = _refs()
        target = sample_gaussian([0.5], [[0.6]], 300, 99)
        perm = [2, 0, 1]
        lam = estimate_lambda_bcm(target, refs).values
        lam_p = estimate_lambda_bcm(target, [refs[i] for i in perm]).values
        np.testing.assert_allclose(lam_p, lam[perm], atol=1e-6)

    def test_agrees_with_lbcm_in_1d(self):
        # in 1-D both models coincide
        refs = [uniform_grid(0, 1, 300), uniform_grid(2, 4, 300)]
        target = uniform_grid(0.6, 2.0, 300)
        lam_w = estimate_lambda_bcm(target, refs).values
        lam_l = estimate_lambda(sample_uniform(0, 1, 2000, 0), refs, target).values
        np.testing.assert_allclose(lam_w, lam_l, atol=0.15)


class TestIterativeBarycenter:
    def test_single_reference_full_step(self):
        ref = uniform_grid(2, 3, 50)
        rho0 = uniform_grid(0, 1, 50)
        out = iterative_barycenter([ref], [1.0], rho0, BarycenterConfig(alpha=1.0, k=1))
        np.testing.assert_allclose(out.support, ref.support, atol=1e-12)

    def test_objective_non_increasing(self):
        refs = [uniform_grid(0, 1, 60), uniform_grid(3, 4, 60)]
        rho0 = uniform_grid(-1, 0, 60)
        _, obj = iterative_barycenter(refs, [0.3, 0.7], rho0, BarycenterConfig(alpha=0.2, k=30), True)
        assert np.all(np.diff(obj) <= 1e-12)

    def test_1d_grids(self):
        refs = [uniform_grid(0, 1, 100), uniform_grid(2, 3, 100)]
        rho0 = uniform_grid(0, 1, 100)
        out = iterative_barycenter(refs, [0.5, 0.5], rho0, BarycenterConfig(alpha=0.5, k=40))
        assert discrete_w2(out, uniform_grid(1, 2, 100))[1] <= 0.1

    def test_duplicate_references(self):
        ref = uniform_grid(2, 3, 40)
        rho0 = uniform_grid(0, 1, 40)
        cfg = BarycenterConfig(alpha=0.5, k=20)
        a = iterative_barycenter([ref], [1.0], rho0, cfg)
        b = iterative_barycenter([ref, ref], [0.4, 0.6], rho0, cfg)
        np.testing.assert_allclose(a.support, b.support, atol=1e-10)

    def test_weights_kept(self):
        rho0 = DiscreteMeasure([[0.0], [1.0]], [0.25, 0.75])
        out = iterative_barycenter([uniform_grid(0, 1, 4)], [1.0], rho0, BarycenterConfig(k=3))
        np.testing.assert_array_equal(out.weights, rho0.weights)
