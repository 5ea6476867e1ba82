import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotkit.errors import NotPSDError
from lotkit.simplex import min_quadratic_simplex, project_convex_hull, project_simplex
from tests.oracles import brute_force_simplex_min


def _psd(m, rank, seed):
    G = np.random.default_rng(seed).standard_normal((m, rank))
    return G @ G.T


class TestProjectSimplex:
    def test_inside(self):
        np.testing.assert_allclose(project_simplex([0.2, 0.3, 0.5]).values, [0.2, 0.3, 0.5])

    def test_corner(self):
        np.testing.assert_allclose(project_simplex([1.5, 0.5]).values, [1.0, 0.0])

    def test_symmetric(self):
        np.testing.assert_allclose(project_simplex([-1.0, -1.0]).values, [0.5, 0.5])

    def test_against_grid(self):
        x = np.array([1.5, 0.5])
        t = np.linspace(0, 1, 10_001)
        grid = np.column_stack([t, 1 - t])
        best = grid[np.argmin(((grid - x) ** 2).sum(1))]
        np.testing.assert_allclose(project_simplex(x).values, best, atol=1e-4)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
    def test_kkt(self, x):
        x = np.array(x)
        y = project_simplex(x).values
        assert abs(y.sum() - 1) <= 1e-10 and np.all(y >= 0)
        pos = y > 0
        theta = np.mean(x[pos] - y[pos])
        np.testing.assert_allclose(y, np.maximum(x - theta, 0), atol=1e-10)


class TestMinQuadratic:
    def test_identity(self):
        res = min_quadratic_simplex(np.eye(2))
        np.testing.assert_allclose(res.values, [0.5, 0.5], atol=1e-9)
        assert res.objective == pytest.approx(0.5, abs=1e-9)

    def test_diag(self):
        res = min_quadratic_simplex(np.diag([1.0, 4.0]))
        np.testing.assert_allclose(res.values, [0.8, 0.2], atol=1e-8)
        assert res.objective == pytest.approx(0.8, abs=1e-9)
        t = np.linspace(0, 1, 10_001)
        grid = t**2 + 4 * (1 - t) ** 2
        assert abs(res.objective - grid.min()) <= 1e-6

    def test_null_vector_in_simplex(self):
        # A lam* = 0 for lam* = (0.2, 0.3, 0.5)
        lam_star = np.array([0.2, 0.3, 0.5])
        rng = np.random.default_rng(0)
        G = rng.standard_normal((3, 2))
        G -= np.outer(lam_star, lam_star @ G) / (lam_star @ lam_star)
        res = min_quadratic_simplex(G @ G.T)
        assert res.objective <= 1e-12
        np.testing.assert_allclose(res.values, lam_star, atol=1e-8)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPSDError, match="matrix not PSD within tolerance"):
            min_quadratic_simplex(np.diag([1.0, -0.1]))

    def test_symmetrizes(self):
        A = np.array([[2.0, 1.0 + 1e-12], [1.0, 2.0]])
        assert min_quadratic_simplex(A).converged

    def test_degenerate_flag(self):
        assert min_quadratic_simplex(np.zeros((3, 3))).degenerate
        assert not min_quadratic_simplex(np.eye(3)).degenerate

    def test_warns_without_convergence(self):
        with pytest.warns(RuntimeWarning):
            res = min_quadratic_simplex(_psd(6, 6, 1), tol=1e-30, max_iter=50)
        assert not res.converged

    def test_certificate(self):
        res = min_quadratic_simplex(_psd(5, 3, 2))
        assert 0 <= res.certificate_gap <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_below_vertices_and_barycenter(self, m, rank, seed):
        A = _psd(m, rank, seed)
        obj = min_quadratic_simplex(A).objective
        assert obj <= np.diag(A).min() + 1e-12
        assert obj <= A.sum() / m**2 + 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_grid(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 4))
        A = _psd(m, int(rng.integers(1, m + 1)), seed)
        assert abs(min_quadratic_simplex(A).objective - brute_force_simplex_min(A, 1000)) <= 1e-4

    @pytest.mark.parametrize("c", [0.1, 10.0])
    def test_scaling(self, c):
        A = _psd(4, 4, 3)
        r1, r2 = min_quadratic_simplex(A), min_quadratic_simplex(c * A)
        assert r2.objective == pytest.approx(c * r1.objective, rel=1e-8)
        np.testing.assert_allclose(r2.values, r1.values, atol=1e-6)


class TestConvexHull:
    def test_column(self):
        B = np.random.default_rng(0).standard_normal((5, 3))
        res = project_convex_hull(B, B[:, 1])
        np.testing.assert_allclose(res.values, [0, 1, 0], atol=1e-9)
        assert res.objective <= 1e-12

    def test_segment(self):
        res = project_convex_hull(np.array([[0.0, 1.0]]), [0.3])
        np.testing.assert_allclose(res.values, [0.7, 0.3], atol=1e-9)

    def test_outside_on_first_side(self):
        res = project_convex_hull(np.array([[0.0, 1.0]]), [-2.0])
        np.testing.assert_allclose(res.values, [1.0, 0.0], atol=1e-12)

    def test_inside_hull_residual(self):
        rng = np.random.default_rng(4)
        B = rng.uniform(size=(50, 4))
        c = B @ rng.dirichlet(np.ones(4))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert project_convex_hull(B, c, tol=1e-12).objective <= 1e-6
