import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotkit.errors import IncompatibleBaseError
from lotkit.measures import (
    CoefficientMeasure,
    DiscreteMeasure,
    MapOnSample,
    SimplexWeights,
    combine_maps,
    pushforward,
)


def _maps(m, n, d, seed):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((n, d))
    return [MapOnSample(base, rng.standard_normal((n, d))) for _ in range(m)]


class TestDiscreteMeasure:
    def test_uniform_default(self):
        mu = DiscreteMeasure([[0.0], [1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(mu.weights, np.full(4, 0.25))

    def test_small_deviation_renormalized(self):
        mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5 + 1e-11])
        assert abs(mu.weights.sum() - 1.0) <= 1e-15

    def test_large_deviation_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([[0.0], [1.0]], [1.0])

    def test_immutable(self):
        mu = DiscreteMeasure([[0.0, 1.0]])
        with pytest.raises(ValueError):
            mu.support[0, 0] = 5.0

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        w = rng.exponential(size=5)
        mu = DiscreteMeasure(rng.standard_normal((5, 3)), w / w.sum())
        mu.to_csv(tmp_path / "m.csv")
        back = DiscreteMeasure.from_csv(tmp_path / "m.csv")
        np.testing.assert_array_equal(back.support, mu.support)
        np.testing.assert_allclose(back.weights, mu.weights, rtol=0, atol=1e-15)
        header = (tmp_path / "m.csv").read_text().splitlines()[0]
        assert header == "x_1,x_2,x_3,weight"

    def test_json_round_trip(self):
        mu = DiscreteMeasure([[0.0, 1.0], [2.0, 3.0]], [0.25, 0.75])
        obj = json.loads(mu.to_json())
        assert set(obj) == {"support", "weights"}
        back = DiscreteMeasure.from_json(mu.to_json())
        np.testing.assert_array_equal(back.support, mu.support)
        np.testing.assert_array_equal(back.weights, mu.weights)


class TestSimplexWeights:
    def test_vertex_and_uniform(self):
        np.testing.assert_array_equal(SimplexWeights.vertex(1, 3).values, [0, 1, 0])
        np.testing.assert_allclose(SimplexWeights.uniform(4).values, 0.25)

    def test_rejects_off_simplex(self):
        with pytest.raises(ValueError):
            SimplexWeights([0.7, 0.7])


class TestCoefficientMeasure:
    def test_atoms(self):
        c = CoefficientMeasure([0.25, 0.75], [0.5, 0.5])
        assert c.atoms == [(0.25, 0.5), (0.75, 0.5)]

    def test_masses_validated(self):
        with pytest.raises(ValueError):
            CoefficientMeasure([0.1], [2.0])


class TestCombineMaps:
    def test_identity_case(self):
        (T,) = _maps(1, 5, 2, 0)
        assert combine_maps([1.0], [T]) is T

    def test_midpoint(self):
        base = np.zeros((3, 2))
        T1 = MapOnSample(base, np.zeros((3, 2)))
        T2 = MapOnSample(base, np.full((3, 2), 2.0))
        np.testing.assert_array_equal(combine_maps([0.5, 0.5], [T1, T2]).images, np.ones((3, 2)))

    def test_weighted_1d(self):
        base = np.array([[0.5]])
        T1 = MapOnSample(base, base)
        T2 = MapOnSample(base, 2 * base)
        np.testing.assert_allclose(combine_maps([0.8, 0.2], [T1, T2]).images, [[0.6]], atol=1e-15)

    def test_incompatible_base(self):
        a, b = _maps(1, 4, 1, 0)[0], _maps(1, 4, 1, 1)[0]
        with pytest.raises(IncompatibleBaseError, match="incompatible base sample"):
            combine_maps([0.5, 0.5], [a, b])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            combine_maps([0.5, 0.5], _maps(3, 4, 1, 0))

    def test_vertex_exact(self):
        maps = _maps(4, 6, 2, 3)
        for i in range(4):
            out = combine_maps(SimplexWeights.vertex(i, 4), maps)
            np.testing.assert_array_equal(out.images, maps[i].images)

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(1, 5),
        st.floats(0, 1),
        st.integers(0, 2**32 - 1),
    )
    def test_affine_in_lambda(self, m, alpha, seed):
        rng = np.random.default_rng(seed)
        maps = _maps(m, 7, 2, seed)
        l1, l2 = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
        mix = combine_maps(alpha * l1 + (1 - alpha) * l2, maps).images
        sep = alpha * combine_maps(l1, maps).images + (1 - alpha) * combine_maps(l2, maps).images
        np.testing.assert_allclose(mix, sep, rtol=0, atol=1e-12)


class TestPushforward:
    def test_single_atom(self):
        mu = pushforward(MapOnSample([[0.0, 0.0]], [[3.0, 3.0]]))
        np.testing.assert_array_equal(mu.support, [[3.0, 3.0]])
        np.testing.assert_array_equal(mu.weights, [1.0])

    def test_two_atoms(self):
        mu = pushforward(MapOnSample([[5.0], [6.0]], [[0.0], [1.0]]))
        np.testing.assert_array_equal(mu.weights, [0.5, 0.5])

    def test_identity_gives_sample(self):
        x = np.random.default_rng(1).uniform(size=(10, 1))
        mu = pushforward(MapOnSample.identity(x))
        np.testing.assert_array_equal(mu.support, x)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_mass_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        w = rng.exponential(size=n)
        mp = MapOnSample(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)), w / w.sum())
        assert abs(pushforward(mp).weights.sum() - 1.0) <= 1e-12
