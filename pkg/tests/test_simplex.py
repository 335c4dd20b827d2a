import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tcs.simplex import simplex_project, simplex_project_sort

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 40).flatmap(lambda n: arrays(np.float64, n, elements=finite))


@pytest.mark.parametrize("v, want", [
    ([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]),
    ([0.6, 0.6], [0.5, 0.5]),
    ([1.0, 0.5, 0.0], [0.75, 0.25, 0.0]),
    ([5.0], [1.0]),
    ([-3.0, -3.0, -3.0, -3.0], [0.25, 0.25, 0.25, 0.25]),
])
def test_known_projections(v, want):
    np.testing.assert_allclose(simplex_project(v), want, atol=1e-15)
    np.testing.assert_allclose(simplex_project_sort(v), want, atol=1e-15)


def test_sort_oracle_threshold():
    # sorted (1, 0.5, 0): cumulative sums minus one give tau = (1.5 - 1) / 2
    v = np.array([1.0, 0.5, 0.0])
    assert np.max(v - simplex_project_sort(v)) == pytest.approx(0.25)


def test_rejects_empty_and_matrices():
    with pytest.raises(ValueError):
        simplex_project([])
    with pytest.raises(ValueError):
        simplex_project(np.eye(2))


@settings(max_examples=300, deadline=None)
@given(v=vectors)
def test_matches_sort_oracle_and_lies_on_simplex(v):
    x = simplex_project(v)
    assert np.all(x >= 0)
    assert abs(x.sum() - 1) <= 1e-12 * max(1.0, np.abs(v).max())
    np.testing.assert_allclose(x, simplex_project_sort(v), atol=1e-12 * max(1.0, np.abs(v).max()))


@settings(max_examples=200, deadline=None)
@given(v=vectors)
def test_idempotent(v):
    # x carries roundoff of order eps * max|v| from the threshold subtraction
    x = simplex_project(v)
    np.testing.assert_allclose(simplex_project(x), x, atol=1e-13 * max(1.0, np.abs(v).max()))


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2 ** 32 - 1))
def test_nonexpansive(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n) * 3, rng.normal(size=n) * 3
    assert np.linalg.norm(simplex_project(x) - simplex_project(y)) <= np.linalg.norm(x - y) + 1e-13


def test_projection_optimality(rng):
    # variational inequality: (v - x) . (z - x) <= 0 for every simplex point z
    for _ in range(50):
        v = rng.normal(size=6)
        x = simplex_project(v)
        for _ in range(20):
            z = rng.dirichlet(np.ones(6))
            assert (v - x) @ (z - x) <= 1e-12
