import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from _systems import DIAG, ROT
from tcs.errors import ValidationError
from tcs.expm import matrix_exponential


@pytest.mark.parametrize("n", [1, 3, 6])
def test_zero_matrix_gives_identity(n):
    np.testing.assert_array_equal(matrix_exponential(np.zeros((n, n)), 7.0), np.eye(n))


def test_diagonal():
    got = matrix_exponential(DIAG, 1.0)
    np.testing.assert_allclose(got, np.diag([math.exp(-1), math.exp(0.5), math.exp(-3)]), rtol=1e-14, atol=0)


def test_rotation_example_closed_form_at_two():
    want = np.array([[1, 2, -2], [-2, -1, 2], [-2, -2, 3]], dtype=float)
    np.testing.assert_allclose(matrix_exponential(ROT, 2.0), want, rtol=0, atol=1e-13)


@pytest.mark.parametrize("scale", [1e-3, 0.1, 1.0, 5.0, 30.0])
def test_against_scipy(rng, scale):
    for n in (2, 5, 12):
        a = rng.normal(size=(n, n)) * scale / math.sqrt(n)
        want = scipy.linalg.expm(a)
        got = matrix_exponential(a)
        assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want) * max(1, scale)


def test_batched_matches_individual(rng):
    a = rng.normal(size=(4, 5, 5))
    batched = matrix_exponential(a, 0.7)
    for k in range(4):
        np.testing.assert_allclose(batched[k], scipy.linalg.expm(0.7 * a[k]), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("bad", [np.array([[np.inf]]), np.ones((2, 3))])
def test_rejects_bad_matrices(bad):
    with pytest.raises(ValidationError):
        matrix_exponential(bad)


@pytest.mark.parametrize("t", [-1.0, math.nan, math.inf])
def test_rejects_bad_time(t):
    with pytest.raises(ValidationError):
        matrix_exponential(np.eye(2), t)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2 ** 32 - 1),
       s=st.floats(0.0, 2.0), t=st.floats(0.0, 2.0))
def test_semigroup(n, seed, s, t):
    a = np.random.default_rng(seed).normal(size=(n, n)) / math.sqrt(n)
    lhs = matrix_exponential(a, s + t)
    rhs = matrix_exponential(a, s) @ matrix_exponential(a, t)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)
