"""
Tests for tailcert.numerics: operator norms, Cholesky, seeded streams.
"""

import math

import numpy as np
import pytest

from tailcert import numerics
from tailcert.errors import DefinitenessError, DomainError, NonConvergenceError, ShapeError
from tailcert.numerics import (
    RNG_ALGORITHM,
    RngStream,
    as_matrix,
    cholesky,
    frobenius_norm,
    operator_norm_bound,
    safe_operator_norm,
    spectral_norm,
)


# ---------------------------------------------------------------------------
# spectral_norm / frobenius_norm
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "matrix, expected",
    [
        ([[3.0, 0.0], [0.0, 4.0]], 4.0),
        (np.eye(5), 1.0),
        ([[0.0, 1.0], [0.0, 0.0]], 1.0),
    ],
)
def test_spectral_norm_examples(matrix, expected):
    assert spectral_norm(matrix) == pytest.approx(expected, rel=1e-6)


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((3, 2))) == 0.0


def test_spectral_norm_matches_svd_on_random_matrices():
    gen = RngStream(11).generator()
    for _ in range(10):
        m = gen.standard_normal((7, 5))
        exact = np.linalg.svd(m, compute_uv=False)[0]
        assert spectral_norm(m) == pytest.approx(exact, rel=1e-5)


def test_spectral_norm_reports_last_estimate_on_nonconvergence():
    with pytest.raises(NonConvergenceError) as info:
        spectral_norm([[3.0, 0.0], [0.0, 4.0]], tol=1e-6, max_iters=1)
    assert info.value.last_estimate > 0


def test_spectral_norm_restarts_from_null_start_vector():
    # all-ones start vector lies in the null space of this matrix
    m = np.array([[1.0, -1.0], [2.0, -2.0]])
    assert spectral_norm(m) == pytest.approx(math.sqrt(10.0), rel=1e-6)


@pytest.mark.parametrize(
    "matrix, expected",
    [([[3.0, 4.0]], 5.0), (np.zeros((2, 2)), 0.0), (np.eye(3), math.sqrt(3.0))],
)
def test_frobenius_examples(matrix, expected):
    assert frobenius_norm(matrix) == pytest.approx(expected)


def test_spectral_never_exceeds_frobenius():
    gen = RngStream(3).generator()
    tol = 1e-6
    for _ in range(20):
        m = gen.standard_normal((6, 4))
        assert spectral_norm(m, tol) <= frobenius_norm(m) + tol * spectral_norm(m, tol)


def test_safe_operator_norm_is_an_upper_bound():
    gen = RngStream(5).generator()
    for _ in range(20):
        m = gen.standard_normal((5, 5))
        exact = np.linalg.svd(m, compute_uv=False)[0]
        bound = safe_operator_norm(m)
        assert bound >= exact
        assert bound <= frobenius_norm(m)


def test_safe_operator_norm_falls_back_to_frobenius(monkeypatch):
    def failing_svd(*args, **kwargs):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(numerics, "svdvals", failing_svd)
    m = [[3.0, 0.0], [0.0, 4.0]]
    assert safe_operator_norm(m) == pytest.approx(5.0)


@pytest.mark.parametrize("gap", [1e-5, 1e-7, 0.0])
def test_safe_operator_norm_with_nearly_tied_singular_values(gap):
    m = np.diag([1.0, 1.0 - gap])
    assert safe_operator_norm(m) >= 1.0
    assert operator_norm_bound(m) == pytest.approx(1.0, rel=2e-6)


def test_operator_norm_bound_matches_svd():
    m = RngStream(6).generator().standard_normal((7, 3))
    exact = np.linalg.svd(m, compute_uv=False)[0]
    assert operator_norm_bound(m, tol=0.0) == pytest.approx(exact, rel=1e-12)
    assert operator_norm_bound(m) >= exact


# ---------------------------------------------------------------------------
# cholesky
# ---------------------------------------------------------------------------

def test_cholesky_examples():
    np.testing.assert_allclose(cholesky([[4.0, 0.0], [0.0, 9.0]]), [[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(
        cholesky([[2.0, 1.0], [1.0, 2.0]]),
        [[math.sqrt(2.0), 0.0], [1.0 / math.sqrt(2.0), math.sqrt(1.5)]],
    )


def test_cholesky_reproduces_random_spd():
    gen = RngStream(7).generator()
    for _ in range(10):
        a = gen.standard_normal((6, 6))
        sigma = a.T @ a + 0.1 * np.eye(6)
        lower = cholesky(sigma)
        assert np.allclose(lower, np.tril(lower))
        assert np.linalg.norm(lower @ lower.T - sigma) <= 1e-8 * np.linalg.norm(sigma)


def test_cholesky_names_failing_pivot():
    with pytest.raises(DefinitenessError) as info:
        cholesky([[1.0, 2.0], [2.0, 1.0]])
    assert info.value.pivot_index == 1


def test_cholesky_rejects_asymmetric():
    with pytest.raises(DefinitenessError):
        cholesky([[1.0, 0.0], [1.0, 1.0]])


def test_cholesky_rejects_singular():
    with pytest.raises(DefinitenessError):
        cholesky([[1.0, 1.0], [1.0, 1.0]])


def test_cholesky_rejects_non_square():
    with pytest.raises(ShapeError):
        cholesky([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


# ---------------------------------------------------------------------------
# Validation and RngStream
# ---------------------------------------------------------------------------

def test_as_matrix_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0])
    with pytest.raises(DomainError):
        as_matrix([[1.0, float("nan")]])


def test_rng_stream_is_reproducible():
    a = RngStream(42, 3).generator().standard_normal(100)
    b = RngStream(42, 3).generator().standard_normal(100)
    np.testing.assert_array_equal(a, b)


def test_rng_streams_differ_by_stream_id():
    a = RngStream(42, 0).generator().standard_normal(100)
    b = RngStream(42, 1).generator().standard_normal(100)
    assert not np.array_equal(a, b)


def test_rng_spawn_is_deterministic_and_distinct():
    first = RngStream(9).spawn(4)
    second = RngStream(9).spawn(4)
    assert first == second
    assert len({child.stream_id for child in first}) == 4


def test_rng_stream_rejects_negative_seed():
    with pytest.raises(DomainError):
        RngStream(-1)


def test_rng_algorithm_names_numpy_version():
    assert "PCG64" in RNG_ALGORITHM
    assert np.__version__ in RNG_ALGORITHM
