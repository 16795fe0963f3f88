import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cascademl.errors import ValidationError
from cascademl.numerics import (
    as_matrix,
    column_variance,
    fit_pca,
    inverse_transform_pca,
    make_rng,
    n_components_for_variance,
    percentile,
    transform_pca,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_as_matrix_rejects_nonfinite_and_empty():
    with pytest.raises(ValidationError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(ValidationError):
        as_matrix(np.empty((0, 3)))


def test_column_variance_examples():
    X = np.array([[5.0, 0.0, 1.0], [5.0, 2.0, 2.0], [5.0, 2.0, 3.0]])
    var = column_variance(X[:, :1])
    assert var[0] == 0.0
    assert column_variance([[0.0], [2.0]])[0] == pytest.approx(1.0)
    assert column_variance(X[:, 2:])[0] == pytest.approx(2.0 / 3.0)


def test_constant_column_variance_is_exact_zero():
    assert column_variance(np.full((7, 1), 0.1))[0] == 0.0


@pytest.mark.parametrize("p, expected", [(0, 1.0), (100, 4.0), (50, 2.5)])
def test_percentile_examples(p, expected):
    assert percentile([4, 2, 3, 1], p) == pytest.approx(expected)


def test_percentile_errors():
    with pytest.raises(ValidationError, match="empty sample"):
        percentile([], 50)
    with pytest.raises(ValidationError):
        percentile([1.0], 101)


@given(arrays(np.float64, st.integers(1, 30), elements=finite), st.floats(0, 100), st.floats(0, 100))
def test_percentile_monotone(v, p1, p2):
    lo, hi = sorted((p1, p2))
    assert percentile(v, lo) <= percentile(v, hi) + 1e-9


@given(arrays(np.float64, st.integers(1, 15), elements=finite), finite)
def test_percentile_median_of_symmetric_set(v, c):
    sym = np.concatenate([c + v, c - v])
    assert percentile(sym, 50) == pytest.approx(c, abs=1e-9 * (1 + abs(c) + np.abs(v).max()))


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 5)), elements=finite), st.randoms())
def test_column_variance_permutation_invariant(X, r):
    perm = list(range(X.shape[0]))
    r.shuffle(perm)
    np.testing.assert_allclose(column_variance(X), column_variance(X[perm]), rtol=1e-9, atol=1e-9)


def test_rng_is_reproducible():
    assert np.array_equal(make_rng(42).random(5), make_rng(42).random(5))
    assert not np.array_equal(make_rng(42).random(5), make_rng(43).random(5))


def test_pca_rank_one():
    t = np.linspace(-2, 3, 12)
    X = np.column_stack([t, np.full_like(t, 4.0), np.zeros_like(t)])
    model = fit_pca(X)
    np.testing.assert_allclose(model.explained_variance_ratio, [1.0])


def test_pca_two_uncorrelated_features():
    # columns uncorrelated by construction: a symmetric +-1 design
    a = np.array([1, -1, 1, -1], float) * np.sqrt(3.0)
    b = np.array([1, 1, -1, -1], float)
    model = fit_pca(np.column_stack([a, b]))
    # covariance diag(3, 1) * 4/3 -> eigenvalues ratio 3:1
    cov = np.cov(np.column_stack([a, b]), rowvar=False)
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    np.testing.assert_allclose(model.explained_variance_ratio, eig / eig.sum(), atol=1e-12)
    np.testing.assert_allclose(model.explained_variance_ratio, [0.75, 0.25], atol=1e-12)


def test_pca_centered_input_mean_zero():
    X = np.random.default_rng(0).normal(size=(20, 4))
    X -= X.mean(axis=0)
    assert np.abs(fit_pca(X).mean).max() < 1e-12


def test_pca_needs_two_rows():
    with pytest.raises(ValidationError, match="insufficient samples for PCA"):
        fit_pca(np.ones((1, 3)))


def test_pca_components_orthonormal_and_sign_convention():
    X = np.random.default_rng(1).normal(size=(30, 6))
    model = fit_pca(X)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(6), atol=1e-8)
    for comp in model.components:
        assert comp[np.argmax(np.abs(comp))] >= 0
    assert np.all(np.diff(model.explained_variance_ratio) <= 1e-15)
    assert abs(model.explained_variance_ratio.sum() - 1) < 1e-9


def test_pca_component_count_capped_by_rows():
    X = np.random.default_rng(2).normal(size=(4, 10))
    assert fit_pca(X).n_components == 3


def test_n_components_examples():
    t = np.linspace(0, 1, 5)
    rank1 = fit_pca(np.column_stack([t, 2 * t]))
    assert n_components_for_variance(rank1, 0.95) == 1
    a = np.array([1, -1, 1, -1], float) * np.sqrt(3.0)
    b = np.array([1, 1, -1, -1], float)
    m = fit_pca(np.column_stack([a, b]))
    assert n_components_for_variance(m, 0.75) == 1
    assert n_components_for_variance(m, 0.76) == 2
    assert n_components_for_variance(m, 1.0) == m.n_components


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.01])
def test_n_components_threshold_range(bad):
    m = fit_pca(np.random.default_rng(0).normal(size=(5, 2)))
    with pytest.raises(ValidationError, match="variance threshold out of range"):
        n_components_for_variance(m, bad)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_n_components_nondecreasing(seed, t1, t2):
    X = np.random.default_rng(seed).normal(size=(12, 5)) * np.arange(1, 6)
    m = fit_pca(X)
    lo, hi = sorted((t1, t2))
    assert n_components_for_variance(m, lo) <= n_components_for_variance(m, hi)


def test_transform_round_trip():
    X = np.random.default_rng(3).normal(size=(15, 4))
    m = fit_pca(X)
    np.testing.assert_allclose(inverse_transform_pca(m, transform_pca(m, X)), X, atol=1e-8)


def test_transform_rank_one_preserves_distances():
    rng = np.random.default_rng(4)
    direction = rng.normal(size=5)
    X = rng.normal(size=(10, 1)) * direction + rng.normal(size=5)
    m = fit_pca(X)
    Z = transform_pca(m, X, 1)
    dX = np.linalg.norm(X[:, None] - X[None], axis=-1)
    dZ = np.abs(Z[:, None, 0] - Z[None, :, 0])
    np.testing.assert_allclose(dZ, dX, atol=1e-8)


def test_transform_mean_row_is_zero():
    X = np.random.default_rng(5).normal(size=(8, 3))
    m = fit_pca(X)
    np.testing.assert_allclose(transform_pca(m, m.mean[None, :]), 0.0, atol=1e-12)


def test_transform_dimension_mismatch():
    m = fit_pca(np.random.default_rng(6).normal(size=(8, 3)))
    with pytest.raises(ValidationError, match="dimension mismatch"):
        transform_pca(m, np.ones((2, 4)), 1)
