import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossgcn.numerics import (ShapeError, check_csr, dense_matmul, glorot_init, hadamard, make_rng,
                               row_normalize_sparse, spmm, standard_normal, to_csr)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_spmm_identity():
    d = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(spmm(to_csr(np.eye(2)), d), d)


def test_spmm_permutation():
    p = to_csr(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(spmm(p, np.eye(2)), [[0, 1], [1, 0]])


def test_spmm_averaging():
    s = to_csr(np.full((2, 2), 0.5))
    np.testing.assert_array_equal(spmm(s, np.array([[2.0], [4.0]])), [[3.0], [3.0]])


def test_spmm_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        spmm(to_csr(np.ones((2, 3))), np.ones((2, 2)))


def test_dense_matmul_examples():
    b = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(dense_matmul(np.eye(3), b), b)
    np.testing.assert_array_equal(dense_matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])
    np.testing.assert_array_equal(dense_matmul(np.zeros((2, 3)), b), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        dense_matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_dense_matmul_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        dense_matmul([[1e308]], [[1e308]])


def test_hadamard_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
    np.testing.assert_array_equal(hadamard(a, [[2.0, 0.0], [1.0, 1.0]]), [[2, 0], [3, 4]])
    np.testing.assert_array_equal(hadamard(a, np.zeros_like(a)), np.zeros_like(a))
    with pytest.raises(ShapeError):
        hadamard(a, np.ones((2, 3)))


def test_row_normalize_examples():
    out = row_normalize_sparse(np.array([[2.0, 2.0, 0.0], [0.0, 0.0, 0.0]])).toarray()
    np.testing.assert_array_equal(out, [[0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(row_normalize_sparse(np.array([[1.0]])).toarray(), [[1.0]])


def test_csr_validator_catches_violations():
    good = to_csr(np.array([[0.0, 1.0], [2.0, 0.0]]))
    check_csr(good)
    zeros = good.copy()
    zeros.data[0] = 0.0
    with pytest.raises(ValueError, match="explicit zeros"):
        check_csr(zeros)
    unsorted = sp.csr_matrix((np.array([1.0, 2.0]), np.array([1, 0]), np.array([0, 2])), shape=(1, 2))
    with pytest.raises(ValueError, match="strictly increasing"):
        check_csr(unsorted)
    with pytest.raises(ValueError):
        check_csr(good.tocoo())


def test_glorot_examples():
    np.testing.assert_array_equal(glorot_init(1, 5, make_rng(7)), glorot_init(1, 5, make_rng(7)))
    assert np.all(np.abs(glorot_init(2, 4, make_rng(0))) <= 1.0)
    assert abs(glorot_init(1000, 1000, make_rng(0)).mean()) < 0.01
    with pytest.raises(ValueError):
        glorot_init(0, 3, make_rng(0))


def test_standard_normal_examples():
    np.testing.assert_array_equal(standard_normal(make_rng(3), 4), standard_normal(make_rng(3), 4))
    big = standard_normal(make_rng(3), 100_000)
    assert -0.02 <= big.mean() <= 0.02
    assert 0.97 <= big.var() <= 1.03
    a = standard_normal(make_rng(3, "a"), 4)
    b = standard_normal(make_rng(3, "b"), 4)
    assert not np.array_equal(a, b)


def test_named_and_numbered_streams_are_stable():
    assert make_rng(5, "split", 2).integers(1 << 62) == make_rng(5, "split", 2).integers(1 << 62)
    assert make_rng(5, "split", 2).integers(1 << 62) != make_rng(5, "split", 3).integers(1 << 62)


@st.composite
def sparse_and_dense(draw):
    n = draw(st.integers(1, 50))
    m = draw(st.integers(1, 50))
    k = draw(st.integers(1, 6))
    dense_s = draw(arrays(np.float64, (n, m), elements=finite))
    keep = draw(arrays(np.bool_, (n, m)))
    d = draw(arrays(np.float64, (m, k), elements=finite))
    return np.where(keep, dense_s, 0.0), d


@settings(max_examples=60, deadline=None)
@given(sparse_and_dense())
def test_spmm_matches_dense_product(pair):
    s, d = pair
    csr = to_csr(s)
    check_csr(csr)
    expected = s @ d
    scale = max(1.0, np.abs(expected).max())
    assert np.abs(spmm(csr, d) - expected).max() <= 1e-12 * scale * s.shape[1]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_hadamard_commutative_and_associative(r, c, seed):
    g = np.random.default_rng(seed)
    a, b, d = (g.normal(size=(r, c)) for _ in range(3))
    np.testing.assert_array_equal(hadamard(a, b), hadamard(b, a))
    np.testing.assert_allclose(hadamard(hadamard(a, b), d), hadamard(a, hadamard(b, d)), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(0, 10, allow_nan=False)))
def test_row_normalize_rows_sum_to_one_or_zero(a):
    out = row_normalize_sparse(a)
    check_csr(out)
    sums = np.asarray(out.sum(axis=1)).ravel()
    nonzero = a.sum(axis=1) > 0
    np.testing.assert_allclose(sums[nonzero], 1.0, rtol=1e-12)
    assert np.all(sums[~nonzero] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1), st.text(min_size=1, max_size=8), st.integers(0, 1000))
def test_rng_streams_reproducible(seed, name, index):
    a = make_rng(seed, name, index).standard_normal(5)
    b = make_rng(seed, name, index).standard_normal(5)
    np.testing.assert_array_equal(a, b)
