import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossgcn.gradcheck import RANK1_TOL, check_rank1
from crossgcn.model import CrossConvLayer, cross_transform_forward
from crossgcn.numerics import make_rng
from crossgcn.oracle import (MAX_ENTRIES, TensorTooLarge, brute_force_cross_transform, enumerate_cross_tensor,
                             finite_difference_gradients, rank1_tensor_from_factors, relative_error)


def test_cross_tensor_second_order():
    np.testing.assert_array_equal(enumerate_cross_tensor([2.0, 3.0], 2), [[4, 6], [6, 9]])


def test_cross_tensor_first_order_is_input():
    np.testing.assert_array_equal(enumerate_cross_tensor([2.0, -1.0, 5.0], 1), [2, -1, 5])


def test_zero_entry_zeroes_its_slices():
    t = enumerate_cross_tensor([1.5, 0.0, 2.0], 3)
    assert not t[1].any() and not t[:, 1].any() and not t[:, :, 1].any()


def test_rank1_two_factors():
    np.testing.assert_array_equal(rank1_tensor_from_factors([1.0, 1.0], [1.0, 2.0]), [[1, 2], [1, 2]])


def test_rank1_with_basis_factor():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([0.5, -1.0, 4.0])
    t = rank1_tensor_from_factors(np.eye(3)[1], a, b)
    np.testing.assert_array_equal(t[1], np.outer(a, b))
    assert not t[0].any() and not t[2].any()


def test_rank1_all_ones():
    np.testing.assert_array_equal(rank1_tensor_from_factors(*[np.ones(3)] * 3), np.ones((3, 3, 3)))


def test_brute_force_hand_example():
    w = rank1_tensor_from_factors([1.0, 2.0], [1.0, 1.0])
    assert brute_force_cross_transform([1.0, 2.0], [w])[0] == 15.0


def test_brute_force_matches_layer_example():
    # the layer computes (w2.x)(w1.x); its tensor puts w2 on the first axis
    w1, w2, x = np.array([1.0, 1.0]), np.array([1.0, 2.0]), np.array([1.0, 2.0])
    second = brute_force_cross_transform(x, [rank1_tensor_from_factors(w2, w1)])[0]
    first = brute_force_cross_transform(x, [w1])[0]
    layer = CrossConvLayer([w1[None], w2[None]], [0.0], [1.0, 1.0], activation="identity")
    assert cross_transform_forward(x[None], layer)[0][0, 0] == first + second == 18.0


def test_first_order_brute_force_is_dot_product(rng):
    w, x = rng.normal(size=5), rng.normal(size=5)
    assert brute_force_cross_transform(x, [w])[0] == pytest.approx(w @ x, rel=1e-14)


def test_zero_input_returns_bias():
    w = rank1_tensor_from_factors([1.0, 2.0], [3.0, 4.0])
    np.testing.assert_array_equal(brute_force_cross_transform([0.0, 0.0], [w, 2 * w], [0.5, -1.0]), [0.5, -1.0])


def test_size_cap():
    with pytest.raises(TensorTooLarge):
        enumerate_cross_tensor(np.ones(101), 3)
    with pytest.raises(TensorTooLarge):
        rank1_tensor_from_factors(*[np.ones(32)] * 4)
    assert 100**3 == MAX_ENTRIES
    assert enumerate_cross_tensor(np.ones(10), 6).size == MAX_ENTRIES


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        brute_force_cross_transform([1.0, 2.0, 3.0], [np.ones((2, 2))])
    with pytest.raises(ValueError, match="equal length"):
        rank1_tensor_from_factors([1.0, 2.0], [1.0])


def test_finite_differences_of_quadratic():
    g = finite_difference_gradients(lambda t: t @ t, [1.0, 2.0])
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)


def test_finite_differences_of_linear_are_exact():
    c = np.array([0.5, -2.0, 3.0])
    np.testing.assert_allclose(finite_difference_gradients(lambda t: c @ t, np.ones(3)), c, rtol=1e-9)


def test_finite_differences_reject_non_finite():
    with pytest.raises(FloatingPointError):
        finite_difference_gradients(lambda t: np.inf if t[0] < 0 else t[0], [0.0])


def test_relative_error():
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error([0.0], [0.0]) == 0.0
    assert relative_error([2.0], [1.0]) == 0.5


def test_rank1_identity_hundred_trials_under_five_seconds():
    t0 = time.perf_counter()
    worst = max(check_rank1(k, 6, 100, make_rng(3, "rank1", k)) for k in (1, 2, 3))
    assert worst < RANK1_TOL
    assert time.perf_counter() - t0 < 5.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_brute_force_on_rank1_equals_product_of_projections(d, k, seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=d)
    factors = [g.normal(size=d) for _ in range(k)]
    brute = brute_force_cross_transform(x, [rank1_tensor_from_factors(*factors)])[0]
    expected = np.prod([f @ x for f in factors])
    assert abs(brute - expected) <= 1e-10 * max(1.0, abs(expected))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_cross_tensor_is_self_outer_product(d, k, seed):
    x = np.random.default_rng(seed).normal(size=d)
    np.testing.assert_array_equal(enumerate_cross_tensor(x, k), rank1_tensor_from_factors(*[x] * k))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3),
       st.integers(0, 2**32 - 1))
def test_brute_force_homogeneous_of_order_k(d, k, c, seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=d)
    tensors = [g.normal(size=(d,) * k) for _ in range(2)]
    base = brute_force_cross_transform(x, tensors)
    scaled = brute_force_cross_transform(c * x, tensors)
    np.testing.assert_allclose(scaled, c**k * base, rtol=1e-9, atol=1e-12)
