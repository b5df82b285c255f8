import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pellipt.realform import (
    complexify,
    conjugate_exponent,
    generalized_hessian,
    inner,
    jp_apply,
    jp_matrix,
    jp_norm,
    kron_hessian_apply,
    p_star,
    realify_matrix,
    realify_vector,
    stack_realified,
)
from helpers import cgauss

exponents = st.floats(min_value=1.01, max_value=64.0)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=4)


def test_realify_vector_examples():
    assert np.array_equal(realify_vector(np.array([1 + 2j])), [1.0, 2.0])
    assert np.array_equal(realify_vector(np.zeros(3, complex)), np.zeros(6))
    lhs = inner(np.array([1 + 1j]), np.array([1 - 1j])).real
    assert lhs == 0.0 == realify_vector(np.array([1 + 1j])) @ realify_vector(np.array([1 - 1j]))


def test_complexify_roundtrip(rng):
    xi = cgauss(rng, (5, 3))
    assert np.array_equal(complexify(realify_vector(xi)), xi)


def test_realify_matrix_examples():
    assert np.array_equal(realify_matrix(np.eye(3)), np.eye(6))
    assert np.array_equal(realify_matrix(np.array([[1j]])), [[0.0, -1.0], [1.0, 0.0]])


@given(seeds, dims)
def test_realify_matrix_represents_real_part_of_inner_product(seed, d):
    rng = np.random.default_rng(seed)
    A, xi, sigma = cgauss(rng, (d, d)), cgauss(rng, d), cgauss(rng, d)
    lhs = inner(A @ xi, sigma).real
    rhs = realify_matrix(A) @ realify_vector(xi) @ realify_vector(sigma)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


@given(seeds, dims)
def test_realify_matrix_is_multiplicative(seed, d):
    rng = np.random.default_rng(seed)
    A, B = cgauss(rng, (d, d)), cgauss(rng, (d, d))
    np.testing.assert_allclose(realify_matrix(A @ B), realify_matrix(A) @ realify_matrix(B), atol=1e-12)


def test_jp_examples():
    xi = np.array([0.3 - 1.2j, 2.0 + 0.1j])
    np.testing.assert_array_equal(jp_apply(2.0, xi), xi)
    assert jp_apply(4.0, 1.0 + 0j) == 3.0
    assert jp_apply(4.0, 1j) == 1j


@given(exponents, seeds)
def test_jp_two_forms_agree(p, seed):
    xi = cgauss(np.random.default_rng(seed), 3)
    alt = 0.5 * p * (xi + (1 - 2 / p) * np.conj(xi))
    np.testing.assert_allclose(jp_apply(p, xi), alt, atol=1e-12 * p)


@given(exponents, seeds)
def test_jp_conjugate_pair_inverts(p, seed):
    xi = cgauss(np.random.default_rng(seed), 3)
    q = conjugate_exponent(p)
    np.testing.assert_allclose(jp_apply(p, jp_apply(q, xi)), xi, atol=1e-12 * (1 + np.abs(xi).max()) * p)


@given(exponents, seeds)
def test_jp_is_symmetric(p, seed):
    rng = np.random.default_rng(seed)
    xi, sigma = cgauss(rng, 3), cgauss(rng, 3)
    lhs = inner(jp_apply(p, xi), sigma).real
    rhs = inner(xi, jp_apply(p, sigma)).real
    assert abs(lhs - rhs) <= 1e-12 * p * (1 + abs(lhs))


@given(exponents, seeds)
def test_jp_rotation_rule(p, seed):
    xi = cgauss(np.random.default_rng(seed), 3)
    q = conjugate_exponent(p)
    np.testing.assert_allclose(jp_apply(p, 1j * xi), 1j * (p - 1) * jp_apply(q, xi), atol=1e-11 * p)


def test_jp_matrix_realizes_jp(rng):
    xi = cgauss(rng, 4)
    for p in (1.3, 2.0, 5.0):
        np.testing.assert_allclose(jp_matrix(p, 4) @ realify_vector(xi), realify_vector(jp_apply(p, xi)))


@pytest.mark.parametrize("p", [1.1, 1.5, 2.0, 3.0, 8.0])
def test_jp_norm_is_largest_singular_value(p):
    assert jp_norm(p) == pytest.approx(np.linalg.norm(jp_matrix(p, 3), 2), abs=1e-14)


def test_exponent_helpers():
    assert conjugate_exponent(2.0) == 2.0
    assert conjugate_exponent(4.0) == pytest.approx(4 / 3)
    assert p_star(1.5) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        conjugate_exponent(1.0)


def test_kron_identity_and_scalar(rng):
    x = rng.standard_normal(4 * 3)
    np.testing.assert_array_equal(kron_hessian_apply(np.eye(4), x, 3), x)
    np.testing.assert_allclose(kron_hessian_apply(2 * np.eye(4), x, 3), 2 * x)


@given(seeds)
def test_kron_matches_materialized_product(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((4, 4))
    H = H + H.T
    x = rng.standard_normal(8)
    np.testing.assert_allclose(kron_hessian_apply(H, x, 2), np.kron(H, np.eye(2)) @ x, atol=1e-13)


def test_kron_rejects_bad_length():
    with pytest.raises(ValueError):
        kron_hessian_apply(np.eye(4), np.ones(7), 2)


def test_stack_realified_order(rng):
    X, Y = cgauss(rng, 2), cgauss(rng, 2)
    np.testing.assert_array_equal(stack_realified(X, Y), np.concatenate([X.real, X.imag, Y.real, Y.imag]))


def test_generalized_hessian_quadratic_case(rng):
    # Phi = |w|^2 for one variable: D^2 = 2I, grad = 2 W(w); with A = I only the |X|^2 term survives
    d, n = 3, 5
    w = cgauss(rng, (n, 1))
    X = cgauss(rng, (n, 1, d))
    hess = np.broadcast_to(2 * np.eye(2), (n, 2, 2))
    grad = 2 * np.stack([w[:, 0].real, w[:, 0].imag], axis=1)
    A = np.broadcast_to(np.eye(d), (n, 1, d, d))
    z = np.zeros((n, 1, d))
    out = generalized_hessian(hess, grad, w, X, A, z, z, np.zeros((n, 1)))
    np.testing.assert_allclose(out["total"], 2 * np.sum(np.abs(X) ** 2, axis=(1, 2)))
    assert np.all(out["bc"] == 0) and np.all(out["V"] == 0)
