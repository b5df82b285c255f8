import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pellipt.ellipticity import (
    CoefficientFileError,
    CoefficientTuple,
    MembershipError,
    adjoint_tuple,
    bc_domination_check,
    cialdea_mazya_check,
    cialdea_mazya_form,
    classify,
    counterexample_tuple,
    delta_p,
    exponent_window,
    gamma_p,
    in_Sp,
    lambda_bounds,
    load_coefficients,
    mu_p,
    optimal_M,
    rotate_tuple,
    rotation_window,
    save_coefficients,
    site_mu_p,
)
from pellipt.realform import conjugate_exponent, jp_apply, jp_norm, p_star
from helpers import cgauss, random_tuple

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_tuple_validation():
    with pytest.raises(ValueError):
        CoefficientTuple.constant(np.eye(1), V=-1.0)
    with pytest.raises(ValueError):
        CoefficientTuple(np.ones((1, 2, 3)), 0, 0, 0)
    co = CoefficientTuple.constant(np.eye(2), V=1.0, n_sites=3)
    assert co.n_sites == 3 and co.dim == 2


def test_lambda_bounds_examples():
    assert lambda_bounds(np.eye(3)) == pytest.approx((1.0, 1.0))
    lam, Lam = lambda_bounds(np.exp(1j * np.pi / 4) * np.eye(1))
    assert lam == pytest.approx(np.cos(np.pi / 4), abs=1e-14) and Lam == pytest.approx(1.0)
    assert lambda_bounds(np.diag([1.0, 2.0])) == pytest.approx((1.0, 2.0))


@pytest.mark.parametrize("p", [2, 3, 4, 8])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_delta_identity(p, d):
    assert delta_p(np.eye(d), p) == pytest.approx(2 / p_star(p), abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.9, 1.4])
@pytest.mark.parametrize("p", [1.2, 2.0, 3.0, 6.0])
def test_delta_rotated_scalar(theta, p):
    assert delta_p(np.exp(1j * theta) * np.eye(1), p) == pytest.approx(np.cos(theta) - abs(1 - 2 / p), abs=1e-12)


@given(seeds)
def test_delta_two_is_lambda(seed):
    A = cgauss(np.random.default_rng(seed), (3, 2, 2))
    assert delta_p(A, 2.0) == pytest.approx(lambda_bounds(A)[0], abs=1e-12)


def test_delta_is_min_over_unit_sphere(rng):
    A = np.eye(2) + 0.4 * cgauss(rng, (2, 2))
    p = 3.0
    k = abs(1 - 2 / p)
    xi = cgauss(rng, (200000, 2))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    vals = np.sum((xi @ A.T) * np.conj(xi + k * np.conj(xi)), axis=1).real
    assert vals.min() >= delta_p(A, p) - 1e-12
    assert vals.min() <= delta_p(A, p) + 1e-3


def test_gamma_examples():
    co = CoefficientTuple.constant(np.eye(2))
    xi = np.array([0.3 + 1j, -2 + 0.5j])
    assert gamma_p(co, 0, xi, 2.0) == pytest.approx(np.sum(np.abs(xi) ** 2))
    co1 = CoefficientTuple.constant(np.eye(1), V=0.7)
    assert gamma_p(co1, 0, np.zeros(1), 3.0) == pytest.approx(0.7)
    x, y, p = 0.4, -1.3, 3.5
    assert gamma_p(co1, 0, np.array([x + 1j * y]), p) == pytest.approx((p - 1) * x**2 + y**2 + 0.7)


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 4.0, 10.0])
def test_mu_closed_form_1d(p):
    co = CoefficientTuple.constant(np.eye(1), V=1.0)
    assert mu_p(co, p) == pytest.approx(min(p - 1, 1.0), abs=1e-8)


def test_mu_identity_no_potential():
    assert mu_p(CoefficientTuple.constant(np.eye(2)), 2.0) == pytest.approx(1.0, abs=1e-9)


def test_mu_fails_for_non_p_elliptic():
    co = CoefficientTuple.constant(np.exp(1.3j) * np.eye(1))
    assert mu_p(co, 6.0) == -np.inf
    assert not classify(co, 6.0).in_Sp


@given(seeds, st.sampled_from([1.5, 2.0, 3.0, 5.0]))
def test_mu_is_a_lower_bound_by_sampling(seed, p):
    rng = np.random.default_rng(seed)
    co = random_tuple(rng, 2, n=2)
    m = mu_p(co, p)
    if not np.isfinite(m):
        return
    xi = cgauss(rng, (20000, 2)) * 10.0 ** rng.uniform(-2, 2, (20000, 1))
    for s in range(co.n_sites):
        gap = gamma_p(co, s, xi, p) - m * (np.sum(np.abs(xi) ** 2, axis=1) + co.V[s])
        assert gap.min() >= -1e-6 * (1 + co.V[s])


@given(seeds, st.sampled_from([1.5, 3.0, 4.0]))
def test_mu_dilation_cap(seed, p):
    co = random_tuple(np.random.default_rng(seed), 2, n=3)
    m = mu_p(co, p)
    if np.isfinite(m):
        assert m <= min(0.5 * p * delta_p(co.A, p), 1.0) + 1e-9


def test_optimal_M_examples():
    co = CoefficientTuple.constant(np.eye(2), b=[1, 2j], c=[1, 2j], V=0.0)
    assert optimal_M(co) == 0.0
    co = CoefficientTuple.constant(np.eye(2), b=[1, 0], c=[0, 0], V=4.0)
    assert optimal_M(co) == pytest.approx(0.5)
    co = CoefficientTuple.constant(np.eye(2), b=[1, 0], c=[0, 0], V=0.0)
    assert optimal_M(co) == np.inf


@pytest.mark.parametrize("p", [1.3, 2.0, 4.0, 12.0])
def test_real_elliptic_in_every_class(rng, p):
    B = rng.standard_normal((3, 2, 2))
    A = np.einsum("nij,nkj->nik", B, B) + 0.5 * np.eye(2)
    co = CoefficientTuple(A, 0, 0, rng.uniform(0, 2, 3))
    assert classify(co, p).in_Bp


def test_p2_membership_matches_bmum(rng):
    for _ in range(20):
        co = random_tuple(rng, 2, n=3)
        r = classify(co, 2.0)
        assert r.in_Sp == r.in_BmuM


def test_no_lower_order_membership_is_p_ellipticity():
    for theta in np.linspace(0, 1.5, 16):
        co = CoefficientTuple.constant(np.exp(1j * theta) * np.eye(1), V=1.0)
        assert in_Sp(co, 4.0) == (delta_p(co.A, 4.0) > 0)


def test_adjoint_examples(rng):
    co = random_tuple(rng, 2)
    twice = adjoint_tuple(adjoint_tuple(co))
    assert np.array_equal(twice.A, co.A) and np.array_equal(twice.b, co.b)
    H = np.array([[2.0, 1 - 1j], [1 + 1j, 3.0]])
    fixed = CoefficientTuple.constant(H, b=[1j, 2], c=[1j, 2], V=1.0)
    adj = adjoint_tuple(fixed)
    assert np.allclose(adj.A, fixed.A) and np.allclose(adj.b, fixed.b)


@given(seeds, st.sampled_from([1.5, 3.0, 4.0]))
def test_adjoint_duality(seed, p):
    co = random_tuple(np.random.default_rng(seed), 2, n=2)
    q = conjugate_exponent(p)
    assert classify(co, p).in_Sp == classify(adjoint_tuple(co), q).in_Sp


def test_rotate_zero_is_identity(rng):
    co = random_tuple(rng, 2)
    r = rotate_tuple(co, 0.0)
    assert np.array_equal(r.A, co.A) and np.array_equal(r.V, co.V)


def test_exponent_window_real_case(rng):
    co = CoefficientTuple.constant(np.diag([1.0, 3.0]), V=1.0)
    assert exponent_window(co, 3.0) == (1.0 + 1e-3, 64.0)


def test_exponent_window_is_an_interval(rng):
    co = CoefficientTuple.constant(np.exp(0.8j) * np.eye(1), V=1.0)
    lo, hi = exponent_window(co, 2.0)
    assert lo <= 2.0 <= hi
    # cos(0.8) - |1 - 2/s| > 0 gives the exact window
    k = np.cos(0.8)
    assert lo == pytest.approx(2 / (1 + k), abs=2e-3) and hi == pytest.approx(2 / (1 - k), abs=2e-3)
    for s in np.linspace(lo, hi, 15):
        assert in_Sp(co, s)


def test_exponent_window_requires_membership():
    with pytest.raises(MembershipError):
        exponent_window(CoefficientTuple.constant(np.exp(1.4j) * np.eye(1)), 6.0)


def test_rotation_window_examples(rng):
    co = CoefficientTuple.constant(np.eye(2))
    assert rotation_window(co, 2.0) == pytest.approx(np.pi / 2 - 1e-3)
    # 1D scalar at p = 4: rotated tuple is in S_4 iff cos(phi) > 1/2
    theta = rotation_window(CoefficientTuple.constant(np.eye(1)), 4.0)
    assert theta == pytest.approx(np.pi / 3, abs=1.1e-3) and theta < np.pi / 3
    co = random_tuple(rng, 2, n=2)
    if in_Sp(co, 3.0):
        assert rotation_window(co, 3.0) > 0


@pytest.mark.parametrize("p,r", [(4.0, 2.0), (3.0, 6.0), (1.5, 2.5)])
def test_counterexample_identities(p, r):
    V = np.array([0.5, 1.0, 2.0])
    rho = 7.0
    b, c = counterexample_tuple(p, r, V, rho, dim=2)
    np.testing.assert_allclose(b + jp_apply(p, c), 0, atol=1e-12)
    np.testing.assert_allclose(np.sum(np.abs(b - c) ** 2, axis=1) / (rho * V), 2 * p**2 / (r - p) ** 2, rtol=1e-10)


def test_counterexample_membership_split():
    b, c = counterexample_tuple(4.0, 2.0, 1.0, 1e3)
    co = CoefficientTuple.constant(np.eye(1), b[0], c[0], 1.0)
    assert in_Sp(co, 4.0) and not in_Sp(co, 2.0)


def test_counterexample_gamma_decreases_without_bound():
    p, r, V = 4.0, 2.0, 1.0
    mins = []
    for rho in (1.0, 10.0, 100.0, 1000.0):
        b, c = counterexample_tuple(p, r, V, rho)
        co = CoefficientTuple.constant(np.eye(1), b[0], c[0], V)
        v = abs((b[0, 0] + jp_apply(r, c[0, 0])).real)
        t = v / (2 * (r - 1))
        val = gamma_p(co, 0, np.array([-np.sign(r - p) * t + 0j]), r)
        assert val == pytest.approx(V - rho * V / (4 * (r - 1)), rel=1e-12)
        mins.append(val)
    assert np.all(np.diff(mins) < 0)


def test_bc_domination_examples(rng):
    rep = bc_domination_check(CoefficientTuple.constant(np.eye(2), V=1.0), 3.0, 3.0)
    assert rep.C_tilde == 0 and rep.C == 0
    b, c = counterexample_tuple(4.0, 2.0, 1.0, 10.0)
    co = CoefficientTuple.constant(np.eye(1), b[0], c[0], 1.0)
    assert bc_domination_check(co, 4.0, 4.0).C_tilde == pytest.approx(0.0, abs=1e-12)


@given(seeds, st.sampled_from([1.5, 2.0, 3.0, 4.0]))
def test_bc_domination_proof_bound(seed, p):
    co = random_tuple(np.random.default_rng(seed), 2, n=3)
    if not in_Sp(co, p):
        return
    rep = bc_domination_check(co, p, p)
    m = mu_p(co, p)
    Lam = lambda_bounds(co.A)[1]
    assert rep.C_tilde <= 2 * np.sqrt((1 - m) * (jp_norm(p) * Lam - m)) + 1e-9
    assert rep.bound_holds


def test_cialdea_mazya_form_matches_gamma(rng):
    co = random_tuple(rng, 2)
    p = 3.0
    alpha, beta = rng.standard_normal((10, 2)), rng.standard_normal((10, 2))
    lhs = cialdea_mazya_form(co, 1, alpha, beta, p)
    rhs = gamma_p(co, 1, (2 / p) * alpha + 1j * beta, p)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_cialdea_mazya_check_examples():
    co = CoefficientTuple.constant(np.eye(2), V=1.0)
    assert cialdea_mazya_check(co, 4.0)
    assert cialdea_mazya_check(co, 4.0, directions=np.zeros((1, 4)))
    b, c = counterexample_tuple(4.0, 2.0, 1.0, 1e3)
    bad = CoefficientTuple.constant(np.eye(1), b[0], c[0], 1.0)
    assert cialdea_mazya_check(bad, 4.0)
    assert not cialdea_mazya_check(bad, 2.0)


def test_site_mu_matches_single_site(rng):
    co = random_tuple(rng, 2, n=5)
    per = site_mu_p(co, 3.0)
    for i in range(5):
        one = CoefficientTuple(co.A[i:i + 1], co.b[i:i + 1], co.c[i:i + 1], co.V[i:i + 1])
        assert per[i] == pytest.approx(mu_p(one, 3.0), abs=1e-12)


def test_coefficient_file_roundtrip(tmp_path, rng):
    co = random_tuple(rng, 2, n=3)
    path = tmp_path / "co.txt"
    save_coefficients(co, path)
    back = load_coefficients(path)
    assert np.array_equal(back.A, co.A) and np.array_equal(back.b, co.b)
    assert np.array_equal(back.c, co.c) and np.array_equal(back.V, co.V)


@pytest.mark.parametrize("text", [
    "",
    "dim x\n",
    "dim 1\n",
    "dim 1\n1 0 0 0 0 0\n",
    "dim 1\n1 0 0 0 0 zero 1\n",
    "dim 1\n1 0 0 0 0 0 -1\n",
])
def test_coefficient_file_errors(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(CoefficientFileError):
        load_coefficients(path)
