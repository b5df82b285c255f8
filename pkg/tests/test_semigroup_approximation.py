import numpy as np
import pytest

from pellipt.ellipticity import CoefficientTuple, delta_p, in_Sp, mu_p
from pellipt.realform import jp_apply, p_star
from pellipt.semigroup import (
    BoundarySpec,
    CoefficientFields,
    SupportViolation,
    cutoff_lower_order,
    interval_mesh,
    mollify_coefficients,
    truncate_potential,
    truncation_convergence_experiment,
    truncation_threshold,
)
from pellipt.semigroup.approximation import mollification_stencil, smoothstep_cutoff


def bumpy_fields(d):
    def V(x):
        r = np.linalg.norm(x - 0.5, axis=1)
        return np.where(r < 0.25, 1.0 + np.cos(4 * np.pi * r), 0.0)

    def b(x):
        return 0.3 * np.sqrt(V(x))[:, None] * np.ones((1, d)) * (1 + 0.5j)

    def A(x):
        return np.eye(d) * (1.0 + 0.3 * np.sin(5 * x[:, :1]))[:, :, None] + 0.2j * np.eye(d)

    return CoefficientFields(A=A, b=b, V=V)


def test_stencil_weights():
    Y, w = mollification_stencil([[0.5]], 0.1, points=24)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.abs(Y - 0.5) < 0.1)


def test_mollified_identity_is_identity():
    fields = CoefficientFields(A=np.eye(2), V=lambda x: np.zeros(len(x)))
    sites = np.random.default_rng(0).uniform(0.3, 0.7, (5, 2))
    co = mollify_coefficients(fields, sites, 0.1, 4.0, ((0, 1), (0, 1)))
    np.testing.assert_allclose(co.A, np.broadcast_to(np.eye(2), (5, 2, 2)), atol=1e-14)


def test_extension_outside_domain():
    fields = CoefficientFields(A=np.eye(1), V=lambda x: np.zeros(len(x)))
    co = mollify_coefficients(fields, [[0.0]], 0.1, 4.0, ((0, 1),))
    # half the stencil lies outside, where A = (p*/p) I = 1/3
    assert co.A[0, 0, 0].real == pytest.approx(0.5 * (1 + p_star(4.0) / 4.0), rel=1e-2)
    assert delta_p(np.eye(1) * p_star(4.0) / 4.0, 4.0) == pytest.approx(2 / p_star(4.0) * p_star(4.0) / 4.0)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_mollification_preserves_class(d, eps):
    p = 3.0
    fields = bumpy_fields(d)
    rng = np.random.default_rng(3)
    sites = rng.uniform(0, 1, (40, d))
    grid = rng.uniform(0, 1, (400, d))
    base = fields.sample(grid)
    out = mollify_coefficients(fields, sites, eps, p, [(0, 1)] * d)
    assert in_Sp(base, p) and in_Sp(out, p)
    assert mu_p(out, p) >= mu_p(base, p) - 1e-9


def test_mollification_support_errors():
    fields = bumpy_fields(1)
    with pytest.raises(SupportViolation):
        mollify_coefficients(fields, [[0.5]], 0.35, 3.0, ((0, 1),))
    leaky = CoefficientFields(A=np.eye(1), b=np.ones(1), V=lambda x: np.where(x[:, 0] < 0.5, 1.0, 0.0))
    with pytest.raises(SupportViolation):
        mollify_coefficients(leaky, [[0.5]], 0.05, 3.0, ((0, 1),))


def test_smoothstep_cutoff():
    psi = smoothstep_cutoff([0.5], [0.5], 0.5, 0.75)
    np.testing.assert_allclose(psi(np.array([[0.5], [0.7], [0.95], [1.0]])), [1.0, 1.0, 0.0, 0.0])
    assert 0 < psi(np.array([[0.8]]))[0] < 1
    with pytest.raises(ValueError):
        smoothstep_cutoff([0.5], [0.5], 0.8, 0.5)


def test_cutoff_keeps_class_and_raises_mu():
    d, p = 1, 3.0
    x = np.linspace(0, 1, 101)[:, None]
    co = bumpy_fields(d).sample(x)
    out, rep = cutoff_lower_order(co, 2, p, cutoff=smoothstep_cutoff([0.4], [0.5], 0.1, 0.3))
    assert rep.support_nested and rep.mu_monotone and rep.class_preserved
    assert np.all(out.V <= co.V) and np.array_equal(out.A, co.A)
    assert np.any(out.V < co.V)


def test_default_cutoff_exhausts():
    x = np.linspace(0, 1, 101)[:, None]
    co = bumpy_fields(1).sample(x)
    out, _ = cutoff_lower_order(co, 3, 3.0)
    np.testing.assert_array_equal(out.V, co.V)
    with pytest.raises(ValueError):
        cutoff_lower_order(CoefficientTuple.constant(np.eye(1)), 1, 3.0)


def test_truncate_potential():
    co = CoefficientTuple(np.eye(1)[None].repeat(3, 0), 0, 0, [0.5, 2.0, 9.0])
    np.testing.assert_array_equal(truncate_potential(co, 2.0).V, [0.5, 2.0, 2.0])
    with pytest.raises(ValueError):
        truncate_potential(co, 0.0)


def test_truncation_threshold_formula():
    co = CoefficientTuple.constant(np.eye(1), b=[0.5], c=[0.25j], V=1.0)
    r, eps = 2.0, 0.05
    mu = mu_p(co, r)
    w2 = abs(0.5 + jp_apply(r, 0.25j)) ** 2
    expected = w2 / (4 * (delta_p(co.A, r) - mu + eps) * (1 - mu + eps))
    assert truncation_threshold(co, eps, r) == pytest.approx(expected)


@pytest.mark.slow
def test_truncation_errors_decrease():
    m = interval_mesh(60)
    bc = BoundarySpec.dirichlet(m)

    def V(x):
        return 1.0 / (np.abs(x[:, 0] - 0.5) + 0.01)

    fields = CoefficientFields(A=np.eye(1), b=lambda x: 0.2 * np.sqrt(V(x))[:, None] + 0j, V=V)
    f = np.sin(np.pi * m.nodes[:, 0])
    study = truncation_convergence_experiment(fields, m, bc, f, 0.02, 0.002, 5.0, levels=4)
    assert study.decreasing
    np.testing.assert_allclose(study.levels, [5, 10, 20, 40])
