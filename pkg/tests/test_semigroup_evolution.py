import numpy as np
import pytest

from pellipt.ellipticity import CoefficientTuple, adjoint_tuple
from pellipt.semigroup import BoundarySpec, SolverFailure, assemble, evolve, interval_mesh, lumped_lp_norm, rectangle_mesh
from helpers import accretive_tuple, cgauss


def heat_1d(n):
    m = interval_mesh(n)
    return assemble(CoefficientTuple.constant(np.eye(1)), m, BoundarySpec.dirichlet(m)), m


def test_zero_data_stays_zero():
    op, m = heat_1d(8)
    tr = evolve(op, np.zeros(m.n_nodes), 0.1, 0.01)
    assert not tr.states.any()
    assert tr.times[-1] == pytest.approx(0.1) and tr.states.shape == (11, 7)


def test_potential_gauge_oracle():
    # constant potential and Neumann data 1: u(t) = e^{-v0 t}; implicit Euler gives (1 + dt v0)^{-n}
    v0, dt = 2.5, 0.01
    m = rectangle_mesh(3, 3)
    op = assemble(CoefficientTuple.constant(np.eye(2), V=v0), m)
    tr = evolve(op, np.ones(m.n_nodes), 0.5, dt)
    n = np.arange(51)
    np.testing.assert_allclose(tr.states, ((1 + dt * v0) ** -n.astype(float))[:, None] * np.ones(m.n_nodes),
                               rtol=1e-10)
    assert tr.states[-1, 0].real == pytest.approx(np.exp(-v0 * 0.5), rel=2e-2)


@pytest.mark.parametrize("scheme", ["implicit-euler", "crank-nicolson"])
def test_sine_mode_decay(scheme):
    op, m = heat_1d(64)
    x = m.nodes[:, 0]
    tr = evolve(op, np.sin(np.pi * x), 0.1, 1e-3, scheme=scheme)
    exact = np.exp(-np.pi**2 * 0.1) * np.sin(np.pi * x[op.free])
    assert np.max(np.abs(tr.states[-1] - exact)) < 5e-3


def test_crank_nicolson_spatial_order():
    errs = []
    for n in (8, 16, 32):
        op, m = heat_1d(n)
        x = m.nodes[:, 0]
        tr = evolve(op, np.sin(np.pi * x), 0.05, 1e-4, scheme="crank-nicolson")
        errs.append(np.max(np.abs(tr.states[-1] - np.exp(-np.pi**2 * 0.05) * np.sin(np.pi * x[op.free]))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


@pytest.mark.parametrize("mass", ["consistent", "lumped"])
def test_adjoint_duality(rng, mass):
    m = rectangle_mesh(4, 4)
    co = accretive_tuple(rng, 2, m.n_elements)
    bc = BoundarySpec.dirichlet(m)
    op, opa = assemble(co, m, bc), assemble(adjoint_tuple(co), m, bc)
    f, g = cgauss(rng, op.n_free), cgauss(rng, op.n_free)
    u = evolve(op, f, 0.2, 0.02, mass=mass).states[-1]
    w = evolve(opa, g, 0.2, 0.02, mass=mass).states[-1]
    M = op.mass if mass == "consistent" else np.diag(op.lumped_mass)
    lhs = np.vdot(g, M @ u)
    rhs = np.vdot(w, M @ f)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("scheme", ["implicit-euler", "crank-nicolson"])
def test_accretive_l2_contraction(rng, scheme):
    m = rectangle_mesh(5, 5)
    op = assemble(accretive_tuple(rng, 2, m.n_elements), m, BoundarySpec.dirichlet(m))
    tr = evolve(op, cgauss(rng, m.n_nodes), 0.2, 0.01, scheme=scheme)
    norms = tr.mass_norms()
    assert np.all(np.diff(norms) <= 1e-12 * norms[0])


def test_lumped_norm():
    w = np.array([0.25, 0.5, 0.25])
    u = np.array([1.0, -2.0, 0.0])
    assert lumped_lp_norm(w, u, 2.0) == pytest.approx(np.sqrt(0.25 + 2.0))
    assert lumped_lp_norm(w, u, np.inf) == 2.0


def test_evolve_validation():
    op, m = heat_1d(4)
    with pytest.raises(ValueError):
        evolve(op, np.ones(5), 0.1, 0.03)
    with pytest.raises(ValueError):
        evolve(op, np.ones(5), 0.1, 0.01, scheme="rk4")
    with pytest.raises(ValueError):
        evolve(op, np.ones(5), 0.1, 0.01, mass="diagonal")
    with pytest.raises(ValueError):
        evolve(op, np.ones(6), 0.1, 0.01)
    assert isinstance(SolverFailure("x"), RuntimeError)


def test_full_state_restores_dirichlet_zeros():
    op, m = heat_1d(4)
    tr = evolve(op, np.ones(5), 0.02, 0.01)
    full = tr.full_state(2)
    assert full[0] == 0 and full[-1] == 0 and full.shape == (5,)
