"""P1 Galerkin assembly of the sesquilinear form and numerical-range checks.

The form is

.. math::

    a(u, v) = \\int \\langle A\\nabla u, \\nabla v\\rangle
        + \\langle \\nabla u, b\\rangle \\bar v + u \\langle c, \\nabla v\\rangle
        + \\varrho V u \\bar v,

with ``<x, y> = sum x conj(y)``.  Coefficients are frozen at element
barycenters; products of basis functions are then integrated exactly, so
constant-coefficient problems are assembled without quadrature error.  The
matrix ``K`` satisfies ``a(u, v) = v^H K u``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import optimize, sparse

from ..ellipticity import CoefficientTuple, lambda_bounds, mu_p, optimal_M
from .mesh import BoundarySpec, GridDomain

__all__ = [
    "NegativePotential",
    "NonAccretive",
    "CoefficientFields",
    "DiscreteOperator",
    "SectorReport",
    "element_coefficients",
    "assemble",
    "sector_angle_bound",
    "sector_check",
]


class NegativePotential(ValueError):
    """Raised when the potential is negative somewhere on the mesh."""


class NonAccretive(ValueError):
    """Raised when a sampled value of the discrete form has negative real part."""


def _evaluate(field, x, shape, dtype):
    if field is None:
        return np.zeros((x.shape[0],) + shape, dtype=dtype)
    val = field(x) if callable(field) else field
    return np.broadcast_to(np.asarray(val, dtype=dtype), (x.shape[0],) + shape).copy()


@dataclass(frozen=True)
class CoefficientFields:
    """Coefficients given as callables of position (or constants).

    Each callable maps points of shape ``(n, dim)`` to values of shape
    ``(n, d, d)`` for ``A``, ``(n, d)`` for ``b`` and ``c`` and ``(n,)``
    for ``V``, where ``d`` is the spatial dimension.
    """

    A: object
    b: object = None
    c: object = None
    V: object = None

    def sample(self, points) -> CoefficientTuple:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        d = x.shape[1]
        A = _evaluate(self.A, x, (d, d), complex)
        b = _evaluate(self.b, x, (d,), complex)
        c = _evaluate(self.c, x, (d,), complex)
        V = _evaluate(self.V, x, (), float)
        if np.any(V < 0):
            raise NegativePotential("V must be non-negative")
        return CoefficientTuple(A, b, c, V, sites=x)


def element_coefficients(coeffs, domain: GridDomain) -> CoefficientTuple:
    """Per-element tuple: fields are sampled at barycenters, tuples broadcast."""
    if isinstance(coeffs, CoefficientFields):
        return coeffs.sample(domain.barycenters)
    if not isinstance(coeffs, CoefficientTuple):
        raise TypeError("coefficients must be CoefficientFields or CoefficientTuple")
    if coeffs.dim != domain.dim:
        raise ValueError("coefficient dimension does not match the mesh")
    E = domain.n_elements
    if coeffs.n_sites == E:
        return coeffs
    if coeffs.n_sites == 1:
        return CoefficientTuple(np.repeat(coeffs.A, E, 0), np.repeat(coeffs.b, E, 0),
                                np.repeat(coeffs.c, E, 0), np.repeat(coeffs.V, E, 0),
                                sites=domain.barycenters)
    raise ValueError("tuple must have one site or one site per element")


@dataclass(frozen=True)
class DiscreteOperator:
    """Assembled form restricted to the free (non-Dirichlet) nodes.

    Attributes
    ----------
    stiffness : sparse complex matrix, ``a(u, v) = v^H K u``
    mass : sparse real SPD matrix
    lumped_mass : ndarray, row sums of the mass matrix
    free : ndarray of int, global indices of free nodes
    coeffs : CoefficientTuple, one site per element
    rho : complex, potential multiplier
    """

    domain: GridDomain
    bc: BoundarySpec
    stiffness: sparse.csr_matrix
    mass: sparse.csr_matrix
    lumped_mass: np.ndarray
    free: np.ndarray
    coeffs: CoefficientTuple
    rho: complex = 1.0

    @property
    def n_free(self) -> int:
        return self.free.size

    def restrict(self, u_full) -> np.ndarray:
        """Free-node part of a nodal vector; vectors already on free nodes pass through."""
        u = np.asarray(u_full, dtype=complex)
        if u.shape[-1] == self.n_free and u.shape[-1] != self.domain.n_nodes:
            return u.copy()
        if u.shape[-1] != self.domain.n_nodes:
            raise ValueError("vector length matches neither the mesh nor the free nodes")
        return u[..., self.free]

    def embed(self, u) -> np.ndarray:
        """Full nodal vector with zeros on Dirichlet nodes."""
        u = np.asarray(u, dtype=complex)
        out = np.zeros(u.shape[:-1] + (self.domain.n_nodes,), dtype=complex)
        out[..., self.free] = u
        return out

    def form(self, u, v=None) -> complex:
        """``a_h(u, v) = v^H K u`` on free-node vectors; ``v`` defaults to ``u``."""
        v = u if v is None else v
        return complex(np.vdot(v, self.stiffness @ u))

    def element_gradients(self, u) -> np.ndarray:
        """Elementwise gradients of the P1 function with free-node values ``u``."""
        uf = self.embed(u)
        G = self.domain.basis_gradients
        return np.einsum("ekd,...ek->...ed", G, uf[..., self.domain.elements])

    def element_means(self, u) -> np.ndarray:
        """Barycenter values of the P1 function."""
        return self.embed(u)[..., self.domain.elements].mean(axis=-1)

    def energy_parts(self, u) -> tuple[float, float]:
        """``(||grad u||^2, ||V^{1/2} u||^2)`` with exact integration per element."""
        g = self.element_gradients(u)
        meas = self.domain.measures
        grad2 = float(np.sum(meas * np.sum(np.abs(g) ** 2, axis=-1)))
        pot = np.real(self.rho) * self.coeffs.V
        loc = _local_mass(self.domain)
        ue = self.embed(u)[self.domain.elements]
        pot2 = float(np.real(np.einsum("e,eij,ej,ei->", pot, loc, ue, np.conj(ue))))
        return grad2, pot2


def _local_mass(domain: GridDomain) -> np.ndarray:
    k = domain.dim + 1
    ref = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    return domain.measures[:, None, None] * ref[None]


def assemble(coeffs, domain: GridDomain, bc: BoundarySpec | None = None, rho: complex = 1.0) -> DiscreteOperator:
    """Assemble stiffness and mass matrices of the form on the P1 space.

    Parameters
    ----------
    coeffs : CoefficientFields or CoefficientTuple
        Fields are sampled at element barycenters.  A tuple must carry one
        site, or one site per element.
    bc : BoundarySpec, optional
        Dirichlet nodes, eliminated from the system.  Defaults to none.
    rho : complex
        Multiplier of the potential, ``Re rho > 0``.

    Raises
    ------
    NegativePotential
        If ``V < 0`` at some element.
    """
    bc = BoundarySpec.neumann() if bc is None else bc
    bc.validate(domain)
    rho = complex(rho)
    if not rho.real > 0:
        raise ValueError("the potential multiplier needs a positive real part")
    try:
        co = element_coefficients(coeffs, domain)
    except ValueError as exc:
        if "non-negative" in str(exc):
            raise NegativePotential(str(exc)) from exc
        raise
    k = domain.dim + 1
    meas = domain.measures
    G = domain.basis_gradients
    loc_mass = _local_mass(domain)
    # K_ij = |T| G_i.A G_j + |T|/k G_j.conj(b) + |T|/k c.G_i + rho V M_ij
    KA = meas[:, None, None] * np.einsum("eid,edf,ejf->eij", G, co.A, G)
    Kb = (meas / k)[:, None, None] * np.einsum("ejd,ed->ej", G, np.conj(co.b))[:, None, :]
    Kc = (meas / k)[:, None, None] * np.einsum("ed,eid->ei", co.c, G)[:, :, None]
    Kloc = KA + np.broadcast_to(Kb, KA.shape) + np.broadcast_to(Kc, KA.shape)
    Kloc = Kloc + rho * co.V[:, None, None] * loc_mass

    el = domain.elements
    rows = np.repeat(el, k, axis=1).ravel()
    cols = np.tile(el, (1, k)).ravel()
    N = domain.n_nodes
    K = sparse.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    M = sparse.coo_matrix((loc_mass.ravel(), (rows, cols)), shape=(N, N)).tocsr()

    free = np.setdiff1d(np.arange(N), bc.dirichlet_nodes)
    K = K[free][:, free].tocsr()
    M = M[free][:, free].tocsr()
    lumped = np.asarray(M.sum(axis=1)).ravel()
    return DiscreteOperator(domain, bc, K, M, lumped, free, co, rho)


def sector_angle_bound(mu: float, M: float, Lam: float, kappa: float = 0.0) -> float:
    """Reference half-angle ``arctan max_t (Lam + M t + kappa t^2) / (mu (1 + t^2))``.

    ``t >= 0`` stands for the ratio ``||V^{1/2} u|| / ||grad u||``; ``kappa``
    bounds ``|Im rho| / Re rho`` for a complex potential multiplier.
    """
    if not mu > 0:
        return float(np.pi / 2)

    def neg(s):
        t = np.tan(s)
        return -(Lam + M * t + kappa * t * t) / (1.0 + t * t)

    res = optimize.minimize_scalar(neg, bounds=(0.0, np.pi / 2), method="bounded",
                                   options={"xatol": 1e-12})
    best = max(-res.fun, Lam, kappa)
    return float(np.arctan(best / mu))


@dataclass(frozen=True)
class SectorReport:
    angle: float
    theta0: float
    within: bool
    min_real: float


def sector_check(op: DiscreteOperator, n_samples: int = 1000, seed: int = 0xBE11) -> SectorReport:
    """Largest ``|arg a_h(u)|`` over random complex ``u``, compared with ``theta0``.

    ``theta0`` comes from :func:`sector_angle_bound` with ``mu = mu_2`` and
    ``M`` evaluated for the tuple ``(A, b, c, Re(rho) V)``, ``Lam`` the
    largest spectral norm of ``A``.

    Raises
    ------
    NonAccretive
        If ``Re a_h(u) < -1e-12 |a_h(u)|`` for a sample.
    """
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_samples, op.n_free)) + 1j * rng.standard_normal((n_samples, op.n_free))
    vals = np.einsum("ni,ni->n", np.conj(U), (op.stiffness @ U.T).T)
    mag = np.abs(vals)
    if np.any(vals.real < -1e-12 * np.maximum(mag, 1.0)):
        raise NonAccretive(f"Re a_h(u) = {vals.real.min():.3e} < 0")
    pos = vals.real > 0
    angle = float(np.max(np.abs(np.angle(vals[pos])))) if np.any(pos) else 0.0
    real_tuple = op.coeffs.replace(V=op.rho.real * op.coeffs.V)
    mu = mu_p(real_tuple, 2.0)
    M = optimal_M(real_tuple)
    _, Lam = lambda_bounds(op.coeffs.A)
    theta0 = sector_angle_bound(mu, M, Lam, abs(op.rho.imag) / op.rho.real)
    return SectorReport(angle, theta0, bool(angle <= theta0 + 1e-9), float(vals.real.min()))
