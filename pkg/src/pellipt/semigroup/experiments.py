"""Contractivity, flow-monotonicity and bilinear-functional experiments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..bellman import BellmanParams, bellman_derivatives
from ..ellipticity import (
    CoefficientTuple,
    MembershipError,
    classify,
    delta_p,
    mu_p,
    optimal_M,
    site_mu_p,
)
from ..realform import conjugate_exponent
from .assembly import DiscreteOperator, assemble
from .evolution import evolve, lumped_lp_norm

__all__ = [
    "ContractionViolated",
    "MonotonicityViolated",
    "HorizonTooShort",
    "ContractivityReport",
    "FlowTrace",
    "BilinearResult",
    "lp_stepwise_increase",
    "quasi_contraction_shift",
    "shifted_operator",
    "lp_contractivity_experiment",
    "flow_energy",
    "flow_monotonicity",
    "bilinear_integrand",
    "bilinear_functional",
    "complex_potential_mode",
]

CONTRACTION_SLACK = 1e-8
MONOTONICITY_SLACK = 1e-6


class ContractionViolated(AssertionError):
    """An ``l^p`` norm increased along a trace; carries the witness."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class MonotonicityViolated(AssertionError):
    """The flow energy increased at some step; carries the step index."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class HorizonTooShort(RuntimeError):
    """The final time slab carries too much of the bilinear integral."""


def lp_stepwise_increase(norms) -> np.ndarray:
    """Relative increase ``N_{n+1} / N_n - 1`` per step (0 where ``N_n = 0``)."""
    norms = np.asarray(norms, dtype=float)
    prev, nxt = norms[:-1], norms[1:]
    safe = np.where(prev > 0, prev, 1.0)
    return np.where(prev > 0, nxt / safe - 1.0, np.where(nxt > 0, np.inf, 0.0))


def _shift_ok(coeffs: CoefficientTuple, p: float, omega: float) -> bool:
    shifted = coeffs.replace(V=coeffs.V + omega)
    return bool(np.all(np.isfinite(site_mu_p(shifted, p))) and mu_p(shifted, 2.0) > 0)


def quasi_contraction_shift(coeffs: CoefficientTuple, p: float, rtol: float = 1e-3) -> float:
    """Smallest ``omega >= 0`` (to relative accuracy ``rtol``) such that the
    tuple with potential ``V + omega`` has ``Gamma_p >= 0`` and ``mu_2 > 0``.

    Raises
    ------
    MembershipError
        If ``A`` is not ``p``-elliptic, in which case no shift helps.
    """
    if not delta_p(coeffs.A, p) > 0:
        raise MembershipError(f"A is not {p}-elliptic")
    if _shift_ok(coeffs, p, 0.0):
        return 0.0
    hi = 1e-3
    while not _shift_ok(coeffs, p, hi):
        hi *= 2.0
        if hi > 1e15:
            raise MembershipError("no finite shift found")
    lo = hi / 2.0 if hi > 1e-3 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _shift_ok(coeffs, p, mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def shifted_operator(op: DiscreteOperator, omega: float) -> DiscreteOperator:
    """Operator of ``L + omega``, the generator of ``e^{-omega t} T_t``."""
    if omega == 0:
        return op
    co = op.coeffs.replace(V=op.coeffs.V + omega / op.rho.real)
    K = (op.stiffness + omega * op.mass).tocsr()
    return dataclasses.replace(op, stiffness=K, coeffs=co)


@dataclass
class ContractivityReport:
    p: float
    omega: float
    n_runs: int
    max_increase: float
    contractive: bool
    witness: dict | None
    hypothesis_holds: bool


def lp_contractivity_experiment(op: DiscreteOperator, p: float, ensemble, T: float, dt: float,
                                scheme: str = "implicit-euler", mass: str = "lumped",
                                quasi: bool = False, strict: bool | None = None,
                                require_hypothesis: bool = True,
                                slack: float = CONTRACTION_SLACK) -> ContractivityReport:
    """Track the lumped ``l^p`` norm along traces started from ``ensemble``.

    The hypothesis is ``Gamma_p >= 0`` at every element (checked with the
    real part of the potential multiplier).  In quasi mode the shift
    ``omega`` of :func:`quasi_contraction_shift` is applied and the damped
    traces ``e^{-omega t} T_t f`` are checked instead.

    Parameters
    ----------
    ensemble : iterable of nodal vectors
    strict : bool, optional
        Raise :class:`ContractionViolated` on the first violation.  Defaults
        to true only for ``p = 2``, where contraction is guaranteed for the
        discrete scheme; for other ``p`` violations are reported.
    require_hypothesis : bool
        If false, run even when the hypothesis fails (used to search for
        violation witnesses).
    """
    real_tuple = op.coeffs.replace(V=op.rho.real * op.coeffs.V)
    if quasi:
        omega = quasi_contraction_shift(real_tuple, p)
        hyp = True
    else:
        omega = 0.0
        hyp = bool(np.all(np.isfinite(site_mu_p(real_tuple, p))))
        if require_hypothesis and not hyp:
            raise MembershipError(f"Gamma_{p} >= 0 fails; use quasi mode or require_hypothesis=False")
    strict = (p == 2) if strict is None else strict
    run_op = shifted_operator(op, omega)
    worst, witness, n = -np.inf, None, 0
    for k, f in enumerate(ensemble):
        n += 1
        tr = evolve(run_op, f, T, dt, scheme=scheme, mass=mass)
        inc = lp_stepwise_increase(tr.lp_norms(p))
        j = int(np.argmax(inc)) if inc.size else 0
        if inc.size and inc[j] > worst:
            worst = float(inc[j])
        if inc.size and inc[j] > slack and witness is None:
            witness = {"index": k, "f": np.asarray(f), "t": float(tr.times[j + 1]), "p": float(p),
                       "increase": float(inc[j])}
            if strict:
                raise ContractionViolated(
                    f"l^{p} norm grew by {inc[j]:.3e} at t={tr.times[j + 1]:.4g} for ensemble member {k}",
                    witness)
    return ContractivityReport(float(p), omega, n, worst, witness is None, witness, hyp)


@dataclass
class FlowTrace:
    times: np.ndarray
    energy: np.ndarray
    max_increase: float
    violations: np.ndarray


def _same_mesh(opA: DiscreteOperator, opB: DiscreteOperator):
    if opA.domain is not opB.domain and not (
            np.array_equal(opA.domain.nodes, opB.domain.nodes)
            and np.array_equal(opA.domain.elements, opB.domain.elements)):
        raise ValueError("both operators must live on the same mesh")
    if not np.array_equal(opA.free, opB.free):
        raise ValueError("both operators must share the Dirichlet set")


def flow_energy(params: BellmanParams, weights, U, W) -> np.ndarray:
    """Lumped quadrature ``sum_i m_i Q(u_i, w_i)`` for each time level."""
    U = np.atleast_2d(U)
    W = np.atleast_2d(W)
    vals, _, _, _ = bellman_derivatives(params, U.ravel(), W.ravel(), order=0)
    return np.sum(weights * vals.reshape(U.shape), axis=-1)


def flow_monotonicity(opA: DiscreteOperator, opB: DiscreteOperator, params: BellmanParams, f, g,
                      T: float, dt: float, scheme: str = "implicit-euler", mass: str = "lumped",
                      strict: bool = True, check_classes: bool = True,
                      slack: float = MONOTONICITY_SLACK) -> FlowTrace:
    """Flow energy ``E(t) = int Q(T^A_t f, T^B_t g)`` along two evolutions.

    Raises
    ------
    MembershipError
        If ``check_classes`` and the first tuple is not in ``S_p`` and
        ``S_2`` or the second not in ``S_q``.
    MonotonicityViolated
        If ``strict`` and ``E`` grows by more than ``slack`` (relative) in a step.
    """
    _same_mesh(opA, opB)
    if check_classes:
        a = opA.coeffs.replace(V=opA.rho.real * opA.coeffs.V)
        b = opB.coeffs.replace(V=opB.rho.real * opB.coeffs.V)
        ok = (mu_p(a, params.p) > 0 and mu_p(a, 2.0) > 0 and mu_p(b, params.q) > 0
              and np.isfinite(optimal_M(a)) and np.isfinite(optimal_M(b)))
        if not ok:
            raise MembershipError("flow monotonicity needs A in S_p and S_2 and B in S_q")
    trA = evolve(opA, f, T, dt, scheme=scheme, mass=mass)
    trB = evolve(opB, g, T, dt, scheme=scheme, mass=mass)
    E = flow_energy(params, opA.lumped_mass, trA.states, trB.states)
    trA.flow_energy = E
    prev = E[:-1]
    inc = (E[1:] - prev) / np.maximum(np.abs(prev), np.finfo(float).tiny)
    inc = np.where(prev == 0, np.where(E[1:] > 0, np.inf, 0.0), inc)
    bad = np.flatnonzero(inc > slack)
    if strict and bad.size:
        k = int(bad[0]) + 1
        raise MonotonicityViolated(f"flow energy grew by {inc[k - 1]:.3e} at step {k}", k)
    return FlowTrace(trA.times, E, float(inc.max()) if inc.size else 0.0, bad + 1)


def bilinear_integrand(opA: DiscreteOperator, opB: DiscreteOperator, U, W, V=None, Wpot=None) -> np.ndarray:
    """``int sqrt(|grad u|^2 + V|u|^2) sqrt(|grad w|^2 + W|w|^2)`` per time level.

    Gradients are elementwise; potential terms use barycenter values.  The
    potentials default to the real parts of the assembled ones.
    """
    V = opA.rho.real * opA.coeffs.V if V is None else np.broadcast_to(V, opA.coeffs.V.shape)
    Wpot = opB.rho.real * opB.coeffs.V if Wpot is None else np.broadcast_to(Wpot, opB.coeffs.V.shape)
    gu = opA.element_gradients(U)
    gw = opB.element_gradients(W)
    eu = np.sum(np.abs(gu) ** 2, axis=-1) + V * np.abs(opA.element_means(U)) ** 2
    ew = np.sum(np.abs(gw) ** 2, axis=-1) + Wpot * np.abs(opB.element_means(W)) ** 2
    return np.sum(opA.domain.measures * np.sqrt(eu * ew), axis=-1)


@dataclass
class BilinearResult:
    value: float
    tail: float
    value_extrapolated: float
    constant: float
    norm_f: float
    norm_g: float
    dt: float
    n_halvings: int
    last_slab_fraction: float
    times: np.ndarray
    accum: np.ndarray


def _bilinear_once(opA, opB, f, g, T, dt, scheme, mass, V, W):
    trA = evolve(opA, f, T, dt, scheme=scheme, mass=mass)
    trB = evolve(opB, g, T, dt, scheme=scheme, mass=mass)
    I = bilinear_integrand(opA, opB, trA.states, trB.states, V, W)
    slabs = 0.5 * dt * (I[1:] + I[:-1])
    accum = np.concatenate([[0.0], np.cumsum(slabs)])
    if I.size >= 2 and 0 < I[-1] < I[-2]:
        rate = np.log(I[-2] / I[-1]) / dt
        tail = float(I[-1] / rate)
    else:
        tail = 0.0
    trA.bilinear_accum = accum
    return accum, slabs, tail, trA.times


def bilinear_functional(opA: DiscreteOperator, opB: DiscreteOperator, f, g, p: float, T: float,
                        dt: float, V=None, W=None, scheme: str = "implicit-euler",
                        mass: str = "consistent", rtol: float = 5e-3, max_halvings: int = 6,
                        slab_tol: float = 1e-2) -> BilinearResult:
    """Time-space integral of the product of the two energy envelopes.

    The time integral uses the trapezoid rule; ``dt`` is halved until the
    value changes by less than ``rtol``.  The tail beyond ``T`` is
    extrapolated from the exponential decay rate of the last two integrand
    values and reported separately.

    Raises
    ------
    HorizonTooShort
        If the last time slab holds more than ``slab_tol`` of the value.
    """
    _same_mesh(opA, opB)
    q = conjugate_exponent(p)
    fA = opA.restrict(f)
    gB = opB.restrict(g)
    nf = float(lumped_lp_norm(opA.lumped_mass, fA, p))
    ng = float(lumped_lp_norm(opB.lumped_mass, gB, q))
    if nf == 0 or ng == 0:
        z = np.zeros(1)
        return BilinearResult(0.0, 0.0, 0.0, 0.0, nf, ng, dt, 0, 0.0, z, z)
    prev = None
    for k in range(max_halvings + 1):
        accum, slabs, tail, times = _bilinear_once(opA, opB, fA, gB, T, dt, scheme, mass, V, W)
        value = float(accum[-1])
        if prev is not None and abs(value - prev) <= rtol * abs(value):
            break
        if k < max_halvings:
            prev = value
            dt = dt / 2.0
    frac = float(slabs[-1] / value) if value > 0 and slabs.size else 0.0
    if frac > slab_tol:
        raise HorizonTooShort(f"last slab holds {frac:.2%} of the integral; increase T")
    return BilinearResult(value, tail, value + tail, value / (nf * ng), nf, ng, dt, k, frac,
                          times, accum)


def complex_potential_mode(coeffs, domain, bc, rho: complex, p: float) -> DiscreteOperator:
    """Assemble with potential ``rho V`` after checking ``(A, b, c, Re(rho) V)`` is in ``B_p``.

    Raises
    ------
    MembershipError
    """
    rho = complex(rho)
    if not rho.real > 0:
        raise ValueError("Re rho must be positive")
    op = assemble(coeffs, domain, bc, rho=rho)
    real_tuple = op.coeffs.replace(V=rho.real * op.coeffs.V)
    if not classify(real_tuple, p).in_Bp:
        raise MembershipError(f"(A, b, c, Re(rho) V) is not in B_{p}")
    return op
