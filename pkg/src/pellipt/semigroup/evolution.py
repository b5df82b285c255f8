"""Time stepping of ``u' + L u = 0`` for an assembled operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .assembly import DiscreteOperator

__all__ = ["SolverFailure", "SemigroupTrace", "evolve", "lumped_lp_norm", "SCHEMES"]

SCHEMES = ("implicit-euler", "crank-nicolson")


class SolverFailure(RuntimeError):
    """Raised when the time-step system is singular or produces non-finite values."""


def lumped_lp_norm(weights, u, p: float) -> np.ndarray:
    """``(sum_i m_i |u_i|^p)^{1/p}`` along the last axis."""
    a = np.abs(np.asarray(u))
    if np.isinf(p):
        return a.max(axis=-1)
    return np.sum(weights * a**p, axis=-1) ** (1.0 / p)


@dataclass
class SemigroupTrace:
    """States on the free nodes at each time level.

    ``flow_energy`` and ``bilinear_accum`` are filled in by the experiments
    that compute them.
    """

    op: DiscreteOperator
    times: np.ndarray
    states: np.ndarray
    scheme: str
    mass_kind: str
    flow_energy: np.ndarray | None = field(default=None)
    bilinear_accum: np.ndarray | None = field(default=None)

    def lp_norms(self, p: float) -> np.ndarray:
        """Mass-lumped ``l^p`` norms of every state."""
        return lumped_lp_norm(self.op.lumped_mass, self.states, p)

    def mass_norms(self) -> np.ndarray:
        """Norms in the inner product of the mass matrix used for stepping."""
        if self.mass_kind == "lumped":
            return lumped_lp_norm(self.op.lumped_mass, self.states, 2.0)
        Mu = (self.op.mass @ self.states.T).T
        return np.sqrt(np.maximum(np.einsum("ni,ni->n", np.conj(self.states), Mu).real, 0.0))

    def full_state(self, k: int) -> np.ndarray:
        return self.op.embed(self.states[k])


def _mass_matrix(op: DiscreteOperator, mass: str):
    if mass == "consistent":
        return op.mass
    if mass == "lumped":
        return sparse.diags(op.lumped_mass, format="csr")
    raise ValueError("mass must be 'consistent' or 'lumped'")


def evolve(op: DiscreteOperator, f, T: float, dt: float, scheme: str = "implicit-euler",
           mass: str = "consistent") -> SemigroupTrace:
    """Integrate from ``f`` up to time ``T`` with step ``dt``.

    Implicit Euler solves ``(M + dt K) u^{n+1} = M u^n``; Crank-Nicolson
    solves ``(M + dt/2 K) u^{n+1} = (M - dt/2 K) u^n``.

    Parameters
    ----------
    f : array_like
        Initial data on all nodes or on the free nodes; Dirichlet values
        are dropped.
    mass : {'consistent', 'lumped'}
        Lumping gives an M-matrix system for real nonnegative-stencil
        operators, which is what discrete ``l^p`` experiments need.

    Raises
    ------
    SolverFailure
    """
    if not dt > 0 or not T >= 0:
        raise ValueError("need dt > 0 and T >= 0")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    u = op.restrict(f)
    M = _mass_matrix(op, mass)
    K = op.stiffness
    if scheme == "implicit-euler":
        lhs, rhs = M + dt * K, M
    else:
        lhs, rhs = M + 0.5 * dt * K, M - 0.5 * dt * K
    states = np.empty((n_steps + 1, op.n_free), dtype=complex)
    states[0] = u
    if n_steps and op.n_free:
        try:
            lu = splu(sparse.csc_matrix(lhs, dtype=complex))
        except RuntimeError as exc:
            raise SolverFailure(str(exc)) from exc
        rhs = sparse.csr_matrix(rhs, dtype=complex)
        for n in range(n_steps):
            u = lu.solve(rhs @ u)
            if not np.all(np.isfinite(u)):
                raise SolverFailure(f"non-finite state at step {n + 1}")
            states[n + 1] = u
    else:
        states[1:] = u
    times = dt * np.arange(n_steps + 1)
    return SemigroupTrace(op, times, states, scheme, mass)
