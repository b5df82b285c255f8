"""Power functions ``F_r(zeta) = |zeta|^r`` on the complex plane.

Provides value, gradient and Hessian in real coordinates, the generalized
Hessian of ``F_r`` against a coefficient tuple (computed two independent
ways), a convexity scan, and the pointwise chain-rule identity linking the
generalized Hessian of ``F_p`` to the ``L^p`` dissipativity integrand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ellipticity import CoefficientTuple, MembershipError, gamma_p, mu_p
from .realform import generalized_hessian, jp_apply

__all__ = [
    "DegeneratePoint",
    "PowerEval",
    "power_eval",
    "power_grad_hess",
    "hess_power_generalized",
    "hess_power_closed_form",
    "power_convexity_check",
    "lp_dissipativity_bridge",
    "lp_dissipativity_chain_rule",
]


class DegeneratePoint(ValueError):
    """Raised at ``zeta = 0`` where derivatives of ``|zeta|^r`` are undefined."""


@dataclass(frozen=True)
class PowerEval:
    r: float
    zeta: complex
    value: float
    grad: np.ndarray | None
    hess: np.ndarray | None


def power_grad_hess(r: float, zeta):
    """Vectorized ``(value, grad, hess)`` of ``|zeta|^r`` for nonzero ``zeta``.

    Returns arrays of shapes ``(N,)``, ``(N, 2)`` and ``(N, 2, 2)``.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    rho = np.abs(zeta)
    u = np.stack([zeta.real, zeta.imag], axis=-1)
    value = rho**r
    safe = np.where(rho > 0, rho, 1.0)
    scale = r * safe ** (r - 2.0)
    grad = scale[:, None] * u
    uhat = u / safe[:, None]
    hess = scale[:, None, None] * (np.eye(2) + (r - 2.0) * uhat[:, :, None] * uhat[:, None, :])
    return value, grad, hess


def power_eval(r: float, zeta: complex) -> PowerEval:
    """Value, gradient ``r|z|^{r-2} z`` and Hessian ``r|z|^{r-2}(I + (r-2) u u^T)``.

    Raises
    ------
    DegeneratePoint
        If ``zeta = 0`` and ``r < 2``.
    """
    zeta = complex(zeta)
    if zeta == 0:
        if r < 2:
            raise DegeneratePoint("derivatives of |zeta|^r undefined at 0 for r < 2")
        hess = 2.0 * np.eye(2) if r == 2 else np.zeros((2, 2))
        return PowerEval(r, zeta, 0.0, np.zeros(2), hess)
    v, g, h = power_grad_hess(r, zeta)
    return PowerEval(r, zeta, float(v[0]), g[0], h[0])


def _site_arrays(coeffs: CoefficientTuple, site, n):
    idx = np.broadcast_to(np.asarray(site), (n,))
    return coeffs.A[idx], coeffs.b[idx], coeffs.c[idx], coeffs.V[idx]


def hess_power_generalized(coeffs: CoefficientTuple, site, r: float, zeta, X) -> np.ndarray:
    """Generalized Hessian of ``F_r`` by its definition.

    Sums ``<[D^2 F_r kron I] V(X), M(A) V(X)>``, the first-order part
    ``<[D^2 F_r kron I] V(X), V(zeta c)> + <grad F_r, V(<X, b>)>`` and the
    potential part ``<grad F_r, V(V zeta)>``.

    Parameters
    ----------
    site : int or array of int
    zeta : complex or array, shape (N,)
    X : array, shape (N, d) or (d,)
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if np.any(zeta == 0):
        raise DegeneratePoint("zeta must be nonzero")
    X = np.asarray(X, dtype=complex)
    X = np.broadcast_to(X, zeta.shape + X.shape[-1:])
    n = zeta.size
    A, b, c, V = _site_arrays(coeffs, site, n)
    _, g, h = power_grad_hess(r, zeta)
    parts = generalized_hessian(h, g, zeta[:, None], X[:, None, :], A[:, None], b[:, None], c[:, None], V[:, None])
    return parts["total"]


def hess_power_closed_form(coeffs: CoefficientTuple, site, r: float, zeta, X) -> np.ndarray:
    """Generalized Hessian of ``F_r`` as ``r |zeta|^r Gamma_r(sigma / |zeta|)``.

    Here ``sigma = e^{-i arg zeta} X``.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if np.any(zeta == 0):
        raise DegeneratePoint("zeta must be nonzero")
    X = np.asarray(X, dtype=complex)
    X = np.broadcast_to(X, zeta.shape + X.shape[-1:])
    rho = np.abs(zeta)
    sigma = (np.conj(zeta) / rho)[:, None] * X
    site = np.broadcast_to(np.asarray(site), zeta.shape)
    return r * rho**r * gamma_p(coeffs, site, sigma / rho[:, None], r)


def _default_grid(d: int, n_shells: int, n_angles: int, n_dirs: int, seed: int):
    rng = np.random.default_rng(seed)
    radii = np.logspace(-3, 3, n_shells)
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    zeta = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    zeta = np.repeat(zeta, n_dirs)
    X = rng.standard_normal((zeta.size, d)) + 1j * rng.standard_normal((zeta.size, d))
    X *= 10.0 ** rng.uniform(-3, 3, size=(zeta.size, 1))
    return zeta, X


def power_convexity_check(coeffs: CoefficientTuple, r: float, grid=None, strict: bool = True,
                          seed: int = 0xBE11, n_shells: int = 25, n_angles: int = 16,
                          n_dirs: int = 8) -> tuple[float, dict]:
    """Minimum over a sample grid of ``H / (r |zeta|^{r-2} (|X|^2 + V |zeta|^2))``.

    Parameters
    ----------
    grid : tuple (zeta, X), optional
        Explicit samples; defaults to logarithmic shells in ``|zeta|`` times
        uniform angles, each paired with Gaussian ``X`` of random scale.
    strict : bool
        If true, require membership in ``S_r`` and raise when the minimum
        falls below ``mu_r - 1e-8``.

    Returns
    -------
    ratio : float
    witness : dict
        Site, ``zeta`` and ``X`` of the minimizing sample.
    """
    if grid is None:
        zeta, X = _default_grid(coeffs.dim, n_shells, n_angles, n_dirs, seed)
    else:
        zeta, X = (np.asarray(a, dtype=complex) for a in grid)
    zeta = np.atleast_1d(zeta)
    if np.any(np.abs(zeta) < 1e-6):
        raise DegeneratePoint("grid points must satisfy |zeta| >= 1e-6")
    best, witness = np.inf, {}
    for site in range(coeffs.n_sites):
        H = hess_power_generalized(coeffs, site, r, zeta, X)
        rho = np.abs(zeta)
        denom = r * rho ** (r - 2) * (np.sum(np.abs(X) ** 2, axis=-1) + coeffs.V[site] * rho**2)
        ratio = H / np.maximum(denom, 1e-300)
        k = int(np.argmin(ratio))
        if ratio[k] < best:
            best, witness = float(ratio[k]), {"site": site, "zeta": zeta[k], "X": X[k]}
    if strict:
        m = mu_p(coeffs, r)
        if not m > 0:
            raise MembershipError(f"tuple is not in S_r at r={r}")
        if best < m - 1e-8:
            raise AssertionError(f"convexity ratio {best} below mu_r = {m}")
    return best, witness


def lp_dissipativity_bridge(coeffs: CoefficientTuple, site, p: float, f, grad_f) -> np.ndarray:
    """Generalized Hessian of ``F_p`` at ``(f, grad f)`` for the tuple ``(B, beta, gamma, W)``."""
    f = np.atleast_1d(np.asarray(f, dtype=complex))
    if np.any(f == 0):
        raise DegeneratePoint("f must be nonzero")
    return hess_power_generalized(coeffs, site, p, f, grad_f)


def lp_dissipativity_chain_rule(coeffs: CoefficientTuple, site, p: float, f, grad_f) -> np.ndarray:
    """``p Re(<B grad f, grad(|f|^{p-2} f)> + <grad f, beta> |f|^{p-2} conj f
    + f <gamma, grad(|f|^{p-2} f)>) + p W |f|^p``.

    Uses ``grad(|f|^{p-2} f) = |f|^{p-2} sign(f) J_p(sign(conj f) grad f)``.
    """
    f = np.atleast_1d(np.asarray(f, dtype=complex))
    if np.any(f == 0):
        raise DegeneratePoint("f must be nonzero")
    grad_f = np.broadcast_to(np.asarray(grad_f, dtype=complex), f.shape + np.shape(grad_f)[-1:])
    n = f.size
    B, beta, gamma, W = _site_arrays(coeffs, site, n)
    rho = np.abs(f)
    sgn = f / rho
    dpow = (rho ** (p - 2) * sgn)[:, None] * jp_apply(p, np.conj(sgn)[:, None] * grad_f)
    Bg = np.einsum("nij,nj->ni", B, grad_f)
    t1 = np.sum(Bg * np.conj(dpow), axis=-1)
    t2 = np.sum(grad_f * np.conj(beta), axis=-1) * rho ** (p - 2) * np.conj(f)
    t3 = f * np.sum(gamma * np.conj(dpow), axis=-1)
    return p * np.real(t1 + t2 + t3) + p * W * rho**p
