"""Radial bump mollifier and a product quadrature on the unit ball of R^4."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

__all__ = ["MollifierSpec", "RADIAL_FACTOR", "bump_profile", "bump_normalization", "bump_derivatives", "ball_rule_4d",
           "midpoint_nodes"]

# radial nodes per angular node; the bump is flat near the sphere and needs many
RADIAL_FACTOR = 6


@dataclass(frozen=True)
class MollifierSpec:
    """Radius ``nu`` of the mollifier support and angular quadrature points per axis."""

    nu: float
    points: int = 8

    def __post_init__(self):
        if not 0 < self.nu < 1:
            raise ValueError("nu must lie in (0, 1)")
        if self.points < 2 or self.points % 2:
            raise ValueError("points per axis must be an even integer >= 2")


def bump_profile(r2) -> np.ndarray:
    """Unnormalized ``exp(-1/(1 - |x|^2))`` as a function of ``|x|^2``."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def bump_normalization(dim: int) -> float:
    """Integral of :func:`bump_profile` over the unit ball of ``R^dim``."""
    area = 2.0 * np.pi ** (dim / 2.0) / gamma_fn(dim / 2.0)
    val, _ = integrate.quad(lambda r: r ** (dim - 1) * np.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                            epsabs=1e-14, epsrel=1e-12)
    return float(area * val)


def bump_derivatives(s):
    """Normalized bump ``phi``, its gradient and Hessian at points ``s``.

    Parameters
    ----------
    s : array_like, shape (M, dim)

    Returns
    -------
    phi : (M,), grad : (M, dim), hess : (M, dim, dim)
    """
    s = np.asarray(s, dtype=float)
    dim = s.shape[-1]
    r2 = np.sum(s * s, axis=-1)
    phi = bump_profile(r2) / bump_normalization(dim)
    inside = r2 < 1.0
    t = np.where(inside, 1.0 - r2, 1.0)
    # phi = exp(-1/t): d phi = phi * g with g = -2 s / t^2
    g = -2.0 * s / t[:, None] ** 2
    grad = phi[:, None] * g
    dg = -2.0 * np.eye(dim)[None] / t[:, None, None] ** 2 - 8.0 * s[:, :, None] * s[:, None, :] / t[:, None, None] ** 3
    hess = phi[:, None, None] * (g[:, :, None] * g[:, None, :] + dg)
    return phi, grad, hess


def ball_rule_4d(points: int):
    """Product rule on the unit ball of ``R^4``.

    Writes ``s = (r sqrt(1-u) e^{i a}, r sqrt(u) e^{i b})`` so that
    ``ds = (r^3 / 2) dr du da db``.  Gauss-Legendre in ``r`` (with
    ``RADIAL_FACTOR * points`` nodes) and in ``u``, uniform nodes in ``a`` and
    ``b``.  For even ``points`` the node set is symmetric under ``s -> -s``.

    Returns
    -------
    nodes : ndarray, shape (M, 4)
    weights : ndarray, shape (M,)
    """
    xr, wr = np.polynomial.legendre.leggauss(RADIAL_FACTOR * points)
    xu, wu = np.polynomial.legendre.leggauss(points)
    r, wr = 0.5 * (xr + 1.0), 0.5 * wr
    u, wu = 0.5 * (xu + 1.0), 0.5 * wu
    ang = 2.0 * np.pi * np.arange(points) / points
    R, U, A, B = np.meshgrid(r, u, ang, ang, indexing="ij")
    r1, r2 = R * np.sqrt(1.0 - U), R * np.sqrt(U)
    nodes = np.stack([r1 * np.cos(A), r1 * np.sin(A), r2 * np.cos(B), r2 * np.sin(B)], axis=-1)
    w = 0.5 * (wr * r**3)[:, None] * wu[None, :] * (2.0 * np.pi / points) ** 2
    weights = np.broadcast_to(w[:, :, None, None], R.shape)
    return nodes.reshape(-1, 4), weights.ravel().copy()


def midpoint_nodes(dim: int, n: int):
    """Tensor midpoint nodes on ``[-1, 1]^dim`` with ``n`` points per axis.

    Returns
    -------
    nodes : ndarray, shape (n**dim, dim)
    cell : float
        Volume of one cell, ``(2/n)**dim``.
    """
    h = 2.0 / n
    axis = -1.0 + h * (np.arange(n) + 0.5)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    return nodes, h**dim
