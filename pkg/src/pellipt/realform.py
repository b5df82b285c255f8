"""Real-coordinate representations of complex vectors and matrices.

Complex vectors in :math:`\\mathbb{C}^d` are identified with real vectors in
:math:`\\mathbb{R}^{2d}` by stacking real and imaginary parts, and complex
matrices act on those through the block matrix ``[[Re A, -Im A], [Im A, Re A]]``.
The module also hosts the exponent-dependent real-linear map

.. math:: \\mathcal{J}_p \\xi = p \\operatorname{Re} \\xi - \\bar\\xi,

and the generalized Hessian of a function of several complex variables
against a family of first-order differential operators.  Everything is
vectorized over leading axes.

The inner product convention is :math:`\\langle u, v\\rangle = \\sum_j u_j \\bar v_j`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conjugate_exponent",
    "p_star",
    "inner",
    "realify_vector",
    "complexify",
    "realify_matrix",
    "stack_realified",
    "jp_apply",
    "jp_matrix",
    "jp_norm",
    "kron_hessian_apply",
    "generalized_hessian",
]


def conjugate_exponent(p: float) -> float:
    """Return the Hölder conjugate ``q = p / (p - 1)`` of ``p > 1``."""
    p = float(p)
    if not p > 1.0:
        raise ValueError(f"exponent must exceed 1, got {p}")
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def p_star(p: float) -> float:
    """Return ``max(p, q)`` where ``q`` is the conjugate exponent."""
    return max(float(p), conjugate_exponent(p))


def inner(u, v) -> np.ndarray:
    """Complex inner product ``sum(u * conj(v))`` over the last axis."""
    return np.sum(np.asarray(u) * np.conj(np.asarray(v)), axis=-1)


def realify_vector(xi) -> np.ndarray:
    """Map ``xi`` in ``C^d`` to ``(Re xi, Im xi)`` in ``R^{2d}`` (last axis)."""
    xi = np.asarray(xi)
    return np.concatenate([xi.real, xi.imag], axis=-1).astype(float)


def complexify(x) -> np.ndarray:
    """Inverse of :func:`realify_vector`."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] // 2
    return x[..., :d] + 1j * x[..., d:]


def realify_matrix(A) -> np.ndarray:
    """Real ``2d x 2d`` block form of complex ``d x d`` matrices.

    For every ``A`` and vectors ``xi``, ``sigma`` one has
    ``Re <A xi, sigma> = realify_matrix(A) @ realify_vector(xi) . realify_vector(sigma)``.
    """
    A = np.asarray(A, dtype=complex)
    top = np.concatenate([A.real, -A.imag], axis=-1)
    bottom = np.concatenate([A.imag, A.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def stack_realified(*vectors) -> np.ndarray:
    """Concatenate :func:`realify_vector` of each argument (the ``k``-fold stacking)."""
    return np.concatenate([realify_vector(v) for v in vectors], axis=-1)


def jp_apply(p: float, xi) -> np.ndarray:
    """Apply ``J_p xi = p Re(xi) - conj(xi)``.

    Equivalently ``(p/2) (xi + (1 - 2/p) conj(xi))``.  The map is only
    real-linear; it multiplies real parts by ``p - 1`` and leaves imaginary
    parts unchanged.
    """
    xi = np.asarray(xi)
    return p * xi.real - np.conj(xi)


def jp_matrix(p: float, d: int) -> np.ndarray:
    """Real ``2d x 2d`` matrix of :func:`jp_apply`, namely ``diag((p-1) I, I)``."""
    return np.diag(np.concatenate([np.full(d, p - 1.0), np.ones(d)]))


def jp_norm(p: float) -> float:
    """Exact operator norm of :func:`jp_apply` on ``C^d``, equal to ``max(p - 1, 1)``."""
    return max(float(p) - 1.0, 1.0)


def kron_hessian_apply(H, x, d: int) -> np.ndarray:
    """Compute ``(H kron I_d) x`` without forming the Kronecker product.

    Parameters
    ----------
    H : array_like, shape (..., m, m)
    x : array_like, shape (..., m * d)
    d : int
    """
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    m = H.shape[-1]
    blocks = x.reshape(x.shape[:-1] + (m, d))
    return (H @ blocks).reshape(x.shape)


def generalized_hessian(hess, grad, omega, X, A, b, c, V) -> dict[str, np.ndarray]:
    """Generalized Hessian of a function of ``k`` complex variables.

    For a function ``Phi`` of ``omega = (omega_1, ..., omega_k)`` and
    operators with coefficients ``(A_i, b_i, c_i, V_i)`` acting on the
    ``i``-th variable, with directions ``X_i`` in ``C^d``, returns the parts

    * ``"A"``: ``<[D^2 Phi kron I_d] W(X), (+) M(A_i) W(X)>``
    * ``"bc"``: ``<[D^2 Phi kron I_d] W(X), W(omega_i c_i)> + <grad Phi, W(<X_i, b_i>)>``
    * ``"V"``: ``<grad Phi, W(V_i omega_i)>``

    and their sum under ``"total"``.  Here ``W`` realifies and stacks the
    ``k`` components in order.

    Parameters
    ----------
    hess : array_like, shape (N, 2k, 2k)
        Real Hessian of ``Phi`` in the coordinates ``(Re w1, Im w1, Re w2, ...)``.
    grad : array_like, shape (N, 2k)
    omega : array_like, shape (N, k), complex
    X : array_like, shape (N, k, d), complex
    A : array_like, shape (N, k, d, d), complex
    b, c : array_like, shape (N, k, d), complex
    V : array_like, shape (N, k), real or complex

    Returns
    -------
    dict of ndarray, each of shape (N,)
    """
    hess = np.asarray(hess, dtype=float)
    grad = np.asarray(grad, dtype=float)
    omega = np.asarray(omega, dtype=complex)
    X = np.asarray(X, dtype=complex)
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=complex)
    V = np.asarray(V)
    n, k, d = X.shape

    def stack_rows(Z):
        # (N, k, d) complex -> (N, 2k, d) with rows Re Z_1, Im Z_1, Re Z_2, ...
        return np.stack([Z.real, Z.imag], axis=2).reshape(n, 2 * k, d)

    def stack_scalars(z):
        return np.stack([z.real, z.imag], axis=2).reshape(n, 2 * k)

    WX = stack_rows(X)
    HWX = hess @ WX
    AX = np.einsum("nkij,nkj->nki", A, X)
    part_a = np.sum(HWX * stack_rows(AX), axis=(1, 2))
    oc = omega[:, :, None] * c
    Xb = np.sum(X * np.conj(b), axis=-1)
    part_bc = np.sum(HWX * stack_rows(oc), axis=(1, 2)) + np.sum(grad * stack_scalars(Xb), axis=1)
    part_v = np.sum(grad * stack_scalars(V * omega), axis=1)
    return {"A": part_a, "bc": part_bc, "V": part_v, "total": part_a + part_bc + part_v}
