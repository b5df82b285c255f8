"""Ellipticity constants and class membership for coefficient tuples.

A coefficient tuple ``(A, b, c, V)`` is stored on a finite set of sample
sites.  Essential infima and suprema over the domain are realized as minima
and maxima over those sites.  For an exponent ``p > 1`` the central object is
the quadratic-affine function

.. math::

    \\Gamma_p(x, \\xi) = \\operatorname{Re}\\langle A\\xi, \\mathcal{J}_p\\xi\\rangle
        + \\operatorname{Re}\\langle b + \\mathcal{J}_p c, \\xi\\rangle + V,

and ``mu_p`` is the largest ``mu`` with ``Gamma_p >= mu (|xi|^2 + V)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .realform import (
    conjugate_exponent,
    jp_apply,
    jp_matrix,
    jp_norm,
    realify_matrix,
    realify_vector,
)

__all__ = [
    "CoefficientTuple",
    "EllipticityReport",
    "DominationReport",
    "MembershipError",
    "CoefficientFileError",
    "lambda_bounds",
    "delta_p",
    "gamma_p",
    "site_mu_p",
    "mu_p",
    "optimal_M",
    "classify",
    "in_Sp",
    "adjoint_tuple",
    "rotate_tuple",
    "exponent_window",
    "rotation_window",
    "counterexample_tuple",
    "bc_domination_check",
    "cialdea_mazya_form",
    "cialdea_mazya_check",
    "load_coefficients",
    "save_coefficients",
]

RANK_TOL = 1e-12
BISECTION_TOL = 1e-10


class MembershipError(ValueError):
    """Raised when an operation requires a class membership that fails."""


class CoefficientFileError(ValueError):
    """Raised for malformed coefficient files."""


@dataclass(frozen=True)
class CoefficientTuple:
    """Coefficients ``(A, b, c, V)`` sampled on ``n`` sites in dimension ``d``.

    Parameters
    ----------
    A : ndarray, shape (n, d, d), complex
    b, c : ndarray, shape (n, d), complex
    V : ndarray, shape (n,), real and non-negative
    sites : ndarray, shape (n, m), optional
        Coordinates of the sample sites, kept for bookkeeping only.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    V: np.ndarray
    sites: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.ndim == 2:
            A = A[None]
        n, d, d2 = A.shape
        if d != d2 or n == 0:
            raise ValueError(f"A must have shape (n, d, d) with n >= 1, got {A.shape}")
        b = np.broadcast_to(np.asarray(self.b, dtype=complex), (n, d)).copy()
        c = np.broadcast_to(np.asarray(self.c, dtype=complex), (n, d)).copy()
        V = np.broadcast_to(np.asarray(self.V, dtype=float), (n,)).copy()
        for name, arr in (("A", A), ("b", b), ("c", c), ("V", V)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        if np.any(V < 0):
            raise ValueError("potential V must be non-negative at every site")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "V", V)

    @property
    def n_sites(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @classmethod
    def constant(cls, A, b=None, c=None, V=0.0, n_sites: int = 1):
        """Spatially constant tuple repeated on ``n_sites`` sites."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        d = A.shape[0]
        b = np.zeros(d) if b is None else b
        c = np.zeros(d) if c is None else c
        return cls(
            np.broadcast_to(A, (n_sites, d, d)),
            np.broadcast_to(np.asarray(b, dtype=complex), (n_sites, d)),
            np.broadcast_to(np.asarray(c, dtype=complex), (n_sites, d)),
            np.broadcast_to(np.asarray(V, dtype=float), (n_sites,)),
        )

    def replace(self, **kw) -> "CoefficientTuple":
        data = dict(A=self.A, b=self.b, c=self.c, V=self.V, sites=self.sites)
        data.update(kw)
        return CoefficientTuple(**data)


@dataclass(frozen=True)
class EllipticityReport:
    """Summary of ellipticity constants and class memberships."""

    p: float
    lam: float
    Lam: float
    delta_p: float
    mu_p: float
    M_const: float
    in_Sp: bool
    in_Bp: bool
    in_BmuM: bool


@dataclass(frozen=True)
class DominationReport:
    """Empirical domination constants of the first-order terms by ``sqrt(V)``."""

    C_tilde: float
    C: float
    bound_holds: bool
    bound_slack: float


def _sym(S):
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def lambda_bounds(A) -> tuple[float, float]:
    """Return ``(lambda, Lambda)`` for a matrix field.

    ``lambda`` is the worst-site smallest eigenvalue of the symmetric part of
    the real form and ``Lambda`` the worst-site spectral norm.
    """
    A = _as_field(A)
    lam = np.linalg.eigvalsh(_sym(realify_matrix(A)))[:, 0].min()
    Lam = np.linalg.norm(A, ord=2, axis=(1, 2)).max()
    return float(lam), float(Lam)


def _as_field(A):
    if isinstance(A, CoefficientTuple):
        return A.A
    A = np.asarray(A, dtype=complex)
    return A[None] if A.ndim == 2 else A


def delta_p(A, p: float) -> float:
    """``min_x min_{|xi|=1} Re <A xi, xi + k conj(xi)>`` with ``k = |1 - 2/p|``."""
    A = _as_field(A)
    d = A.shape[-1]
    k = abs(1.0 - 2.0 / p)
    D = np.concatenate([np.full(d, 1.0 + k), np.full(d, 1.0 - k)])
    S = _sym(D[:, None] * realify_matrix(A))
    return float(np.linalg.eigvalsh(S)[:, 0].min())


def gamma_p(coeffs: CoefficientTuple, site, xi, p: float) -> np.ndarray:
    """Evaluate ``Gamma_p`` at one site (or an index array) for directions ``xi``.

    ``xi`` has shape ``(..., d)``; broadcasting against the site axis is
    allowed when ``site`` is an array.
    """
    A = coeffs.A[site]
    b = coeffs.b[site]
    c = coeffs.c[site]
    V = coeffs.V[site]
    xi = np.asarray(xi, dtype=complex)
    Axi = np.einsum("...ij,...j->...i", A, xi)
    quad = np.sum(Axi * np.conj(jp_apply(p, xi)), axis=-1).real
    w = b + jp_apply(p, c)
    lin = np.sum(w * np.conj(xi), axis=-1).real
    return quad + lin + V


def _quadratic_data(coeffs: CoefficientTuple, p: float):
    """Real symmetric ``S`` and vector ``w`` with ``Gamma_p = x.S.x + w.x + V``."""
    d = coeffs.dim
    S = _sym(jp_matrix(p, d) @ realify_matrix(coeffs.A))
    w = realify_vector(coeffs.b + jp_apply(p, coeffs.c))
    return S, w


def site_mu_p(coeffs: CoefficientTuple, p: float) -> np.ndarray:
    """Per-site largest ``mu`` with ``Gamma_p >= mu (|xi|^2 + V)``.

    Sites at which ``Gamma_p >= 0`` fails get ``-inf``.  The search bisects
    on ``mu`` with an exact semidefinite certificate: ``S - mu I`` must be
    positive semidefinite, ``w`` must lie in its range, and the minimum of
    the quadratic, ``(1 - mu) V - w.(S - mu I)^+ w / 4``, must be
    non-negative.
    """
    S, w = _quadratic_data(coeffs, p)
    V = coeffs.V
    evals, evecs = np.linalg.eigh(S)
    wt = np.einsum("nij,ni->nj", evecs, w)
    scale = 1.0 + np.abs(evals).max(axis=1)

    def feasible(mu):
        shifted = evals - mu[:, None]
        tol = RANK_TOL * scale[:, None]
        psd = np.all(shifted >= -tol, axis=1)
        null = shifted <= tol
        wnorm = 1.0 + np.linalg.norm(w, axis=1)
        in_range = np.all(~null | (np.abs(wt) <= RANK_TOL * wnorm[:, None]), axis=1)
        safe = np.where(null, 1.0, shifted)
        quad = np.sum(np.where(null, 0.0, wt**2 / safe), axis=1)
        const = (1.0 - mu) * V - 0.25 * quad
        return psd & in_range & (const >= -RANK_TOL * (1.0 + V))

    n = S.shape[0]
    lo = np.zeros(n)
    ok0 = feasible(lo)
    hi = np.minimum(evals[:, 0] + 1.0, 2.0)
    hi = np.where(V > 0, np.minimum(hi, 1.0 + BISECTION_TOL), hi)
    hi = np.maximum(hi, lo)
    top_ok = feasible(hi)
    lo = np.where(top_ok, hi, lo)
    while np.any((hi - lo > BISECTION_TOL) & ok0 & ~top_ok):
        mid = 0.5 * (lo + hi)
        good = feasible(mid)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    return np.where(ok0, lo, -np.inf)


def mu_p(coeffs: CoefficientTuple, p: float) -> float:
    """Largest ``mu`` with ``Gamma_p >= mu (|xi|^2 + V)`` at every site.

    Returns ``-inf`` when ``Gamma_p >= 0`` fails at some site.
    """
    return float(site_mu_p(coeffs, p).min())


def optimal_M(coeffs: CoefficientTuple) -> float:
    """Smallest ``M`` with ``|b - c| <= M sqrt(V)`` at every site (``0/0 = 0``)."""
    return _domination_ratio(np.linalg.norm(coeffs.b - coeffs.c, axis=1), coeffs.V)


def _domination_ratio(num, V) -> float:
    num = np.asarray(num, dtype=float)
    if np.any((V == 0) & (num != 0)):
        return float("inf")
    pos = V > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(num[pos] / np.sqrt(V[pos])))


def in_Sp(coeffs: CoefficientTuple, p: float) -> bool:
    """Membership test ``mu_p > 0`` and ``M < inf``."""
    return bool(mu_p(coeffs, p) > 0 and np.isfinite(optimal_M(coeffs)))


def classify(coeffs: CoefficientTuple, p: float, mu_threshold=None, M_threshold=None) -> EllipticityReport:
    """Compute all constants and class memberships at exponent ``p``.

    ``in_BmuM`` compares ``mu_2`` and ``M`` against the supplied thresholds;
    when a threshold is omitted the optimal value is used, so that
    ``in_BmuM`` then reduces to ``mu_2 > 0`` and ``M < inf``.
    """
    lam, Lam = lambda_bounds(coeffs.A)
    dp = delta_p(coeffs.A, p)
    mp = mu_p(coeffs, p)
    M = optimal_M(coeffs)
    finite_M = np.isfinite(M)
    sp = bool(mp > 0 and finite_M)
    q = conjugate_exponent(p)
    sq = sp if np.isclose(q, p) else bool(mu_p(coeffs, q) > 0 and finite_M)
    mu2 = mp if p == 2 else mu_p(coeffs, 2.0)
    if mu_threshold is None:
        mu_ok = mu2 > 0
    else:
        mu_ok = mu2 >= mu_threshold and mu_threshold > 0
    M_ok = finite_M if M_threshold is None else M <= M_threshold
    return EllipticityReport(
        p=float(p),
        lam=lam,
        Lam=Lam,
        delta_p=dp,
        mu_p=mp,
        M_const=M,
        in_Sp=sp,
        in_Bp=sp and sq,
        in_BmuM=bool(mu_ok and M_ok),
    )


def adjoint_tuple(coeffs: CoefficientTuple) -> CoefficientTuple:
    """Return ``(A^*, c, b, V)``."""
    return coeffs.replace(A=np.conj(np.swapaxes(coeffs.A, -1, -2)), b=coeffs.c, c=coeffs.b)


def rotate_tuple(coeffs: CoefficientTuple, phi: float) -> CoefficientTuple:
    """Return ``(e^{i phi} A, e^{i phi} b, e^{i phi} c, cos(phi) V)``."""
    z = np.exp(1j * phi)
    return coeffs.replace(A=z * coeffs.A, b=z * coeffs.b, c=z * coeffs.c, V=np.cos(phi) * coeffs.V)


def exponent_window(coeffs: CoefficientTuple, p: float, lo_limit: float = 1.0 + 1e-3,
                    hi_limit: float = 64.0, resolution: float = 1e-3) -> tuple[float, float]:
    """Maximal exponent interval around ``p`` on which the tuple stays in ``S_s``.

    The membership set is an interval, so each end is located by bisection;
    the returned ends are always inside the set (the conservative side).
    """
    if not in_Sp(coeffs, p):
        raise MembershipError(f"tuple is not in S_p at p={p}")

    def search(inside, outside_limit):
        if in_Sp(coeffs, outside_limit):
            return outside_limit
        good, bad = inside, outside_limit
        while abs(bad - good) > resolution:
            mid = 0.5 * (good + bad)
            if in_Sp(coeffs, mid):
                good = mid
            else:
                bad = mid
        return good

    return search(p, lo_limit), search(p, hi_limit)


def rotation_window(coeffs: CoefficientTuple, p: float, step: float = 1e-3) -> float:
    """Largest grid angle ``theta`` with the rotated tuple in ``S_p`` for ``|phi| <= theta``.

    The grid is ``step, 2 step, ...`` capped at ``pi/2 - step``.
    """
    if not in_Sp(coeffs, p):
        raise MembershipError(f"tuple is not in S_p at p={p}")
    cap = np.pi / 2 - step
    n = int(np.floor(cap / step + 1e-9))
    grid = list(step * np.arange(1, n + 1))
    if cap - grid[-1] > 1e-12:
        grid.append(cap)
    theta = 0.0
    for phi in grid:
        if not (in_Sp(rotate_tuple(coeffs, phi), p) and in_Sp(rotate_tuple(coeffs, -phi), p)):
            break
        theta = phi
    return float(theta)


def counterexample_tuple(p: float, r: float, V, rho: float, dim: int = 1):
    """First-order terms that keep a tuple in ``S_p`` but push it out of ``S_r``.

    With ``v`` along the first axis and ``(r - p)^2 |v|^2 = rho V``, returns
    ``b = -(p-1) v - i (p/2) v`` and ``c = v + i (p/2) v``, so that
    ``b + J_p c = 0`` and ``b + J_r c = (r - p) v``.

    Returns
    -------
    b, c : ndarray, shape (n, dim), complex
    """
    if p == r:
        raise ValueError("exponents p and r must differ")
    V = np.atleast_1d(np.asarray(V, dtype=float))
    if not np.any(V > 0):
        raise ValueError("V must not vanish identically")
    v = np.zeros((V.size, dim))
    v[:, 0] = np.sqrt(rho * V) / abs(r - p)
    b = -(p - 1.0) * v - 1j * (p / 2.0) * v
    c = v + 1j * (p / 2.0) * v
    return b, c


def bc_domination_check(coeffs: CoefficientTuple, p: float, s: float) -> DominationReport:
    """Empirical constants in ``|b + J_s c| <= C~ sqrt(V)`` and ``|b|, |c| <= C sqrt(V)``.

    Also verifies, site by site, the explicit estimate
    ``|b + J_p c|^2 <= 4 (1 - mu_p)(||J_p|| Lambda - mu_p) V`` that follows from
    maximizing ``-Gamma_p`` along the ray through ``b + J_p c``.
    """
    V = coeffs.V
    num_s = np.linalg.norm(coeffs.b + jp_apply(s, coeffs.c), axis=1)
    num_bc = np.maximum(np.linalg.norm(coeffs.b, axis=1), np.linalg.norm(coeffs.c, axis=1))
    zero = V == 0
    if np.any(zero & ((num_s > RANK_TOL) | (num_bc > RANK_TOL))):
        raise MembershipError("first-order terms do not vanish where V = 0")
    C_tilde = _domination_ratio(np.where(zero, 0.0, num_s), V)
    C = _domination_ratio(np.where(zero, 0.0, num_bc), V)
    m = mu_p(coeffs, p)
    if not m > 0:
        raise MembershipError(f"tuple is not in S_p at p={p}")
    _, Lam = lambda_bounds(coeffs.A)
    xi0 = np.linalg.norm(coeffs.b + jp_apply(p, coeffs.c), axis=1) ** 2
    bound = 4.0 * (1.0 - m) * (jp_norm(p) * Lam - m) * V
    slack = float(np.min(bound - xi0))
    return DominationReport(C_tilde, C, bool(slack >= -1e-9 * (1.0 + V.max())), slack)


def cialdea_mazya_form(coeffs: CoefficientTuple, site, alpha, beta, p: float) -> np.ndarray:
    """Real-variable form of the dissipativity condition with unit weights.

    Evaluates, for real ``alpha``, ``beta`` in ``R^d``,

    ``(4/(pq)) <Re A alpha, alpha> + <Re A beta, beta>
    + 2 <(Im A / p - Im A^T / q) alpha, beta> + <Im(b + c), beta>
    + 2 <Re(b/p + c/q), alpha> + V``.

    It coincides with ``Gamma_p(x, (2/p) alpha + i beta)``.
    """
    q = conjugate_exponent(p)
    A = coeffs.A[site]
    ReA, ImA = A.real, A.imag
    b, c, V = coeffs.b[site], coeffs.c[site], coeffs.V[site]
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)

    def bil(M, u, v):
        return np.einsum("...i,...ij,...j->...", v, M, u)

    cross = ImA / p - np.swapaxes(ImA, -1, -2) / q
    return (
        4.0 / (p * q) * bil(ReA, alpha, alpha)
        + bil(ReA, beta, beta)
        + 2.0 * bil(cross, alpha, beta)
        + np.sum((b + c).imag * beta, axis=-1)
        + 2.0 * np.sum((b / p + c / q).real * alpha, axis=-1)
        + V
    )


def cialdea_mazya_check(coeffs: CoefficientTuple, p: float, directions=None, n_samples: int = 2000,
                        seed: int = 0xBE11, tol: float = 1e-12) -> bool:
    """Check non-negativity of :func:`cialdea_mazya_form` on sampled ``(alpha, beta)``.

    Parameters
    ----------
    directions : array_like, shape (m, 2d), optional
        Explicit real samples ``(alpha, beta)``.  When omitted, random unit
        directions times log-spaced radii in ``[1e-3, 1e3]`` are used, plus
        signed coordinate axes.
    """
    d = coeffs.dim
    if directions is None:
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((n_samples, 2 * d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        axes = np.concatenate([np.eye(2 * d), -np.eye(2 * d)])
        u = np.concatenate([u, axes])
        radii = np.logspace(-3, 3, 61)
        directions = (u[:, None, :] * radii[None, :, None]).reshape(-1, 2 * d)
    directions = np.asarray(directions, dtype=float)
    alpha, beta = directions[:, :d], directions[:, d:]
    for site in range(coeffs.n_sites):
        vals = cialdea_mazya_form(coeffs, site, alpha, beta, p)
        if np.min(vals) < -tol * (1.0 + coeffs.V[site]):
            return False
    return True


# --- coefficient files -------------------------------------------------------
#
# Plain text.  Blank lines and lines starting with '#' are ignored.  The first
# record is ``dim <d>``.  Each further line is one site with 2d^2 + 4d + 1
# whitespace-separated numbers in the order
#   Re A (row-major), Im A (row-major), Re b, Im b, Re c, Im c, V.


def save_coefficients(coeffs: CoefficientTuple, path) -> None:
    """Write a tuple in the plain-text coefficient format."""
    d = coeffs.dim
    lines = [
        "# pellipt coefficient file",
        "# per site: ReA(row-major) ImA(row-major) Reb Imb Rec Imc V",
        f"dim {d}",
    ]
    for i in range(coeffs.n_sites):
        A = coeffs.A[i]
        rec = np.concatenate([
            A.real.ravel(), A.imag.ravel(),
            coeffs.b[i].real, coeffs.b[i].imag,
            coeffs.c[i].real, coeffs.c[i].imag,
            [coeffs.V[i]],
        ])
        lines.append(" ".join(repr(float(x)) for x in rec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_coefficients(path) -> CoefficientTuple:
    """Read a tuple written by :func:`save_coefficients`.

    Raises
    ------
    CoefficientFileError
        On missing header, wrong record length, unparsable or invalid values.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CoefficientFileError(f"cannot read {path}: {exc}") from exc
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    if not rows or not rows[0].startswith("dim"):
        raise CoefficientFileError("first record must be 'dim <d>'")
    try:
        d = int(rows[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise CoefficientFileError("bad 'dim' record") from exc
    if d < 1:
        raise CoefficientFileError("dimension must be positive")
    width = 2 * d * d + 4 * d + 1
    recs = []
    for k, ln in enumerate(rows[1:], start=2):
        try:
            vals = [float(x) for x in ln.split()]
        except ValueError as exc:
            raise CoefficientFileError(f"record {k}: non-numeric entry") from exc
        if len(vals) != width:
            raise CoefficientFileError(f"record {k}: expected {width} numbers, got {len(vals)}")
        recs.append(vals)
    if not recs:
        raise CoefficientFileError("no site records")
    R = np.array(recs)
    dd = d * d
    A = (R[:, :dd] + 1j * R[:, dd:2 * dd]).reshape(-1, d, d)
    o = 2 * dd
    b = R[:, o:o + d] + 1j * R[:, o + d:o + 2 * d]
    c = R[:, o + 2 * d:o + 3 * d] + 1j * R[:, o + 3 * d:o + 4 * d]
    V = R[:, -1]
    try:
        return CoefficientTuple(A, b, c, V)
    except ValueError as exc:
        raise CoefficientFileError(str(exc)) from exc
