"""The two-variable Bellman function and its generalized convexity.

For ``p >= 2`` with conjugate ``q`` and a parameter ``delta > 0``,

.. math::

    Q(\\zeta, \\eta) = |\\zeta|^p + |\\eta|^q + \\delta
    \\begin{cases}
        |\\zeta|^2 |\\eta|^{2-q}, & |\\zeta|^p \\le |\\eta|^q,\\\\
        \\tfrac{2}{p}|\\zeta|^p + (\\tfrac{2}{q} - 1)|\\eta|^q, & \\text{otherwise}.
    \\end{cases}

``Q`` is continuously differentiable everywhere and twice differentiable off
the singular set ``{eta = 0} U {|zeta|^p = |eta|^q}``.  Derivatives are taken
in the real coordinates ``(Re zeta, Im zeta, Re eta, Im eta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .ellipticity import (
    CoefficientTuple,
    _domination_ratio,
    delta_p,
    lambda_bounds,
    mu_p,
    optimal_M,
)
from .mollifier import MollifierSpec, ball_rule_4d, bump_derivatives
from .realform import conjugate_exponent, generalized_hessian, jp_apply

__all__ = [
    "BellmanParams",
    "BellmanEval",
    "OnSingularSet",
    "PreconditionViolated",
    "UPSILON_TOL",
    "size_constant",
    "on_upsilon",
    "bellman_derivatives",
    "q_eval",
    "q_grad",
    "q_hess",
    "hess_bellman_generalized",
    "tensor_hessian_first_order",
    "choose_delta",
    "delta_inputs",
    "ScanResult",
    "convexity_scan",
    "MollifiedEval",
    "mollify_q",
    "hess_mollified_generalized",
    "RemainderResult",
    "remainders",
]

UPSILON_TOL = 1e-8
DEFAULT_DELTA = 0.05


class OnSingularSet(ValueError):
    """Raised when a second derivative is requested too close to the singular set."""


class PreconditionViolated(ValueError):
    """Raised when coefficient tuples fail the class hypotheses of a scan."""


@dataclass(frozen=True)
class BellmanParams:
    """Exponent ``p >= 2`` and weight ``delta`` in ``(0, 1)``."""

    p: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError("p must be at least 2")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def q(self) -> float:
        return conjugate_exponent(self.p)


@dataclass(frozen=True)
class BellmanEval:
    zeta: complex
    eta: complex
    value: float
    grad: np.ndarray | None = None
    d_zeta: complex | None = None
    d_eta: complex | None = None
    hess: np.ndarray | None = None
    on_upsilon: bool = False


def size_constant(params: BellmanParams) -> float:
    """Single constant ``K`` in the three size estimates.

    ``Q <= K (|zeta|^p + |eta|^q)``, ``|d_zeta Q| <= K max(|zeta|^{p-1}, |eta|)``
    and ``|d_eta Q| <= K |eta|^{q-1}``, with Wirtinger derivatives.
    """
    p, q, dl = params.p, params.q, params.delta
    return max(1.0 + dl, p / 2.0 + dl, q / 2.0 + dl * (1.0 - q / 2.0))


def on_upsilon(params: BellmanParams, zeta, eta) -> np.ndarray:
    """Relative-proximity test for the singular set (always false when ``p = 2``)."""
    zeta = np.asarray(zeta, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    if params.p == 2:
        return np.zeros(np.broadcast(zeta, eta).shape, dtype=bool)
    rz, re = np.abs(zeta), np.abs(eta)
    a, b = rz**params.p, re**params.q
    return (re < UPSILON_TOL * (1.0 + rz)) | (np.abs(a - b) < UPSILON_TOL * (a + b))


def _power(r, rho, u):
    """``|x|^r`` with gradient and Hessian in R^2; second derivatives at 0 are
    set to their limits (0 for r > 2, 2I for r = 2, inf for r < 2)."""
    value = rho**r
    pos = rho > 0
    safe = np.where(pos, rho, 1.0)
    scale = np.where(pos, r * safe ** (r - 2.0), 0.0)
    grad = scale[:, None] * u
    uhat = u / safe[:, None]
    hess = scale[:, None, None] * (np.eye(2) + (r - 2.0) * uhat[:, :, None] * uhat[:, None, :])
    if not np.all(pos):
        at0 = 0.0 if r > 2 else (2.0 if r == 2 else np.inf)
        hess[~pos] = at0 * np.eye(2) if np.isfinite(at0) else np.inf
    return value, grad, hess


def bellman_derivatives(params: BellmanParams, zeta, eta, order: int = 2):
    """Vectorized value, gradient and Hessian of ``Q``.

    Parameters
    ----------
    zeta, eta : array_like, shape (N,)
    order : {0, 1, 2}

    Returns
    -------
    value : (N,)
    grad : (N, 4) or None
    hess : (N, 4, 4) or None
    inner : (N,) bool
        True where the branch ``|zeta|^p <= |eta|^q`` (with ``eta != 0``) is used.
    """
    p, q, dl = params.p, params.q, params.delta
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    zeta, eta = np.broadcast_arrays(zeta, eta)
    n = zeta.size
    zeta, eta = zeta.ravel(), eta.ravel()
    rz, re = np.abs(zeta), np.abs(eta)
    uz = np.stack([zeta.real, zeta.imag], axis=-1)
    ue = np.stack([eta.real, eta.imag], axis=-1)
    inner = (rz**p <= re**q) & (re > 0)

    Fp, gFp, hFp = _power(p, rz, uz)
    Fq, gFq, hFq = _power(q, re, ue)
    a2 = 1.0 + 2.0 * dl / p
    b2 = 1.0 + dl * (2.0 / q - 1.0)
    value = a2 * Fp + b2 * Fq
    ri = re[inner]
    t = ri ** (2.0 - q)
    value[inner] = Fp[inner] + Fq[inner] + dl * rz[inner] ** 2 * t
    if order == 0:
        return value, None, None, inner

    grad = np.concatenate([a2 * gFp, b2 * gFq], axis=1)
    s = (2.0 - q) * ri ** (-q)
    grad[inner, :2] = gFp[inner] + 2.0 * dl * t[:, None] * uz[inner]
    grad[inner, 2:] = gFq[inner] + dl * (rz[inner] ** 2 * s)[:, None] * ue[inner]
    if order == 1:
        return value, grad, None, inner

    hess = np.zeros((n, 4, 4))
    hess[:, :2, :2] = a2 * hFp
    hess[:, 2:, 2:] = b2 * hFq
    ehat = ue[inner] / ri[:, None]
    h2q = s[:, None, None] * (np.eye(2) - q * ehat[:, :, None] * ehat[:, None, :])
    hess[inner, :2, :2] = hFp[inner] + 2.0 * dl * t[:, None, None] * np.eye(2)
    hess[inner, 2:, 2:] = hFq[inner] + dl * rz[inner, None, None] ** 2 * h2q
    cross = dl * 2.0 * s[:, None, None] * uz[inner][:, :, None] * ue[inner][:, None, :]
    hess[inner, :2, 2:] = cross
    hess[inner, 2:, :2] = np.swapaxes(cross, 1, 2)
    return value, grad, hess, inner


def q_eval(params: BellmanParams, zeta: complex, eta: complex) -> BellmanEval:
    """Value of ``Q`` at one point."""
    v, _, _, _ = bellman_derivatives(params, zeta, eta, order=0)
    return BellmanEval(complex(zeta), complex(eta), float(v[0]),
                       on_upsilon=bool(on_upsilon(params, zeta, eta)))


def q_grad(params: BellmanParams, zeta: complex, eta: complex):
    """Real gradient (4-vector) and the Wirtinger pair ``(d_zeta Q, d_eta Q)``.

    ``d_zeta = (d_1 - i d_2) / 2`` and likewise for ``eta``.
    """
    _, g, _, _ = bellman_derivatives(params, zeta, eta, order=1)
    g = g[0]
    return g, 0.5 * (g[0] - 1j * g[1]), 0.5 * (g[2] - 1j * g[3])


def q_hess(params: BellmanParams, zeta: complex, eta: complex) -> np.ndarray:
    """4 x 4 Hessian of ``Q`` off the singular set.

    Raises
    ------
    OnSingularSet
    """
    if on_upsilon(params, zeta, eta):
        raise OnSingularSet(f"({zeta}, {eta}) is within tolerance of the singular set")
    _, _, h, _ = bellman_derivatives(params, zeta, eta)
    return h[0]


def _pair_arrays(coefA: CoefficientTuple, siteA, coefB: CoefficientTuple, siteB, n):
    ia = np.broadcast_to(np.asarray(siteA), (n,))
    ib = np.broadcast_to(np.asarray(siteB), (n,))
    A = np.stack([coefA.A[ia], coefB.A[ib]], axis=1)
    b = np.stack([coefA.b[ia], coefB.b[ib]], axis=1)
    c = np.stack([coefA.c[ia], coefB.c[ib]], axis=1)
    V = np.stack([coefA.V[ia], coefB.V[ib]], axis=1)
    return A, b, c, V


def _prep_directions(zeta, eta, X, Y):
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    n = max(zeta.size, eta.size)
    zeta = np.broadcast_to(zeta, (n,))
    eta = np.broadcast_to(eta, (n,))
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    X = np.broadcast_to(X, (n, X.shape[-1]))
    Y = np.broadcast_to(Y, (n, Y.shape[-1]))
    return zeta, eta, np.stack([X, Y], axis=1), n


def hess_bellman_generalized(coefA: CoefficientTuple, siteA, coefB: CoefficientTuple, siteB,
                             params: BellmanParams, zeta, eta, X, Y, check: bool = True,
                             parts: bool = False):
    """Generalized Hessian of ``Q`` for the pair of tuples at given sites.

    Sums the second-order part ``<[D^2 Q kron I] W(X,Y), (M(A) + M(B)) W(X,Y)>``,
    the first-order part ``<[D^2 Q kron I] W(X,Y), W(zeta c, eta gamma)>
    + <grad Q, W(<X, b>, <Y, beta>)>`` and the potential part
    ``<grad Q, W(V zeta, W eta)>``.

    Raises
    ------
    OnSingularSet
        If ``check`` and some point lies on the singular set.
    """
    zeta, eta, XY, n = _prep_directions(zeta, eta, X, Y)
    if check and np.any(on_upsilon(params, zeta, eta)):
        raise OnSingularSet("evaluation point within tolerance of the singular set")
    _, g, h, _ = bellman_derivatives(params, zeta, eta)
    A, b, c, V = _pair_arrays(coefA, siteA, coefB, siteB, n)
    out = generalized_hessian(h, g, np.stack([zeta, eta], axis=1), XY, A, b, c, V)
    return out if parts else out["total"]


def tensor_hessian_first_order(coefA: CoefficientTuple, siteA, coefB: CoefficientTuple, siteB,
                               q: float, zeta, eta, X, Y) -> np.ndarray:
    """First-order part of the generalized Hessian of ``|zeta|^2 |eta|^{2-q}``.

    Computed from the full 4 x 4 Hessian and gradient of the product
    function (not from the one-variable pieces).
    """
    zeta, eta, XY, n = _prep_directions(zeta, eta, X, Y)
    rz, re = np.abs(zeta), np.abs(eta)
    uz = np.stack([zeta.real, zeta.imag], axis=-1)
    ue = np.stack([eta.real, eta.imag], axis=-1)
    F2, g2, h2 = _power(2.0, rz, uz)
    Fr, gr, hr = _power(2.0 - q, re, ue)
    grad = np.concatenate([Fr[:, None] * g2, F2[:, None] * gr], axis=1)
    hess = np.zeros((n, 4, 4))
    hess[:, :2, :2] = Fr[:, None, None] * h2
    hess[:, 2:, 2:] = F2[:, None, None] * hr
    cross = g2[:, :, None] * gr[:, None, :]
    hess[:, :2, 2:] = cross
    hess[:, 2:, :2] = np.swapaxes(cross, 1, 2)
    A, b, c, V = _pair_arrays(coefA, siteA, coefB, siteB, n)
    out = generalized_hessian(hess, grad, np.stack([zeta, eta], axis=1), XY, A, b, c, V)
    return out["bc"]


# --- choice of delta ---------------------------------------------------------


def _delta_conditions(p, Lam, mu2, mu_q, C0, delta_B, dl):
    q = conjugate_exponent(p)
    first = 2.0 * q * mu2 * mu_q / (3.0 * dl) > C0**2
    C2 = (np.sqrt(q * mu2 * mu_q / (2.0 * dl)) - 0.5 * (2.0 - q) * C0) * min(
        np.sqrt(2.0 * mu2 * dl / (q * mu_q)), np.sqrt(q * mu_q / (2.0 * mu2 * dl)))
    Gam = q * mu_q / (6.0 * dl) + 0.25 * (2.0 - q) ** 2 * delta_B
    second = C2 > 0 and C2 * Gam > ((2.0 - q) * Lam) ** 2
    return bool(first), bool(second), float(C2), float(Gam)


def choose_delta(p: float, Lam: float, mu2: float, mu_q: float, C0: float, delta_B: float,
                 max_halvings: int = 40) -> float:
    """Largest ``delta = 2^-k`` meeting both strict inequalities of the convexity proof.

    The conditions are ``2 q mu2 mu_q / (3 delta) > C0^2`` and
    ``C2 * G > ((2 - q) Lam)^2`` with
    ``C2 = (sqrt(q mu2 mu_q / (2 delta)) - (2 - q) C0 / 2)
    * min(sqrt(2 mu2 delta / (q mu_q)), sqrt(q mu_q / (2 mu2 delta)))``
    and ``G = q mu_q / (6 delta) + (2 - q)^2 Delta_{2-q}(B) / 4``.

    Parameters
    ----------
    p : float
        Exponent ``>= 2``; ``p = 2`` returns ``0.5``.
    Lam : float
        Joint upper bound ``max(Lambda(A), Lambda(B))``.
    mu2, mu_q : float
        ``mu_2`` of the first tuple and ``mu_q`` of the second.
    C0 : float
        Common domination constant for ``Re c``, ``Re gamma`` and
        ``beta + J_{2-q} gamma`` by the square roots of the potentials.
    delta_B : float
        ``Delta_{2-q}(B)``.

    Raises
    ------
    PreconditionViolated
        If no ``delta >= 2^-max_halvings`` works.
    """
    if p == 2:
        return 0.5
    if not (mu2 > 0 and mu_q > 0):
        raise PreconditionViolated("mu_2 and mu_q must be positive")
    for k in range(1, max_halvings + 1):
        dl = 2.0**-k
        first, second, _, _ = _delta_conditions(p, Lam, mu2, mu_q, C0, delta_B, dl)
        if first and second:
            return dl
    raise PreconditionViolated(f"no admissible delta down to 2^-{max_halvings}")


def delta_inputs(coefA: CoefficientTuple, coefB: CoefficientTuple, p: float) -> dict:
    """Inputs of :func:`choose_delta` computed from the two tuples."""
    q = conjugate_exponent(p)
    Lam = max(lambda_bounds(coefA.A)[1], lambda_bounds(coefB.A)[1])
    C0 = max(
        _domination_ratio(np.linalg.norm(coefA.c.real, axis=1), coefA.V),
        _domination_ratio(np.linalg.norm(coefB.c.real, axis=1), coefB.V),
        _domination_ratio(np.linalg.norm(coefB.b + jp_apply(2.0 - q, coefB.c), axis=1), coefB.V),
    )
    return {
        "p": p,
        "Lam": Lam,
        "mu2": mu_p(coefA, 2.0),
        "mu_q": mu_p(coefB, q),
        "C0": C0,
        "delta_B": delta_p(coefB.A, 2.0 - q),
    }


# --- convexity scan ----------------------------------------------------------


@dataclass
class ScanResult:
    """Outcome of :func:`convexity_scan`.

    ``samples`` holds the columns ``site, zeta, eta, ratio`` when requested.
    """

    C_emp: float
    witness: dict
    n_samples: int
    samples: dict | None = None


def _check_scan_classes(coefA, coefB, params):
    p, q = params.p, params.q
    mA = optimal_M(coefA)
    mB = optimal_M(coefB)
    ok = (mu_p(coefA, p) > 0 and mu_p(coefA, 2.0) > 0 and mu_p(coefB, q) > 0
          and np.isfinite(mA) and np.isfinite(mB))
    if not ok:
        raise PreconditionViolated("scan requires the first tuple in S_p and S_2 and the second in S_q")


def _draw(rng, params, n, d, n_sites):
    out_z, out_e = [], []
    need = n
    while need > 0:
        m = int(need * 1.2) + 16
        z = 10.0 ** rng.uniform(-2, 2, m) * np.exp(2j * np.pi * rng.uniform(size=m))
        e = 10.0 ** rng.uniform(-2, 2, m) * np.exp(2j * np.pi * rng.uniform(size=m))
        keep = ~on_upsilon(params, z, e)
        out_z.append(z[keep][:need])
        out_e.append(e[keep][:need])
        need -= out_z[-1].size
    zeta = np.concatenate(out_z)
    eta = np.concatenate(out_e)
    X = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) * 10.0 ** rng.uniform(-2, 2, (n, 1))
    Y = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) * 10.0 ** rng.uniform(-2, 2, (n, 1))
    site = rng.integers(0, n_sites, n)
    return site, zeta, eta, X, Y


def _ratio(coefA, coefB, params, site, zeta, eta, X, Y):
    sa = site if coefA.n_sites > 1 else 0
    sb = site if coefB.n_sites > 1 else 0
    H = hess_bellman_generalized(coefA, sa, coefB, sb, params, zeta, eta, X, Y, check=False)
    Va = coefA.V[sa] * np.ones_like(np.abs(zeta))
    Wb = coefB.V[sb] * np.ones_like(np.abs(eta))
    den = np.sqrt(np.sum(np.abs(X) ** 2, axis=-1) + Va * np.abs(zeta) ** 2) * np.sqrt(
        np.sum(np.abs(Y) ** 2, axis=-1) + Wb * np.abs(eta) ** 2)
    return H / np.maximum(den, 1e-300)


def _polish(coefA, coefB, params, site, zeta, eta, X, Y):
    d = X.shape[-1]

    def unpack(v):
        return (v[0] + 1j * v[1], v[2] + 1j * v[3],
                v[4:4 + d] + 1j * v[4 + d:4 + 2 * d], v[4 + 2 * d:4 + 3 * d] + 1j * v[4 + 3 * d:])

    def f(v):
        z, e, x, y = unpack(v)
        if on_upsilon(params, z, e):
            return np.inf
        return float(_ratio(coefA, coefB, params, np.array([site]), np.array([z]), np.array([e]),
                            x[None], y[None])[0])

    v0 = np.concatenate([[zeta.real, zeta.imag, eta.real, eta.imag], X.real, X.imag, Y.real, Y.imag])
    res = optimize.minimize(f, v0, method="Nelder-Mead",
                            options={"maxiter": 20000, "maxfev": 20000, "xatol": 1e-12, "fatol": 1e-14})
    z, e, x, y = unpack(res.x)
    return float(res.fun), z, e, x, y


def convexity_scan(coefA: CoefficientTuple, coefB: CoefficientTuple, params: BellmanParams,
                   n_samples: int = 100_000, seed: int = 0xBE11, refine: int = 0,
                   check_classes: bool = True, keep_samples: bool = False,
                   chunk: int = 25_000) -> ScanResult:
    """Empirical lower constant of the generalized Hessian of ``Q``.

    Minimizes ``H / (sqrt(|X|^2 + V |zeta|^2) sqrt(|Y|^2 + W |eta|^2))`` over
    random samples with ``|zeta|, |eta|`` and the scales of ``X, Y``
    log-uniform in ``[1e-2, 1e2]``, uniform phases and Gaussian directions.
    Points on the singular set are redrawn.  Optionally the ``refine`` best
    samples are polished by a local Nelder-Mead search.

    Raises
    ------
    PreconditionViolated
        If ``check_classes`` and the tuples fail the scan hypotheses.
    """
    if check_classes:
        _check_scan_classes(coefA, coefB, params)
    if coefA.n_sites != coefB.n_sites and 1 not in (coefA.n_sites, coefB.n_sites):
        raise ValueError("tuples must share the site set or be constant")
    n_sites = max(coefA.n_sites, coefB.n_sites)
    rng = np.random.default_rng(seed)
    site, zeta, eta, X, Y = _draw(rng, params, n_samples, coefA.dim, n_sites)
    ratio = np.concatenate([
        _ratio(coefA, coefB, params, site[i:i + chunk], zeta[i:i + chunk], eta[i:i + chunk],
               X[i:i + chunk], Y[i:i + chunk])
        for i in range(0, n_samples, chunk)
    ])
    k = int(np.argmin(ratio))
    best = float(ratio[k])
    witness = {"site": int(site[k]), "zeta": zeta[k], "eta": eta[k], "X": X[k], "Y": Y[k], "ratio": best}
    for j in np.argsort(ratio)[:refine]:
        val, z, e, x, y = _polish(coefA, coefB, params, int(site[j]), zeta[j], eta[j], X[j], Y[j])
        if val < best:
            best = val
            witness = {"site": int(site[j]), "zeta": z, "eta": e, "X": x, "Y": y, "ratio": val}
    samples = None
    if keep_samples:
        samples = {"site": site, "zeta": zeta, "eta": eta, "ratio": ratio}
    return ScanResult(best, witness, n_samples, samples)


# --- mollification -----------------------------------------------------------


@dataclass
class MollifiedEval:
    """Value, gradient and Hessian of the mollified ``Q`` with error estimates.

    Error estimates are the absolute differences between the rule with the
    requested number of points per axis and the rule with half as many.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    err_value: np.ndarray
    err_grad: np.ndarray
    err_hess: np.ndarray


def _rotation_matrix(alpha):
    c, s = np.cos(alpha), np.sin(alpha)
    R = np.eye(4)
    R[:2, :2] = [[c, -s], [s, c]]
    return R


def _quadrature(points: int, rotation: float = 0.0):
    s, w = ball_rule_4d(points)
    if rotation:
        s = s @ _rotation_matrix(rotation).T
    phi, gphi, hphi = bump_derivatives(s)
    Z = phi @ w
    return s, phi * w / Z, gphi * w[:, None] / Z, hphi * w[:, None, None] / Z


def _omega(zeta, eta):
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    zeta, eta = np.broadcast_arrays(zeta, eta)
    return np.stack([zeta.real, zeta.imag, eta.real, eta.imag], axis=-1)


def _mollify_once(params, nu, points, om, rotation):
    s, w, wg, wh = _quadrature(points, rotation)
    pts = om[:, None, :] - nu * s[None, :, :]
    z = pts[..., 0] + 1j * pts[..., 1]
    e = pts[..., 2] + 1j * pts[..., 3]
    Qv, _, _, _ = bellman_derivatives(params, z.ravel(), e.ravel(), order=0)
    Qv = Qv.reshape(z.shape)
    value = Qv @ w
    # derivative weights integrate constants to zero exactly, not discretely
    Q0, _, _, _ = bellman_derivatives(params, om[:, 0] + 1j * om[:, 1], om[:, 2] + 1j * om[:, 3], order=0)
    Qc = Qv - Q0[:, None]
    grad = np.einsum("nm,mi->ni", Qc, wg) / nu
    hess = np.einsum("nm,mij->nij", Qc, wh) / nu**2
    return value, grad, hess


def mollify_q(params: BellmanParams, spec: MollifierSpec, zeta, eta, rotation: float = 0.0) -> MollifiedEval:
    """Convolution of ``Q`` with the radial bump of radius ``nu`` in ``R^4``.

    Derivatives are moved onto the mollifier, ``D(Q * phi) = Q * D phi``, so
    the Hessian is defined everywhere; ``Q(omega)`` is subtracted first,
    which leaves the exact integrals unchanged.  The quadrature is
    :func:`~pellipt.mollifier.ball_rule_4d` scaled to radius ``nu`` with
    weights renormalized so the discrete bump has unit mass.  ``rotation``
    rotates the nodes in the ``zeta`` plane.
    """
    om = _omega(zeta, eta)
    v, g, h = _mollify_once(params, spec.nu, spec.points, om, rotation)
    v2, g2, h2 = _mollify_once(params, spec.nu, spec.points // 2, om, rotation)
    return MollifiedEval(v, g, h, np.abs(v - v2), np.abs(g - g2), np.abs(h - h2))


def hess_mollified_generalized(coefA, siteA, coefB, siteB, params, spec, zeta, eta, X, Y,
                               mollified: MollifiedEval | None = None) -> np.ndarray:
    """Generalized Hessian of the mollified ``Q`` at ``omega`` (no singular set)."""
    zeta, eta, XY, n = _prep_directions(zeta, eta, X, Y)
    m = mollified if mollified is not None else mollify_q(params, spec, zeta, eta)
    A, b, c, V = _pair_arrays(coefA, siteA, coefB, siteB, n)
    return generalized_hessian(m.hess, m.grad, np.stack([zeta, eta], axis=1), XY, A, b, c, V)["total"]


@dataclass
class RemainderResult:
    """Both sides of the mollified-Hessian identity and the two remainders."""

    R_cg: np.ndarray
    R_VW: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    error_estimate: np.ndarray


def _rhs_once(coefA, siteA, coefB, siteB, params, nu, points, zeta, eta, XY):
    s, w, _, _ = _quadrature(points)
    n, m = zeta.size, s.shape[0]
    z_sh = nu * (s[:, 0] + 1j * s[:, 1])
    e_sh = nu * (s[:, 2] + 1j * s[:, 3])
    zz = (zeta[:, None] - z_sh[None, :]).ravel()
    ee = (eta[:, None] - e_sh[None, :]).ravel()
    _, g, h, _ = bellman_derivatives(params, zz, ee)
    A, b, c, V = _pair_arrays(coefA, siteA, coefB, siteB, n)
    rep = lambda arr: np.repeat(arr, m, axis=0)  # noqa: E731
    XYr = rep(XY)
    Ar, br, cr, Vr = rep(A), rep(b), rep(c), rep(V)
    zero_A, zero_v = np.zeros_like(Ar), np.zeros_like(br)
    conv = generalized_hessian(h, g, np.stack([zz, ee], axis=1), XYr, Ar, br, cr, Vr)["total"]
    shift = np.stack([np.tile(z_sh, n), np.tile(e_sh, n)], axis=1)
    r_cg = generalized_hessian(h, g, shift, XYr, zero_A, zero_v, cr, np.zeros_like(Vr))["bc"]
    r_vw = generalized_hessian(h, g, shift, XYr, zero_A, zero_v, zero_v, Vr)["V"]
    red = lambda arr: arr.reshape(n, m) @ w  # noqa: E731
    return red(conv), red(r_cg), red(r_vw)


def remainders(coefA: CoefficientTuple, siteA, coefB: CoefficientTuple, siteB, params: BellmanParams,
               spec: MollifierSpec, zeta, eta, X, Y) -> RemainderResult:
    """Remainders of the mollified generalized Hessian and the identity residual.

    ``R_cg = int <[D^2 Q(w - w') kron I] W(X,Y), W(zeta' c, eta' gamma)> phi_nu(w') dw'`` and
    ``R_VW = int <grad Q(w - w'), W(V zeta', W eta')> phi_nu(w') dw'``.  The
    left side of the identity is the generalized Hessian of
    :func:`mollify_q` (derivatives on the mollifier); the right side is the
    convolved generalized Hessian of ``Q`` plus both remainders (derivatives
    on ``Q``).  The error estimate adds the half-resolution differences of
    both sides.
    """
    zeta, eta, XY, n = _prep_directions(zeta, eta, X, Y)
    om = _omega(zeta, eta)
    A, b, c, V = _pair_arrays(coefA, siteA, coefB, siteB, n)
    ZE = np.stack([zeta, eta], axis=1)

    def lhs_at(points):
        _, g, h = _mollify_once(params, spec.nu, points, om, 0.0)
        return generalized_hessian(h, g, ZE, XY, A, b, c, V)["total"]

    lhs = lhs_at(spec.points)
    lhs2 = lhs_at(spec.points // 2)
    conv, r_cg, r_vw = _rhs_once(coefA, siteA, coefB, siteB, params, spec.nu, spec.points, zeta, eta, XY)
    conv2, r_cg2, r_vw2 = _rhs_once(coefA, siteA, coefB, siteB, params, spec.nu, spec.points // 2, zeta, eta, XY)
    rhs = conv + r_cg + r_vw
    rhs2 = conv2 + r_cg2 + r_vw2
    est = np.abs(lhs - lhs2) + np.abs(rhs - rhs2)
    return RemainderResult(r_cg, r_vw, lhs, rhs, lhs - rhs, est)
