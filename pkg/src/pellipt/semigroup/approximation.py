"""Coefficient approximations: mollification, cutoffs and potential truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ellipticity import CoefficientTuple, delta_p, mu_p, optimal_M
from ..mollifier import bump_derivatives, midpoint_nodes
from ..realform import jp_apply, p_star
from .assembly import CoefficientFields, DiscreteOperator, assemble
from .evolution import evolve

__all__ = [
    "SupportViolation",
    "mollification_stencil",
    "mollify_coefficients",
    "smoothstep_cutoff",
    "CutoffReport",
    "cutoff_lower_order",
    "truncate_potential",
    "truncation_threshold",
    "TruncationStudy",
    "truncation_convergence_experiment",
]


class SupportViolation(ValueError):
    """Support hypotheses on the lower-order terms fail."""


def _box(box):
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be a sequence of (low, high) pairs")
    return box


def _inside(box, x):
    return np.all((x >= box[:, 0]) & (x <= box[:, 1]), axis=-1)


def _stencil(dim: int, points: int):
    nodes, cell = midpoint_nodes(dim, points)
    phi, _, _ = bump_derivatives(nodes)
    keep = phi > 0
    w = phi[keep] * cell
    return nodes[keep], w / w.sum()


def mollification_stencil(sites, eps: float, points: int = 24):
    """Points ``x - eps s`` visited by the convolution and their weights."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    s, w = _stencil(sites.shape[1], points)
    return sites[:, None, :] - eps * s[None], w


def _support_checks(fields: CoefficientFields, box, eps, probe):
    axes = [np.linspace(lo, hi, probe) for lo, hi in box]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    co = fields.sample(grid)
    suppV = co.V > 0
    lower = (np.linalg.norm(co.b, axis=1) > 0) | (np.linalg.norm(co.c, axis=1) > 0)
    if np.any(lower & ~suppV):
        raise SupportViolation("supp b and supp c must lie inside supp V")
    if not np.any(suppV):
        return np.inf
    pts = grid[suppV]
    dist = np.minimum(pts - box[:, 0], box[:, 1] - pts).min()
    spacing = max((hi - lo) / (probe - 1) for lo, hi in box)
    margin = dist - spacing
    if not eps < margin:
        raise SupportViolation(f"eps={eps} must be below the distance {margin:.4g} from supp V to the boundary")
    return margin


def mollify_coefficients(fields: CoefficientFields, sites, eps: float, p: float, box,
                         points: int = 24, probe: int = 201) -> CoefficientTuple:
    """Convolve the coefficients with the bump of radius ``eps``.

    Outside the box ``A`` is extended by ``(p*/p) I`` and the lower-order
    terms by zero.  The convolution is a normalized tensor midpoint rule
    over the bump support with ``points`` nodes per axis.

    Parameters
    ----------
    fields : CoefficientFields
    sites : array_like, shape (n, dim)
        Where the mollified tuple is sampled.
    box : sequence of (low, high)
        The domain.
    probe : int
        Grid points per axis for the support checks.

    Raises
    ------
    SupportViolation
        If ``b`` or ``c`` is nonzero outside ``supp V``, or ``eps`` is not
        smaller than the distance from ``supp V`` to the boundary.
    """
    box = _box(box)
    if not 0 < eps:
        raise ValueError("eps must be positive")
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    d = box.shape[0]
    if sites.shape[1] != d:
        raise ValueError("sites do not match the box dimension")
    _support_checks(fields, box, eps, probe)
    Y, w = mollification_stencil(sites, eps, points)
    n, m, _ = Y.shape
    flat = Y.reshape(-1, d)
    inside = _inside(box, flat)
    A = np.broadcast_to((p_star(p) / p) * np.eye(d, dtype=complex), (flat.shape[0], d, d)).copy()
    b = np.zeros((flat.shape[0], d), dtype=complex)
    c = np.zeros_like(b)
    V = np.zeros(flat.shape[0])
    if np.any(inside):
        co = fields.sample(flat[inside])
        A[inside], b[inside], c[inside], V[inside] = co.A, co.b, co.c, co.V
    A = np.einsum("m,nmij->nij", w, A.reshape(n, m, d, d))
    b = np.einsum("m,nmi->ni", w, b.reshape(n, m, d))
    c = np.einsum("m,nmi->ni", w, c.reshape(n, m, d))
    V = np.maximum(np.einsum("m,nm->n", w, V.reshape(n, m)), 0.0)
    return CoefficientTuple(A, b, c, V, sites=sites)


def smoothstep_cutoff(center, halfwidth, inner: float, outer: float):
    """Cutoff equal to 1 on the box of relative radius ``inner`` and 0
    beyond ``outer``, with the cubic smoothstep in between (sup-norm radius)."""
    center = np.asarray(center, dtype=float)
    halfwidth = np.asarray(halfwidth, dtype=float)
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")

    def psi(x):
        r = np.max(np.abs(np.atleast_2d(x) - center) / halfwidth, axis=-1)
        t = np.clip((outer - r) / (outer - inner), 0.0, 1.0)
        return t * t * (3.0 - 2.0 * t)

    return psi


@dataclass(frozen=True)
class CutoffReport:
    mu_p_in: float
    mu_p_out: float
    mu2_in: float
    mu2_out: float
    M_in: float
    M_out: float
    support_nested: bool
    mu_monotone: bool
    class_preserved: bool


def cutoff_lower_order(coeffs: CoefficientTuple, n: int, p: float, cutoff=None):
    """Return ``(A, psi_n b, psi_n c, psi_n V)`` and a report on preserved constants.

    The default exhaustion is by concentric boxes around the bounding box of
    the sites, with ``psi_n = 1`` on relative radius ``1 - 2^{-n}`` and 0
    beyond ``1 - 2^{-(n+1)}``.

    Parameters
    ----------
    coeffs : CoefficientTuple with ``sites``
    cutoff : callable, optional
        ``psi(x)`` with values in ``[0, 1]``.
    """
    if coeffs.sites is None and cutoff is None:
        raise ValueError("sites are needed for the default cutoff")
    if cutoff is None:
        lo, hi = coeffs.sites.min(axis=0), coeffs.sites.max(axis=0)
        half = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
        cutoff = smoothstep_cutoff(0.5 * (lo + hi), half, 1.0 - 2.0**-n, 1.0 - 2.0 ** -(n + 1))
    psi = np.clip(np.asarray(cutoff(coeffs.sites), dtype=float), 0.0, 1.0)
    out = coeffs.replace(b=psi[:, None] * coeffs.b, c=psi[:, None] * coeffs.c, V=psi * coeffs.V)
    mi, mo = mu_p(coeffs, p), mu_p(out, p)
    m2i, m2o = mu_p(coeffs, 2.0), mu_p(out, 2.0)
    Mi, Mo = optimal_M(coeffs), optimal_M(out)
    suppV = out.V > 0
    lower = (np.linalg.norm(out.b, axis=1) > 0) | (np.linalg.norm(out.c, axis=1) > 0)
    report = CutoffReport(mi, mo, m2i, m2o, Mi, Mo,
                          support_nested=bool(not np.any(lower & ~suppV)),
                          mu_monotone=bool(mo >= mi - 1e-9),
                          class_preserved=bool(m2o >= m2i - 1e-9 and Mo <= Mi + 1e-9))
    return out, report


def truncate_potential(coeffs: CoefficientTuple, m: float) -> CoefficientTuple:
    """Replace ``V`` by ``min(V, m)``."""
    if not m > 0:
        raise ValueError("m must be positive")
    return coeffs.replace(V=np.minimum(coeffs.V, m))


def truncation_threshold(coeffs: CoefficientTuple, eps: float, r: float = 2.0) -> float:
    """Level ``m`` beyond which truncation costs at most ``eps`` in ``mu_r``.

    Uses ``m = max|b + J_r c|^2 / (4 ((r/2) Delta_r - mu_r + eps)(1 - mu_r + eps))``,
    clipped at 0.
    """
    mu = mu_p(coeffs, r)
    if not np.isfinite(mu):
        raise ValueError(f"Gamma_{r} >= 0 fails")
    w2 = np.max(np.sum(np.abs(coeffs.b + jp_apply(r, coeffs.c)) ** 2, axis=-1))
    den = 4.0 * (0.5 * r * delta_p(coeffs.A, r) - mu + eps) * (1.0 - mu + eps)
    if not den > 0:
        raise ValueError("threshold undefined: non-positive denominator")
    return float(max(w2 / den, 0.0))


@dataclass
class TruncationStudy:
    levels: np.ndarray
    grad_errors: np.ndarray
    potential_errors: np.ndarray
    decreasing: bool


def _gradient_and_potential(op: DiscreteOperator, u, V):
    g = op.element_gradients(u)
    ub = op.element_means(u)
    return g, np.sqrt(V) * ub


def truncation_convergence_experiment(coeffs, domain, bc, f, t: float, dt: float, m0: float,
                                      levels: int = 4, scheme: str = "implicit-euler") -> TruncationStudy:
    """Errors of the truncated-potential semigroup at time ``t`` for
    ``m = m0, 2 m0, ...``.

    Reports ``||grad(u_m - u)||`` and ``||V_m^{1/2} u_m - V^{1/2} u||`` in
    elementwise ``L^2``, with barycenter values for the potential part.
    """
    ref_op = assemble(coeffs, domain, bc)
    co = ref_op.coeffs
    ref = evolve(ref_op, f, t, dt, scheme=scheme).states[-1]
    g_ref, v_ref = _gradient_and_potential(ref_op, ref, co.V)
    meas = domain.measures
    ms = m0 * 2.0 ** np.arange(levels)
    ge, pe = [], []
    for m in ms:
        tr = truncate_potential(co, m)
        op = assemble(tr, domain, bc)
        u = evolve(op, f, t, dt, scheme=scheme).states[-1]
        g, v = _gradient_and_potential(op, u, tr.V)
        ge.append(np.sqrt(np.sum(meas * np.sum(np.abs(g - g_ref) ** 2, axis=-1))))
        pe.append(np.sqrt(np.sum(meas * np.abs(v - v_ref) ** 2)))
    ge, pe = np.array(ge), np.array(pe)
    dec = bool(np.all(np.diff(ge) < 0) and np.all(np.diff(pe) < 0))
    return TruncationStudy(ms, ge, pe, dec)
