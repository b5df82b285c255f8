"""Random coefficient generators shared by the test modules."""

import numpy as np

from pellipt.ellipticity import CoefficientTuple, mu_p, optimal_M
from pellipt.realform import conjugate_exponent


def cgauss(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_tuple(rng, d, n=4, noise=0.3, lower=0.3, vmin=0.5, vmax=2.0):
    """Perturbation of the identity with first-order terms dominated by sqrt(V)."""
    A = np.eye(d) + noise * cgauss(rng, (n, d, d))
    V = rng.uniform(vmin, vmax, n)
    b = lower * np.sqrt(V)[:, None] * cgauss(rng, (n, d))
    c = lower * np.sqrt(V)[:, None] * cgauss(rng, (n, d))
    return CoefficientTuple(A, b, c, V)


def hypothesis_pair(rng, p, d, n=4, max_tries=500):
    """Tuples with the first in S_p and S_2 and the second in S_q."""
    q = conjugate_exponent(p)
    for _ in range(max_tries):
        A = random_tuple(rng, d, n)
        B = random_tuple(rng, d, n)
        if mu_p(A, p) > 0 and mu_p(A, 2.0) > 0 and mu_p(B, q) > 0:
            return A, B
    raise RuntimeError("no admissible pair found")


def perturbed_field(rng, base, n_elements, amp=0.02):
    """Per-element small perturbation of a one-site tuple."""
    d = base.dim
    A = base.A + amp * cgauss(rng, (n_elements, d, d))
    V = base.V * rng.uniform(1 - amp, 1 + amp, n_elements)
    s = np.sqrt(V / base.V)[:, None]
    b = s * base.b * (1 + amp * rng.uniform(-1, 1, (n_elements, 1)))
    c = s * base.c * (1 + amp * rng.uniform(-1, 1, (n_elements, 1)))
    return CoefficientTuple(A, b, c, V)


def hypothesis_fields(rng, p, d, n_elements, max_tries=200):
    """Element-wise pair satisfying the flow hypotheses at every element."""
    q = conjugate_exponent(p)
    for _ in range(max_tries):
        a0, b0 = hypothesis_pair(rng, p, d, n=1)
        A = perturbed_field(rng, a0, n_elements)
        B = perturbed_field(rng, b0, n_elements)
        if (mu_p(A, p) > 0 and mu_p(A, 2.0) > 0 and mu_p(B, q) > 0
                and np.isfinite(optimal_M(A)) and np.isfinite(optimal_M(B))):
            return A, B
    raise RuntimeError("no admissible fields found")


def accretive_tuple(rng, d, n):
    """Element-wise tuple with mu_2 > 0 (accretive and sectorial form)."""
    for _ in range(200):
        base = random_tuple(rng, d, 1)
        co = perturbed_field(rng, base, n)
        if mu_p(co, 2.0) > 0:
            return co
    raise RuntimeError("no accretive tuple found")
