"""Where does a complex coefficient stop being p-elliptic?

Rotating the identity by e^{i theta} shrinks the window of admissible
exponents.  We print Delta_p on a grid, the exact window and the lower-order
constant mu_p once a drift is added.
"""

import numpy as np

from pellipt.ellipticity import CoefficientTuple, delta_p, exponent_window, mu_p

thetas = np.linspace(0.0, 1.4, 8)
ps = np.array([1.25, 1.5, 2.0, 3.0, 4.0, 8.0])

print("Delta_p(e^{i theta}) for rows theta, columns p")
print("theta  " + "".join(f"{p:>8.2f}" for p in ps))
for theta in thetas:
    A = np.exp(1j * theta) * np.eye(1)
    print(f"{theta:5.2f}  " + "".join(f"{delta_p(A, p):8.3f}" for p in ps))

# the window is symmetric under p -> p' and closes as theta -> pi/2;
# the exact ends are 2 / (1 +- cos theta)
for theta in (0.3, 0.8, 1.3):
    co = CoefficientTuple.constant(np.exp(1j * theta) * np.eye(1), V=1.0)
    lo, hi = exponent_window(co, 2.0)
    exact = (2 / (1 + np.cos(theta)), 2 / (1 - np.cos(theta)))
    print(f"theta = {theta}: window ({lo:.4f}, {hi:.4f}), exact ({exact[0]:.4f}, {exact[1]:.4f})")

# lower-order terms eat into the margin; mu_p measures what is left
for drift in (0.0, 0.5, 1.0, 1.5):
    co = CoefficientTuple.constant(np.exp(0.4j) * np.eye(2), b=[drift, 0], V=1.0)
    print(f"|b| = {drift}: mu_3 = {mu_p(co, 3.0):.4f}")
