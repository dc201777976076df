"""Coercivity via the auxiliary curve theta(t) and the point criterion.

theta(t) is the smallest mean energy achievable by zero-boundary fields
whose mean q-th gradient moment reaches t.  A positive-slope linear
minorant of this convex curve is exactly mean coercivity; the same property
can be read off pointwise by testing whether F - c|.|^q stays quasiconvex.
"""

import numpy as np

from mixvar import (
    EnvelopeOptions,
    ThetaOptions,
    builtin,
    mean_coercivity_fit,
    strong_qc_test,
    theta_estimate,
)

a = (1, 2)
t_grid = [0.0, 1.0, 2.0, 3.0, 4.0]

# For F = |V|^2 with q = 2 the objective and the constraint coincide, so
# theta(t) = t and the fitted slope is 1.
F = builtin("pnorm", p=2, n=1, m=2)
curve = theta_estimate(F, 2.0, t_grid, a, ThetaOptions(seed=1, multistart=2))
fit = mean_coercivity_fit(curve)
print("F = |V|^2:")
for t, th, d in zip(curve.t_values, curve.theta_hat, curve.diagnostics):
    print(f"  theta({t:.0f}) = {th:.6f}   feasibility gap {d['feasibility_gap']:.1e}")
print(f"  minorant: {fit.c1:.4f} t + {fit.c2:+.4f}  -> coercive: {fit.coercive}")

# The zero integrand has a flat curve and no positive minorant slope.
Z = builtin("constant", c=0.0, n=1, m=2)
zfit = mean_coercivity_fit(theta_estimate(Z, 2.0, t_grid, a, ThetaOptions(seed=2, multistart=2)))
print(f"\nF = 0: c1 = {zfit.c1}, coercive: {zfit.coercive}")

# Point criterion: F - c|.|^q quasiconvex at V0 = 0 certifies coercivity.
opts = EnvelopeOptions(resolution=17, multistart=4, maxiter=200, seed=3)
for c in (0.5, 2.0):
    verdict = strong_qc_test(F, c, 2.0, np.zeros((1, 2)), a, opts)
    state = "holds" if verdict.holds else f"violated (energy {verdict.value:.3g})"
    print(f"point test with c = {c}: {state}")
