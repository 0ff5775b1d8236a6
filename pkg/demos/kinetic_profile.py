"""Solve the steady kinetic equation for the ask-side density and compare it
with the exponential closed form, on two grid steps.

    python demos/kinetic_profile.py
"""

import math

import numpy as np

from santafe_lob import ModelParams, TheoryProfile, solve_boltzmann_steady

p = ModelParams(lam=1e4, v=1.0, mu=99.0, delta=1e-6, cutoff=10**6)
eps = p.epsilon
closed = TheoryProfile.of(p)
R = 20 * math.sqrt(closed.D_theory / p.v)

coarse = solve_boltzmann_steady(p, eps / 10, R)
fine = solve_boltzmann_steady(p, eps / 20, R)
print(f"epsilon = {eps:g}, domain = {R:.4g}; iterations {coarse.iterations} (h=eps/10), {fine.iterations} (h=eps/20)\n")
print(f"{'r/eps':>6} {'numeric':>10} {'closed':>10} {'rel':>8}")
for k in (0, 1, 3, 5, 10, 20, 50, 100):
    j = 10 * k
    r = coarse.r[j]
    print(f"{k:6d} {coarse.values[j]:10.2f} {closed(r):10.2f} {coarse.values[j] / closed(r) - 1:8.2%}")

win = (coarse.r >= 3 * eps - 1e-12) & (coarse.r <= 10 * eps + 1e-12)
print(f"\nlargest grid-halving change on [3eps, 10eps]: "
      f"{np.max(np.abs(fine.values[::2][win] / coarse.values[win] - 1)):.2%}")
