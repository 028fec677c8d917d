"""
Estimating transition probabilities in an illness-death model
=============================================================

Simulate one cohort, estimate ``P_12(0, t)`` with the Aalen-Johansen
estimator and compare it with the closed form of the simulation model.
"""

import numpy as np

from transprob import (IllnessDeathConfig, aalen_johansen, build_counting_processes,
                       influence_curves, nelson_aalen, simulate_illness_death, true_p12)

# 1000 subjects, all healthy at time 0, censored at Exp(0.25) times
cohort = simulate_illness_death(IllnessDeathConfig(alpha1=0.4, alpha2=0.25, n=1000), seed=1)
processes = build_counting_processes(cohort)
A = nelson_aalen(processes)
P = aalen_johansen(A)
print(f"{cohort.n} subjects, {len(A.grid)} distinct event times, tau = {A.grid.tau:.2f}")

# estimate against truth on a coarse grid
print(f"{'t':>5} {'P12 hat':>9} {'P12':>9}")
for t in np.arange(0.5, 4.01, 0.5):
    print(f"{t:5.1f} {P.at(t)[0, 1]:9.4f} {true_p12(0.4, 0.25, 0.0, t):9.4f}")

# pointwise standard errors from the influence curves
gamma = influence_curves(A, 1, 2)
k = np.searchsorted(gamma.times, 1.0, side="right") - 1
se = np.sqrt(np.mean(gamma.values[:, k] ** 2) / cohort.n)
print(f"P12(0, 1) = {P.at(1.0)[0, 1]:.4f} (se {se:.4f})")
