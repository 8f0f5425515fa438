"""Tuning the regularization gain of unweighted constrained ridge (CRLS).

Run:  python3 demos/crls_tuning.py
"""
from __future__ import annotations

import numpy as np

from tomolr import estimators as est
from tomolr import tuning
from tomolr.experiments import scenario_werner36
from tomolr.linalg import decompose
from tomolr.measurement import design_matrix, probabilities, sample_separate

rho, povm, basis = scenario_werner36(0.5)
a = np.asarray(design_matrix(povm, basis))
theta = decompose(rho, basis)
p = probabilities(a, theta)
t = basis.trace_vector
n = 1100

# With W = I the noise is still heteroscedastic, so the risk needs the real
# variances (p - p^2)/n. The oracle curve knows them; the data-driven one
# plugs in clamped frequencies instead.
noise = (p - p * p) / n
oracle = tuning.tune_gamma_R(a, None, theta, t, n=n, noise_var=noise)
print(f"oracle gamma_R = {oracle.minimizer:.4g}  (risk {oracle.min_value:.4g})")

rng = np.random.default_rng(7)
picks, errs = [], {"CLS": [], "CRLS(tuned)": [], "CRLS(oracle)": []}
for _ in range(200):
    y = sample_separate(p, n, rng).frequencies
    f = np.clip(y, 1e-6, 1 - 1e-6)
    g = tuning.tune_gamma_u(a, y, None, t, n=n, noise_var=(f - f * f) / n).minimizer
    picks.append(g)
    errs["CLS"].append(np.sum((est.cls(a, y, t).theta_hat - theta) ** 2))
    errs["CRLS(tuned)"].append(np.sum((est.crls(a, y, t, g).theta_hat - theta) ** 2))
    errs["CRLS(oracle)"].append(np.sum((est.crls(a, y, t, oracle.minimizer).theta_hat - theta) ** 2))

print(f"gamma_u over 200 rounds: median {np.median(picks):.4g}, IQR "
      f"[{np.percentile(picks, 25):.4g}, {np.percentile(picks, 75):.4g}]")
for k, v in errs.items():
    print(f"{k:>13}: mean squared error {np.mean(v):.4e}")
