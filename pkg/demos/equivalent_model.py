"""The trace constraint as a change of coordinates.

Rotating theta by a Householder Q whose first row is t/|t| pins the first
coordinate at 1/|t|; the remaining alpha solve an ordinary ridge problem.
This demo checks that the two views agree and prints the large-n optimal gain.

Run:  python3 demos/equivalent_model.py
"""
from __future__ import annotations

import numpy as np

from tomolr import equiv
from tomolr import estimators as est
from tomolr import tuning
from tomolr.experiments import scenario_werner36
from tomolr.linalg import decompose
from tomolr.measurement import design_matrix, probabilities, sample_separate, weight_matrix_true

rho, povm, basis = scenario_werner36(0.5)
a = np.asarray(design_matrix(povm, basis))
theta = decompose(rho, basis)
p = probabilities(a, theta)
t = basis.trace_vector

q = equiv.build_q(t)
print("Q t =", np.round(q @ t, 12)[:4], "...")
alpha = equiv.alpha_of(theta, q)
print(f"|alpha|^2 = {alpha @ alpha:.6f}, |theta|^2 - 1/|t|^2 = {theta @ theta - 1 / (t @ t):.6f}")

n = 5000
w = weight_matrix_true(p, n)
y = sample_separate(p, n, seed=3).frequencies
red = equiv.reduce(a, y, t, q)
for gamma in (0.0, 20.0, 200.0):
    lifted = equiv.lift(equiv.alpha_rwls(red, w, gamma), q, t)
    direct = est.crwls(a, y, w, t, gamma).theta_hat
    print(f"gamma={gamma:>6}: max |lift(alpha_hat) - theta_hat| = {np.abs(lifted - direct).max():.1e}")

# Finite-n risk minimizers drift toward the asymptotic gain.
gs = tuning.gamma_star(a, p, theta, t)
print(f"gamma* = {gs:.4f}")
for n in (10**3, 10**4, 10**5, 10**6):
    g = tuning.tune_gamma_R(a, weight_matrix_true(p, n), theta, t).minimizer
    print(f"n={n:>7}: gamma_R = {g:.4f}  (rel. error {abs(g - gs) / gs:.2e})")
