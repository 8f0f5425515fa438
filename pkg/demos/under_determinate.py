"""Regularization rescues an under-determinate design.

Random Pauli projectors on three qubits: 40 outcomes cannot pin down the 64
coordinates, so WLS/CWLS refuse to run while CRWLS still returns a trace-one
estimate whose error barely depends on gamma.

Run:  python3 demos/under_determinate.py          (3 qubits, seconds)
      python3 demos/under_determinate.py --six    (6 qubits, 200 projectors, slower)
"""
from __future__ import annotations

import sys

import numpy as np

from tomolr import estimators as est
from tomolr import experiments as exp
from tomolr.errors import RankDeficient
from tomolr.linalg import decompose, reconstruct
from tomolr.measurement import design_matrix, numerical_rank, probabilities, sample_separate, weight_matrix_empirical

six = "--six" in sys.argv
nq, m = (6, 200) if six else (3, 40)

rho, povm, basis = exp.scenario_six_qubit(0.5, num_projectors=m, num_qubits=nq)
a = np.asarray(design_matrix(povm, basis))
print(f"{nq} qubits, {m} projectors: A is {a.shape}, rank {numerical_rank(a)}")

rec = sample_separate(probabilities(a, decompose(rho, basis)), 1100, seed=0)
w = weight_matrix_empirical(rec)
try:
    est.cwls(a, rec.frequencies, w, basis.trace_vector)
except RankDeficient as exc:
    print("CWLS:", exc)

for g in (1.0, 10.0, 100.0):
    th = est.crwls(a, rec.frequencies, w, basis.trace_vector, g).theta_hat
    r = reconstruct(th, basis)
    print(f"CRWLS gamma={g:>5}: trace {np.trace(r).real:.12f}, "
          f"Frobenius error {np.linalg.norm(r - rho):.4f}")

# Same thing as a sweep over the mixing parameter p, via the experiment runner.
cfg = exp.ExperimentConfig(scenario="SixQubitUnder", num_qubits=nq, num_projectors=m,
                           state_params=[0.0, 0.5, 1.0], n_list=[1100], rounds=20 if six else 100,
                           estimators=["CRWLS"], gamma_policy={"kind": "Fixed", "values": [1, 10, 100]})
for r in exp.run_experiment(cfg).rows:
    print(f"p={r['state_param']} gamma={r['gamma']}: mse_exp {r['mse_exp']:.4e}")
