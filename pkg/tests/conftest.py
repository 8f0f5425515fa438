"""Shared helpers: random regression problems and independent oracles."""
from __future__ import annotations

import numpy as np
import pytest

from tomolr.linalg import decompose, make_pauli_basis, random_density_matrix
from tomolr.measurement import Povm, design_matrix, probabilities


def random_povm(dim, num_outcomes, rng) -> Povm:
    """Complete POVM ``S^-1/2 G_m S^-1/2`` built from random PSD ``G_m``."""
    g = rng.standard_normal((num_outcomes, dim, dim)) + 1j * rng.standard_normal((num_outcomes, dim, dim))
    g = g @ g.conj().transpose(0, 2, 1)
    lam, vec = np.linalg.eigh(g.sum(axis=0))
    s = vec @ np.diag(lam**-0.5) @ vec.conj().T
    eff = s @ g @ s
    return Povm((eff + eff.conj().transpose(0, 2, 1)) / 2, complete=True)


class Problem:
    """A full-rank tomography instance with truth, noisy data and the true weight."""

    def __init__(self, num_qubits, rng, num_outcomes=None, n=5000, rank=None):
        d = 2**num_qubits
        self.basis = make_pauli_basis(num_qubits)
        self.povm = random_povm(d, num_outcomes or 2 * d * d, rng)
        self.a = np.asarray(design_matrix(self.povm, self.basis))
        self.rho = random_density_matrix(d, rank, rng)
        self.theta = decompose(self.rho, self.basis)
        self.p = probabilities(self.a, self.theta)
        self.n = n
        self.t = self.basis.trace_vector
        self.w = n / (self.p - self.p**2)
        self.y = self.p + rng.standard_normal(len(self.p)) * np.sqrt((self.p - self.p**2) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def kkt_solve(a, y, w, t, gamma, constrained=True):
    """Dense solve of ``min (y-A th)^T W (y-A th) + gamma |th|^2  s.t. t^T th = 1``.

    Stationarity ``2(A^T W A + gamma I) th - 2 A^T W y + lam t = 0`` plus the
    constraint, stacked into one square linear system.
    """
    d2 = a.shape[1]
    h = 2 * ((a.T * w) @ a + gamma * np.eye(d2))
    rhs = 2 * a.T @ (w * y)
    if not constrained:
        return np.linalg.solve(h, rhs)
    kkt = np.zeros((d2 + 1, d2 + 1))
    kkt[:d2, :d2] = h
    kkt[:d2, d2] = t
    kkt[d2, :d2] = t
    sol = np.linalg.solve(kkt, np.concatenate([rhs, [1.0]]))
    return sol[:d2]


def gram_schmidt_q(t, rng) -> np.ndarray:
    """Orthogonal ``Q`` with first row ``t/|t|`` completed from a random seed matrix."""
    d2 = len(t)
    seed = np.column_stack([t / np.linalg.norm(t), rng.standard_normal((d2, d2 - 1))])
    q, r = np.linalg.qr(seed)
    q = q * np.sign(np.diag(r))
    return q.T
