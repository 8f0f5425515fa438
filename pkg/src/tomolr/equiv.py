"""Elimination of the trace constraint by an orthogonal change of coordinates.

With an orthogonal ``Q`` whose first row is ``t^T / ||t||`` the constrained
model ``y = A theta + e, theta^T t = 1`` becomes the unconstrained model
``z = K alpha + e`` where ``[d, K] = A Q^T``, ``Q theta = [1/||t||, alpha]``
and ``z = y - d / ||t||``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DegenerateProbability, DimensionMismatch, SingularSystem


def build_q(trace_vector) -> np.ndarray:
    """Householder-based orthogonal ``Q`` with first row ``t^T / ||t||``.

    The reflector uses the sign choice that avoids cancellation; for
    ``t[0] > 0`` the first row is then flipped so that ``Q t = ||t|| e_1``.
    An already aligned ``t`` gives ``Q = I``.
    """
    t = np.asarray(trace_vector, dtype=float)
    norm = np.linalg.norm(t)
    if norm == 0:
        raise ValueError("trace vector must be nonzero")
    u = t / norm
    e1 = np.zeros_like(u)
    e1[0] = 1.0
    sign = 1.0 if u[0] >= 0 else -1.0
    v = u + sign * e1
    q = np.eye(len(u)) - 2.0 * np.outer(v, v) / (v @ v)
    if sign > 0:
        q[0] = -q[0]
    return q


@dataclass(frozen=True)
class ReducedModel:
    q: np.ndarray
    d_col: np.ndarray
    k: np.ndarray
    z: np.ndarray
    beta1: float

    @property
    def d(self) -> np.ndarray:
        """``D = A Q^T = [d, K]``."""
        return np.column_stack([self.d_col, self.k])


def reduce(a, y, trace_vector, q: np.ndarray | None = None) -> ReducedModel:
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(trace_vector, dtype=float)
    if y.shape != (a.shape[0],) or t.shape != (a.shape[1],):
        raise DimensionMismatch("inconsistent shapes of A, y and trace vector")
    q = build_q(t) if q is None else np.asarray(q, dtype=float)
    dmat = a @ q.T
    beta1 = 1.0 / np.linalg.norm(t)
    return ReducedModel(q, dmat[:, 0].copy(), dmat[:, 1:].copy(), y - beta1 * dmat[:, 0], beta1)


def alpha_of(theta, q: np.ndarray) -> np.ndarray:
    """Reduced coordinates: the last d**2 - 1 entries of ``Q theta``."""
    return (q @ np.asarray(theta, dtype=float))[1:]


def lift(alpha, q: np.ndarray, trace_vector) -> np.ndarray:
    """``Q^T [1/||t||, alpha]``, which always satisfies the trace constraint."""
    beta = np.concatenate([[1.0 / np.linalg.norm(trace_vector)], np.asarray(alpha, dtype=float)])
    return q.T @ beta


def _weights(w, m):
    return np.ones(m) if w is None else np.asarray(getattr(w, "diag", w), dtype=float)


def _v_factor(k, w, gamma):
    mat = (k.T * w) @ k + gamma * np.eye(k.shape[1])
    try:
        return sla.cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("K^T W K + gamma I is not positive definite") from exc


def alpha_rwls(reduced: ReducedModel, w=None, gamma: float = 0.0) -> np.ndarray:
    """``(K^T W K + gamma I)^-1 K^T W z``."""
    k = reduced.k
    w = _weights(w, k.shape[0])
    return sla.cho_solve(_v_factor(k, w, gamma), k.T @ (w * reduced.z))


def u_matrix(k, w=None, gamma: float = 0.0) -> np.ndarray:
    """``U = V K^T W`` with ``V = (K^T W K + gamma I)^-1``."""
    w = _weights(w, k.shape[0])
    return sla.cho_solve(_v_factor(k, w, gamma), k.T * w)


def alpha_mse(k, w, alpha, gamma: float) -> np.ndarray:
    """``gamma^2 V alpha alpha^T V + V K^T W K V`` (valid when ``W`` is the inverse noise covariance)."""
    w = _weights(w, k.shape[0])
    kwk = (k.T * w) @ k
    v = np.linalg.inv(kwk + gamma * np.eye(k.shape[1]))
    va = v @ alpha
    out = gamma**2 * np.outer(va, va) + v @ kwk @ v
    return (out + out.T) / 2


def risk_alpha(gamma: float, k, w, alpha) -> float:
    """``gamma^2 a^T V K^T W K V a + Tr(V K^T W K V K^T W K)``."""
    w = _weights(w, k.shape[0])
    kwk = (k.T * w) @ k
    fac = _v_factor(k, w, gamma)
    vk = sla.cho_solve(fac, kwk)
    va = sla.cho_solve(fac, np.asarray(alpha, dtype=float))
    return float(gamma**2 * va @ kwk @ va + np.trace(vk @ vk))


def unbiased_cost_alpha(gamma: float, reduced: ReducedModel, w=None, noise_var=None) -> float:
    """``(z - K a)^T W (z - K a) + 2 Tr(W K U P)`` at ``a = alpha_rwls(gamma)``.

    ``noise_var`` defaults to ``1 / w`` so the penalty is ``2 Tr(K U)``.
    """
    k = reduced.k
    w = _weights(w, k.shape[0])
    u = u_matrix(k, w, gamma)
    r = reduced.z - k @ (u @ reduced.z)
    ku_diag = np.einsum("ij,ji->i", k, u)
    penalty = ku_diag.sum() if noise_var is None else np.sum(w * ku_diag * np.asarray(noise_var))
    return float(r @ (w * r) + 2 * penalty)


def _inv_noise_var(p):
    p = np.asarray(p, dtype=float)
    v = p - p * p
    if np.any(v <= 0):
        raise DegenerateProbability("asymptotic matrices need every p_m strictly inside (0, 1)")
    return 1.0 / v


def sigma_matrix(k, p) -> np.ndarray:
    """``Sigma = K^T diag(1 / (p - p^2)) K``, i.e. ``K^T W K / n`` for the true weight."""
    return (k.T * _inv_noise_var(p)) @ k


def upsilon_matrix(a, p) -> np.ndarray:
    """``Upsilon = A^T diag(1 / (p - p^2)) A``."""
    a = np.asarray(a, dtype=float)
    return (a.T * _inv_noise_var(p)) @ a


def s_matrix(sigma: np.ndarray, gamma: float, n: float) -> np.ndarray:
    """``S = (Sigma + gamma / n I)^-1``, factored afresh for every gamma."""
    fac = sla.cho_factor(sigma + (gamma / n) * np.eye(sigma.shape[0]), lower=True)
    return sla.cho_solve(fac, np.eye(sigma.shape[0]))
