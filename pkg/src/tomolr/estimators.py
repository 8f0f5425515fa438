"""Closed-form (weighted, constrained, regularized) least-squares state estimates.

All estimators solve::

    minimize (y - A theta)^T W (y - A theta) + gamma ||theta||^2
    [subject to theta^T t = 1]

for a diagonal weight ``W`` (identity when ``weights is None``) and the trace
vector ``t = Tr(B)``.  With ``C = (A^T W A + gamma I)^-1`` the constrained
solution is the unconstrained one corrected along ``C t``::

    theta_c = theta_u - C t (t^T theta_u - 1) / (t^T C t)

Estimates only need data.  Their MSE matrices need the true probabilities
and state and are computed separately by :func:`mse_matrix`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, RankDeficient, SingularSystem
from .measurement import EPS_CLAMP, DesignMatrix, MeasurementRecord, WeightMatrix, numerical_rank
from .measurement import weight_matrix_empirical, weight_matrix_true

KINDS = ("LS", "WLS", "AWLS", "CLS", "CWLS", "RWLS", "CRWLS", "CRLS")
CONSTRAINED = frozenset({"CLS", "CWLS", "CRWLS", "CRLS"})
REGULARIZED = frozenset({"RWLS", "CRWLS", "CRLS"})
UNWEIGHTED = frozenset({"LS", "CLS", "CRLS"})


@dataclass
class EstimateReport:
    kind: str
    theta_hat: np.ndarray
    gamma: float | None = None
    constraint_residual: float = float("nan")
    mse_matrix: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "theta_hat": self.theta_hat.tolist(),
            "gamma": self.gamma,
            "constraint_residual": self.constraint_residual,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _as_array(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


def _rank(a) -> int:
    return a.rank if isinstance(a, DesignMatrix) else numerical_rank(a)


def _weight_diag(weights, m: int) -> np.ndarray:
    if weights is None:
        return np.ones(m)
    w = weights.diag if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    if w.shape != (m,):
        raise DimensionMismatch(f"weight vector has shape {w.shape}, expected ({m},)")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be finite and strictly positive")
    return w


class RidgeSystem:
    """Factorization of ``A^T W A + gamma I`` supporting ``C @ v`` products.

    When ``A`` is wide (M < d**2) and gamma > 0 the M x M matrix
    ``gamma W^-1 + A A^T`` is factored instead, using
    ``C = (I - A^T (gamma W^-1 + A A^T)^-1 A) / gamma``.
    """

    def __init__(self, a, w: np.ndarray, gamma: float = 0.0):
        self.a = _as_array(a)
        self.w = w
        self.gamma = float(gamma)
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        m, d2 = self.a.shape
        self.dual = self.gamma > 0 and m < d2
        try:
            if self.dual:
                mat = self.a @ self.a.T + np.diag(self.gamma / w)
            else:
                mat = (self.a.T * w) @ self.a + self.gamma * np.eye(d2)
            self._factor = sla.cho_factor(mat, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("A^T W A + gamma I is not positive definite") from exc

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``C @ v`` for a vector or matrix ``v``."""
        if self.dual:
            return (v - self.a.T @ sla.cho_solve(self._factor, self.a @ v, check_finite=False)) / self.gamma
        return sla.cho_solve(self._factor, v, check_finite=False)

    def inverse(self) -> np.ndarray:
        c = self.solve(np.eye(self.a.shape[1]))
        return (c + c.T) / 2

    def normal_rhs(self, y: np.ndarray) -> np.ndarray:
        return self.a.T @ (self.w * y)


def constrained_inverse(c: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``F = C - C t t^T C / (t^T C t)``."""
    ct = c @ t
    f = c - np.outer(ct, ct) / (t @ ct)
    return (f + f.T) / 2


def _trace_correction(system: RidgeSystem, theta_u: np.ndarray, t: np.ndarray) -> np.ndarray:
    ct = system.solve(t)
    return theta_u - ct * (t @ theta_u - 1) / (t @ ct)


def _require_full_rank(a, kind: str) -> None:
    r = _rank(a)
    d2 = np.shape(a)[1]
    if r < d2:
        raise RankDeficient(f"{kind} needs rank(A) = {d2}, got {r}")


def _check(a, y) -> tuple[np.ndarray, np.ndarray]:
    arr, y = _as_array(a), _as_array(y)
    if y.shape != (arr.shape[0],):
        raise DimensionMismatch(f"y has shape {y.shape}, A has {arr.shape[0]} rows")
    return arr, y


def _report(kind, theta, t, gamma=None, **diag) -> EstimateReport:
    resid = abs(float(theta @ t) - 1.0) if t is not None else float("nan")
    return EstimateReport(kind, theta, gamma, resid, diagnostics=diag)


def _solve(kind, a, y, weights, t, gamma, constrained):
    arr, y = _check(a, y)
    if gamma == 0:
        _require_full_rank(a, kind)
    w = _weight_diag(weights, arr.shape[0])
    system = RidgeSystem(arr, w, gamma)
    theta = system.solve(system.normal_rhs(y))
    if constrained:
        theta = _trace_correction(system, theta, _as_array(t))
    clamp = weights.clamp_count if isinstance(weights, WeightMatrix) else 0
    return _report(kind, theta, None if t is None else _as_array(t), gamma if kind in REGULARIZED else None,
                   clamp_count=clamp)


def ls(a, y, t=None) -> EstimateReport:
    """Ordinary least squares ``(A^T A)^-1 A^T y``."""
    return _solve("LS", a, y, None, t, 0.0, False)


def wls(a, y, weights, t=None) -> EstimateReport:
    """Weighted least squares ``(A^T W A)^-1 A^T W y``."""
    return _solve("WLS", a, y, weights, t, 0.0, False)


def awls(a, record: MeasurementRecord, t=None, eps_clamp: float = EPS_CLAMP) -> EstimateReport:
    """WLS with the weight estimated from the observed frequencies."""
    w_hat = weight_matrix_empirical(record, eps_clamp)
    rep = _solve("AWLS", a, record.frequencies, w_hat, t, 0.0, False)
    return rep


def cls(a, y, t) -> EstimateReport:
    """Trace-constrained ordinary least squares."""
    return _solve("CLS", a, y, None, t, 0.0, True)


def cwls(a, y, weights, t) -> EstimateReport:
    """Trace-constrained weighted least squares."""
    return _solve("CWLS", a, y, weights, t, 0.0, True)


def rwls(a, y, weights, gamma: float, t=None) -> EstimateReport:
    """Ridge-regularized WLS ``(A^T W A + gamma I)^-1 A^T W y`` without the trace constraint."""
    try:
        return _solve("RWLS", a, y, weights, t, gamma, False)
    except RankDeficient as exc:
        raise SingularSystem(str(exc)) from exc


def crwls(a, y, weights, t, gamma: float) -> EstimateReport:
    """Trace-constrained ridge-regularized WLS.  Works for any rank of ``A`` when gamma > 0."""
    try:
        return _solve("CRWLS", a, y, weights, t, gamma, True)
    except RankDeficient as exc:
        raise SingularSystem(str(exc)) from exc


def crls(a, y, t, gamma: float) -> EstimateReport:
    """CRWLS with ``W = I``."""
    try:
        return _solve("CRLS", a, y, None, t, gamma, True)
    except RankDeficient as exc:
        raise SingularSystem(str(exc)) from exc


def estimate(kind: str, a, record: MeasurementRecord, t, gamma: float = 0.0,
             eps_clamp: float = EPS_CLAMP) -> EstimateReport:
    """Data-only dispatcher; weighted kinds use the empirical weight."""
    kind = kind.upper()
    y = record.frequencies
    w_hat = None if kind in UNWEIGHTED else weight_matrix_empirical(record, eps_clamp)
    if kind == "LS":
        return ls(a, y, t)
    if kind in ("WLS", "AWLS"):
        rep = wls(a, y, w_hat, t)
        rep.kind = kind
        return rep
    if kind == "CLS":
        return cls(a, y, t)
    if kind == "CWLS":
        return cwls(a, y, w_hat, t)
    if kind == "RWLS":
        return rwls(a, y, w_hat, gamma, t)
    if kind == "CRWLS":
        return crwls(a, y, w_hat, t, gamma)
    if kind == "CRLS":
        return crls(a, y, t, gamma)
    raise ValueError(f"unknown estimator kind {kind!r}; expected one of {KINDS}")


def affine_form(a, weights, t, gamma: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H, f)`` with ``crwls(...).theta_hat == H @ y + f`` for every ``y``.

    ``H = F A^T W`` and ``f = C t / (t^T C t)``.
    """
    arr = _as_array(a)
    t = _as_array(t)
    if gamma == 0:
        _require_full_rank(a, "CRWLS")
    w = _weight_diag(weights, arr.shape[0])
    system = RidgeSystem(arr, w, gamma)
    ct = system.solve(t)
    f = ct / (t @ ct)
    cat_w = system.solve(arr.T * w)
    h = cat_w - np.outer(f, t @ cat_w)
    return h, f


def _truth_weights(kind, p, n, weights):
    if weights is not None:
        return _weight_diag(weights, len(p)), False
    if kind in UNWEIGHTED:
        return np.ones(len(p)), False
    return weight_matrix_true(p, n).diag, True


def mse_matrix(kind: str, a, p, n: int, theta, t=None, gamma: float = 0.0, weights=None) -> np.ndarray:
    """Exact MSE matrix ``E (theta_hat - theta)(theta_hat - theta)^T`` under separate sampling.

    The noise covariance is ``P = diag(p - p^2) / n``.  Weighted kinds default
    to the true weight ``W = P^-1`` (also for AWLS, whose MSE is approximated
    by that of WLS); pass ``weights`` to analyse another fixed weight.  With the
    true weight the closed forms ``C``, ``F`` and ``F - gamma F (I - gamma
    theta theta^T) F`` are returned; otherwise the general sandwich
    ``gamma^2 G theta theta^T G + G A^T W P W A G`` with ``G = C`` or ``F``.
    """
    kind = kind.upper()
    arr = _as_array(a)
    p = _as_array(p)
    theta = _as_array(theta)
    gamma = float(gamma) if kind in REGULARIZED else 0.0
    if gamma == 0:
        _require_full_rank(a, kind)
    w, is_true = _truth_weights(kind, p, n, weights)
    c = RidgeSystem(arr, w, gamma).inverse()
    g = constrained_inverse(c, _as_array(t)) if kind in CONSTRAINED else c
    if is_true:
        if gamma == 0:
            return g
        out = g - gamma * g @ (np.eye(len(theta)) - gamma * np.outer(theta, theta)) @ g
        return (out + out.T) / 2
    noise = (p - p * p) / n
    aw = arr.T * w
    out = g @ (aw * noise) @ aw.T @ g
    if gamma:
        bias = g @ theta
        out = out + gamma**2 * np.outer(bias, bias)
    return (out + out.T) / 2
