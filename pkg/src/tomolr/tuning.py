"""Selection of the regularization gain gamma for CRWLS.

``risk_theta`` is the weighted prediction risk of the estimate and needs the
true state; ``unbiased_cost_theta`` is its data-only unbiased surrogate (up to
a gamma-independent constant).  Both are minimized over ``gamma >= 0`` by
:func:`minimize_gamma`.  :func:`gamma_star` gives the large-sample limit of
both minimizers when the design has full column rank.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import equiv
from .errors import DegenerateState, RankDeficient
from .estimators import RidgeSystem, _weight_diag, affine_form, constrained_inverse
from .measurement import WeightMatrix, numerical_rank


def _w(weights, m):
    return _weight_diag(weights, m)


def risk_theta(gamma: float, a, weights, theta, t, noise_var=None) -> float:
    """``E (A theta - A theta_hat)^T W (A theta - A theta_hat)`` for CRWLS at ``gamma``.

    With the default ``noise_var = 1 / w`` (weights are the true inverse noise
    variances) this is ``gamma^2 theta^T F A^T W A F theta + Tr(F A^T W A F A^T W A)``.
    Passing the actual noise variances covers other weights, e.g. ``W = I``.
    """
    a = np.asarray(a, dtype=float)
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    w = _w(weights, a.shape[0])
    system = RidgeSystem(a, w, gamma)
    f = constrained_inverse(system.inverse(), t)
    awa = (a.T * w) @ a
    ft = f @ theta
    bias = gamma**2 * ft @ awa @ ft
    if noise_var is None:
        fa = f @ awa
        return float(bias + np.sum(fa * fa.T))
    ah = a @ f @ (a.T * w)
    # Tr((AH)^T W (AH) P) with diagonal W, P
    return float(bias + np.sum(ah * ah * w[:, None] * np.asarray(noise_var)[None, :]))


def unbiased_cost_theta(gamma: float, a, y, weights, t, noise_var=None) -> float:
    """``(y - A theta_hat)^T W (y - A theta_hat) + 2 Tr(W A H P)`` with ``P = diag(noise_var)``.

    For the default ``noise_var = 1 / w`` the penalty reduces to ``2 Tr(A H)``.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    w = _w(weights, a.shape[0])
    h, f = affine_form(a, w, t, gamma)
    r = y - a @ (h @ y + f)
    ah_diag = np.einsum("ij,ji->i", a, h)
    penalty = ah_diag.sum() if noise_var is None else np.sum(w * ah_diag * np.asarray(noise_var))
    return float(r @ (w * r) + 2 * penalty)


@dataclass(frozen=True)
class GammaSearch:
    """Coarse log grid on ``{0} U [gamma_min, gamma_max]`` followed by bounded refinement.

    ``gamma_max`` defaults to ``cap_factor * n``.  Refinement stops once the
    bracket is narrower than ``rel_tol * (1 + gamma)``.
    """

    n_grid: int = 61
    gamma_min: float = 1e-6
    gamma_max: float | None = None
    cap_factor: float = 1e6
    rel_tol: float = 1e-4

    def upper(self, n: float | None) -> float:
        if self.gamma_max is not None:
            return float(self.gamma_max)
        if n is None:
            raise ValueError("either gamma_max or the sample size n is needed")
        return self.cap_factor * float(n)

    def grid(self, n: float | None) -> np.ndarray:
        return np.concatenate([[0.0], np.geomspace(self.gamma_min, self.upper(n), self.n_grid)])


@dataclass
class RiskCurve:
    gammas: np.ndarray
    values: np.ndarray
    minimizer: float
    min_value: float
    capped: bool = False
    curvature_at_min: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.capped

    def summary(self) -> dict:
        return {
            "minimizer": self.minimizer,
            "min_value": self.min_value,
            "capped": self.capped,
            "curvature_at_min": self.curvature_at_min,
            **self.extra,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gamma", "value"])
            for g, v in zip(self.gammas, self.values):
                writer.writerow([repr(float(g)), repr(float(v))])

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def minimize_gamma(cost, search: GammaSearch | None = None, n: float | None = None) -> RiskCurve:
    """Minimize ``cost(gamma)`` over ``[0, gamma_max]``.

    Grid ties go to the smaller gamma.  A minimizer on the upper grid end is
    reported as capped (no finite minimizer was found).
    """
    search = search or GammaSearch()
    grid = search.grid(n)
    values = np.array([cost(g) for g in grid])
    i = int(np.argmin(values))
    if i == len(grid) - 1:
        return RiskCurve(grid, values, float(grid[i]), float(values[i]), capped=True)
    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[i + 1]
    best_g, best_v = float(grid[i]), float(values[i])
    if hi - lo > search.rel_tol * (1 + best_g):
        res = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                              options={"xatol": 0.25 * search.rel_tol * (1 + lo)})
        if res.fun <= best_v:
            best_g, best_v = float(res.x), float(res.fun)
    h = max(search.rel_tol * (1 + best_g), 1e-3 * best_g)
    g0 = max(best_g, h)
    curvature = (cost(g0 + h) - 2 * cost(g0) + cost(g0 - h)) / h**2
    return RiskCurve(grid, values, best_g, best_v, capped=False, curvature_at_min=float(curvature))


def _sample_size(weights, n):
    if n is not None:
        return n
    if isinstance(weights, WeightMatrix):
        return weights.n
    return None


def tune_gamma_R(a, weights, theta, t, search: GammaSearch | None = None, n=None,
                 noise_var=None, form: str = "theta", q=None) -> RiskCurve:
    """Oracle gain: minimizer of the true risk (needs the true state)."""
    n = _sample_size(weights, n)
    if form == "alpha":
        if noise_var is not None:
            raise ValueError("the alpha form assumes W is the inverse noise covariance")
        red = equiv.reduce(a, np.zeros(np.shape(a)[0]), t, q)
        alpha = equiv.alpha_of(theta, red.q)
        w = _w(weights, np.shape(a)[0])
        return minimize_gamma(lambda g: equiv.risk_alpha(g, red.k, w, alpha), search, n)
    return minimize_gamma(lambda g: risk_theta(g, a, weights, theta, t, noise_var), search, n)


def tune_gamma_u(a, y, weights, t, search: GammaSearch | None = None, n=None,
                 noise_var=None, form: str = "theta", q=None) -> RiskCurve:
    """Data-driven gain: minimizer of the unbiased risk estimate."""
    n = _sample_size(weights, n)
    if form == "alpha":
        red = equiv.reduce(a, y, t, q)
        w = _w(weights, np.shape(a)[0])
        return minimize_gamma(lambda g: equiv.unbiased_cost_alpha(g, red, w, noise_var), search, n)
    return minimize_gamma(lambda g: unbiased_cost_theta(g, a, y, weights, t, noise_var), search, n)


@dataclass(frozen=True)
class AsymptoticMatrices:
    sigma: np.ndarray
    upsilon: np.ndarray

    def s(self, gamma: float, n: float) -> np.ndarray:
        return equiv.s_matrix(self.sigma, gamma, n)


def asymptotic_matrices(a, p, t, q=None) -> AsymptoticMatrices:
    red = equiv.reduce(a, np.zeros(np.shape(a)[0]), t, q)
    return AsymptoticMatrices(equiv.sigma_matrix(red.k, p), equiv.upsilon_matrix(a, p))


def gamma_star_forms(a, p, theta, t, q=None) -> tuple[float, float]:
    """``gamma*`` from the reduced (Sigma) form and from the full (Upsilon) form."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if numerical_rank(a) < a.shape[1]:
        raise RankDeficient("gamma* is only defined for rank(A) = d**2")
    red = equiv.reduce(a, np.zeros(a.shape[0]), t, q)
    alpha = equiv.alpha_of(theta, red.q)
    sigma_inv = np.linalg.inv(equiv.sigma_matrix(red.k, p))
    quad = alpha @ sigma_inv @ alpha
    if quad < 1e-14:
        raise DegenerateState("alpha^T Sigma^-1 alpha vanishes (maximally mixed state)")
    sigma_form = np.trace(sigma_inv) / quad

    ups_inv = np.linalg.inv(equiv.upsilon_matrix(a, p))
    ut = ups_inv @ t
    tut = t @ ut
    num = np.trace(ups_inv) - ut @ ut / tut
    den = theta @ ups_inv @ theta - (theta @ ut) ** 2 / tut
    return float(sigma_form), float(num / den)


def gamma_star(a, p, theta, t, q=None, rtol: float = 1e-8) -> float:
    """Asymptotically optimal gain ``Tr(Sigma^-1) / (alpha^T Sigma^-1 alpha)``."""
    s_form, u_form = gamma_star_forms(a, p, theta, t, q)
    if not math.isclose(s_form, u_form, rel_tol=rtol):
        raise ArithmeticError(f"Sigma and Upsilon forms disagree: {s_form!r} vs {u_form!r}")
    return s_form


def limit_cost(gamma, sigma, alpha) -> float:
    """``alpha^T Sigma^-1 alpha gamma^2 - 2 Tr(Sigma^-1) gamma``."""
    si = np.linalg.inv(sigma)
    return float(alpha @ si @ alpha * gamma**2 - 2 * np.trace(si) * gamma)


def asymptotic_rates(sigma, alpha) -> dict:
    """Trend diagnostics for the tuners (not certified constants).

    ``bias_R``: limit of ``n (gamma_R - gamma*)``; ``var_u``: asymptotic
    variance of ``sqrt(n) (gamma_u - gamma*)``.
    """
    si = np.linalg.inv(sigma)
    si2 = si @ si
    quad = alpha @ si @ alpha
    gs = np.trace(si) / quad
    return {
        "gamma_star": float(gs),
        "bias_R": float(3 * gs * (gs * alpha @ si2 @ alpha - np.trace(si2)) / quad),
        "var_u": float(4 * gs**2 * alpha @ si2 @ si @ alpha / quad**2),
    }
