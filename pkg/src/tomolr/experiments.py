"""Canned tomography scenarios and a seeded Monte-Carlo sweep driver.

A sweep runs, for every state parameter and sample size, ``rounds``
independent measurement records and applies every requested estimator to the
same record.  The experimental MSE is ``mean ||theta_hat - theta||^2`` and the
theoretical one is the trace of the analytic MSE matrix evaluated with the true
weight.  Results are deterministic given the root seed: the record of round
``r`` in cell ``(i, j)`` is drawn from ``SeedSequence(seed, spawn_key=(i, j, r))``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from . import tuning
from .errors import TomographyError
from .linalg import HermitianBasis, decompose, make_pauli_basis, validate_density_matrix
from .measurement import (COLLECTIVE, EPS_CLAMP, SEPARATE, Povm, design_matrix, pauli_projector_povm,
                          probabilities, sample_collective, sample_separate, weight_matrix_empirical,
                          weight_matrix_true)

logger = logging.getLogger(__name__)

CSV_HEADER = ["state_param", "n", "estimator", "gamma", "mse_exp", "mse_theory", "gamma_hat_median", "clamp_total"]

SCENARIOS = ("Werner36", "WernerCRLS", "SixQubitUnder")
POLICIES = ("Fixed", "TuneR", "TuneU", "Thm5Midpoint")
_ALIASES = {
    "werner36": "Werner36", "werner_crls": "WernerCRLS", "six_qubit": "SixQubitUnder",
    "fixed": "Fixed", "tune_r": "TuneR", "tune_u": "TuneU", "thm5_midpoint": "Thm5Midpoint",
}
_GRID = [round(0.1 * i, 1) for i in range(11)]
_DEFAULTS = {
    "Werner36": {"n_list": [110, 1100, 11000], "estimators": ["LS", "AWLS", "CWLS", "CRWLS"],
                 "gamma_policy": {"kind": "Thm5Midpoint"}},
    "WernerCRLS": {"n_list": [110, 1100, 11000], "estimators": ["CRLS"], "gamma_policy": {"kind": "TuneU"}},
    "SixQubitUnder": {"n_list": [1100, 11000, 110000], "estimators": ["CRWLS"],
                      "gamma_policy": {"kind": "Fixed", "values": [1, 10, 100, 1000]}},
}

SIX_QUBIT_INDICES = (42, 8, 59, 30)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- scenarios

def werner_state(q: float) -> np.ndarray:
    """``q |Psi-><Psi-| + (1 - q) I / 4`` with ``|Psi-> = (|01> - |10>) / sqrt 2``."""
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return q * np.outer(psi, psi).astype(complex) + (1 - q) / 4 * np.eye(4)


def werner36_povm() -> Povm:
    """36 product effects ``|phi_j><phi_j| (x) |phi_k><phi_k|``, outcome ``m = 6 j + k``."""
    phis = [
        np.array([1, 1]) / np.sqrt(6),
        np.array([1, -1]) / np.sqrt(6),
        np.array([1, 1j]) / np.sqrt(6),
        np.array([1, -1j]) / np.sqrt(6),
        np.array([1, 0]) / np.sqrt(3),
        np.array([0, 1]) / np.sqrt(3),
    ]
    single = [np.outer(v, v.conj()) for v in phis]
    effects = np.array([np.kron(a, b) for a in single for b in single])
    return Povm(effects, complete=True)


def scenario_werner36(q: float) -> tuple[np.ndarray, Povm, HermitianBasis]:
    return validate_density_matrix(werner_state(q)), werner36_povm(), make_pauli_basis(2)


def rotation_u() -> np.ndarray:
    return np.array([[np.sqrt(3) / 2, 0.5], [-0.5j, np.sqrt(3) / 2 * 1j]])


def low_rank_state(p: float, num_qubits: int = 6, indices=SIX_QUBIT_INDICES) -> np.ndarray:
    """Equal mixture of three orthogonal pure states rotated by ``u^{(x) q}``.

    ``indices`` are 1-based positions ``(i1, i2, i3, i4)``; for fewer than six
    qubits they are folded into range by ``(i - 1) mod d``.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    d = 2**num_qubits
    idx = [(i - 1) % d for i in indices]
    if len(set(idx)) != 4:
        raise ValueError(f"indices {indices} collide for d = {d}")
    psi1 = np.zeros(d)
    psi1[idx[0]] = np.sqrt(p)
    psi1[idx[1]] = np.sqrt(1 - p)
    mix = np.outer(psi1, psi1).astype(complex)
    mix[idx[2], idx[2]] += 1
    mix[idx[3], idx[3]] += 1
    mix /= 3
    u = rotation_u()
    un = np.ones((1, 1), dtype=complex)
    for _ in range(num_qubits):
        un = np.kron(un, u)
    return un.conj().T @ mix @ un


def scenario_six_qubit(p: float, num_projectors: int = 200, seed=0, num_qubits: int = 6):
    rho = validate_density_matrix(low_rank_state(p, num_qubits))
    return rho, pauli_projector_povm(num_qubits, num_projectors, seed), make_pauli_basis(num_qubits)


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    scenario: str = "Werner36"
    state_params: list = field(default_factory=lambda: list(_GRID))
    n_list: list | None = None
    rounds: int = 1000
    estimators: list | None = None
    gamma_policy: dict | None = None
    seed: int = 0
    eps_clamp: float = EPS_CLAMP
    output_dir: str = "results"
    mode: str | None = None
    weights: str = "empirical"
    num_qubits: int = 6
    num_projectors: int = 200
    povm_seed: int = 0
    threads: int | None = None
    full: bool = False

    def __post_init__(self):
        self.scenario = _ALIASES.get(self.scenario, self.scenario)
        defaults = _DEFAULTS.get(self.scenario, {})
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, json.loads(json.dumps(value)))
        if isinstance(self.gamma_policy, str):
            self.gamma_policy = {"kind": self.gamma_policy}
        if isinstance(self.gamma_policy, dict):
            self.gamma_policy = dict(self.gamma_policy)
            kind = self.gamma_policy.get("kind")
            self.gamma_policy["kind"] = _ALIASES.get(kind, kind)
        self.estimators = [str(k).upper() for k in self.estimators or []]
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.state_params or not self.n_list or not self.estimators:
            raise ConfigError("state_params, n_list and estimators must be nonempty")
        bad = [k for k in self.estimators if k not in est.KINDS]
        if bad:
            raise ConfigError(f"unknown estimator kinds {bad}")
        if not isinstance(self.gamma_policy, dict):
            raise ConfigError("gamma_policy must be an object with a 'kind' field")
        kind = self.gamma_policy.get("kind")
        if kind not in POLICIES:
            raise ConfigError(f"unknown gamma policy {kind!r}; expected one of {POLICIES}")
        if kind == "Fixed" and not self.gamma_policy.get("values"):
            raise ConfigError("fixed gamma policy needs a nonempty 'values' list")
        if self.mode not in (None, SEPARATE, COLLECTIVE):
            raise ConfigError(f"unknown sampling mode {self.mode!r}")
        if any(not 0 <= float(q) <= 1 for q in self.state_params):
            raise ConfigError("state parameters must lie in [0, 1]")
        if any(int(n) < 1 for n in self.n_list):
            raise ConfigError("sample sizes must be >= 1")
        if self.scenario == "SixQubitUnder" and self.mode == COLLECTIVE:
            raise ConfigError("the Pauli projector POVM is incomplete; collective sampling is impossible")
        if self.weights not in ("empirical", "true"):
            raise ConfigError("weights must be 'empirical' or 'true'")

    @property
    def sampling_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return SEPARATE if self.scenario == "SixQubitUnder" else COLLECTIVE

    def gamma_cells(self, kind: str) -> list:
        if kind not in est.REGULARIZED:
            return [None]
        pol = self.gamma_policy["kind"]
        if pol == "Fixed":
            return [float(g) for g in self.gamma_policy["values"]]
        return [pol]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)


# ------------------------------------------------------------------ results

@dataclass
class ExperimentResult:
    config: dict
    rows: list = field(default_factory=list)
    wall_time: float = 0.0

    def row(self, state_param, n, estimator, gamma):
        for r in self.rows:
            if (r["state_param"], r["n"], r["estimator"], r["gamma"]) == (state_param, n, estimator, gamma):
                return r
        raise KeyError((state_param, n, estimator, gamma))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(r[k]) for k in CSV_HEADER])
        return buf.getvalue()

    def to_dict(self, full: bool = False) -> dict:
        rows = self.rows if full else [{k: v for k, v in r.items() if k != "rounds"} for r in self.rows]
        return {"config": self.config, "rows": rows}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def derive_seed(root: int, *keys: int) -> int:
    """Counter-mode seed for one round, independent of execution order."""
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def _threads(config: ExperimentConfig) -> int:
    if config.threads:
        return int(config.threads)
    return int(os.environ.get("TOMOLR_THREADS", "1") or 1)


@dataclass
class _Truth:
    theta: np.ndarray
    p: np.ndarray
    a: object
    t: np.ndarray
    povm: Povm
    n: int

    @property
    def alpha_sq(self) -> float:
        return float(self.theta @ self.theta - 1 / (self.t @ self.t))


def _scenario(config: ExperimentConfig, param: float):
    if config.scenario == "SixQubitUnder":
        return scenario_six_qubit(param, config.num_projectors, config.povm_seed, config.num_qubits)
    return scenario_werner36(param)


def _fixed_gamma(policy: str, truth: _Truth, kind: str, search: tuning.GammaSearch):
    """Data-independent gamma for a cell, or None when it is tuned per round."""
    if isinstance(policy, float):
        return policy, {}
    if policy == "Thm5Midpoint":
        if truth.alpha_sq <= 1e-14:
            return search.upper(truth.n), {"capped": True}
        return 1.0 / truth.alpha_sq, {}
    if policy == "TuneR":
        w_true = weight_matrix_true(truth.p, truth.n)
        if kind == "CRLS":
            curve = tuning.tune_gamma_R(truth.a, None, truth.theta, truth.t, search, truth.n,
                                        noise_var=w_true.noise_var)
        else:
            curve = tuning.tune_gamma_R(truth.a, w_true, truth.theta, truth.t, search, truth.n)
        return curve.minimizer, {"capped": curve.capped}
    return None, {}


def _estimate_round(kind, gamma_label, gamma, truth: _Truth, record, config, search):
    """Return (theta_hat, gamma_used, clamp_count) for one record."""
    y = record.frequencies
    t = truth.t
    if kind in est.UNWEIGHTED:
        weights = None
    elif config.weights == "true":
        weights = weight_matrix_true(truth.p, truth.n)
    else:
        weights = weight_matrix_empirical(record, config.eps_clamp)
    clamp = getattr(weights, "clamp_count", 0)
    if gamma is None and gamma_label == "TuneU":
        if kind == "CRLS":
            f = np.clip(y, config.eps_clamp, 1 - config.eps_clamp)
            curve = tuning.tune_gamma_u(truth.a, y, None, t, search, truth.n, noise_var=(f - f * f) / record.n)
        else:
            curve = tuning.tune_gamma_u(truth.a, y, weights, t, search, truth.n)
        gamma = curve.minimizer
    g = 0.0 if gamma is None else gamma
    if kind == "LS":
        rep = est.ls(truth.a, y, t)
    elif kind in ("WLS", "AWLS"):
        rep = est.wls(truth.a, y, weights, t)
    elif kind == "CLS":
        rep = est.cls(truth.a, y, t)
    elif kind == "CWLS":
        rep = est.cwls(truth.a, y, weights, t)
    elif kind == "RWLS":
        rep = est.rwls(truth.a, y, weights, g, t)
    elif kind == "CRWLS":
        rep = est.crwls(truth.a, y, weights, t, g)
    else:
        rep = est.crls(truth.a, y, t, g)
    return rep.theta_hat, gamma, clamp


def _theory(kind, gamma, truth: _Truth):
    if gamma is None and kind in est.REGULARIZED:
        return float("nan")
    try:
        m = est.mse_matrix(kind, truth.a, truth.p, truth.n, truth.theta, truth.t, gamma or 0.0)
    except (TomographyError, np.linalg.LinAlgError):
        return float("nan")
    return float(np.trace(m))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the full sweep; per-cell estimator failures are recorded, not raised."""
    start = time.perf_counter()
    result = ExperimentResult(config.to_dict())
    search = tuning.GammaSearch()
    mode = config.sampling_mode
    sampler = sample_collective if mode == COLLECTIVE else sample_separate
    pool = ThreadPoolExecutor(max_workers=_threads(config))
    try:
        for i, param in enumerate(config.state_params):
            rho, povm, basis = _scenario(config, param)
            a = design_matrix(povm, basis)
            theta = decompose(rho, basis)
            p = probabilities(a, theta)
            for j, n in enumerate(config.n_list):
                truth = _Truth(theta, p, a, basis.trace_vector, povm, int(n))
                seeds = [derive_seed(config.seed, i, j, r) for r in range(config.rounds)]
                records = list(pool.map(lambda s: sampler(p, int(n), s), seeds))
                for kind in config.estimators:
                    for label in config.gamma_cells(kind):
                        result.rows.append(
                            _run_cell(kind, label, truth, records, seeds, config, search, pool, param))
    finally:
        pool.shutdown()
    result.wall_time = time.perf_counter() - start
    return result


def _run_cell(kind, label, truth, records, seeds, config, search, pool, param) -> dict:
    row = {"state_param": float(param), "n": int(truth.n), "estimator": kind,
           "gamma": label, "mse_exp": float("nan"), "mse_theory": float("nan"),
           "gamma_hat_median": None, "clamp_total": 0, "error": None}
    try:
        gamma, info = _fixed_gamma(label, truth, kind, search)
        row.update({f"gamma_{k}": v for k, v in info.items()})
        row["gamma_value"] = gamma

        def one(rec):
            return _estimate_round(kind, label, gamma, truth, rec, config, search)

        outs = list(pool.map(one, records))
    except (TomographyError, np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("cell %s/%s/%s/%s failed: %s", param, truth.n, kind, label, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    sq = np.array([float(np.sum((th - truth.theta) ** 2)) for th, _, _ in outs])
    row["mse_exp"] = float(np.mean(sq))
    row["clamp_total"] = int(sum(c for _, _, c in outs))
    if label == "TuneU":
        ghat = np.array([g for _, g, _ in outs], dtype=float)
        row["gamma_hat_median"] = float(np.median(ghat))
        row["mse_theory"] = float("nan")
    else:
        row["gamma_hat_median"] = None if gamma is None else float(gamma)
        row["mse_theory"] = _theory(kind, gamma, truth)
        ghat = None
    if config.full:
        row["rounds"] = {"seeds": [int(s) for s in seeds], "sq_errors": sq.tolist(),
                         "gamma_hats": None if ghat is None else ghat.tolist()}
    return row


# --------------------------------------------------------------------- I/O

def emit(result: ExperimentResult, output_dir=None, formats=("csv", "json"), full: bool = False,
         stem: str = "experiment") -> list:
    """Write ``<stem>.csv`` and/or ``<stem>.json`` and return the written paths."""
    out = Path(output_dir or result.config.get("output_dir", "results"))
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / f"{stem}.csv"
            path.write_text(result.to_csv())
            paths.append(path)
        if "json" in formats:
            path = out / f"{stem}.json"
            path.write_text(json.dumps(result.to_dict(full), indent=1, default=_json_default))
            paths.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return paths


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def load_result(path) -> ExperimentResult:
    with open(path) as fh:
        doc = json.load(fh)
    return ExperimentResult(doc["config"], doc["rows"])


def midpoint_gamma(theta, t) -> float:
    """Midpoint ``1 / (||theta||^2 - 1/||t||^2)`` of the guaranteed-improvement window."""
    gap = float(theta @ theta - 1 / (t @ t))
    return math.inf if gap <= 0 else 1.0 / gap
