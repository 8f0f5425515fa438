"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v`` output
because printing bypasses capture) and then asserts, so a failure still fails
the suite.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import Problem, gram_schmidt_q, kkt_solve
from tomolr import equiv
from tomolr import estimators as est
from tomolr import experiments as exp
from tomolr import tuning
from tomolr.linalg import decompose, random_density_matrix, reconstruct
from tomolr.measurement import (design_matrix, probabilities, sample_separate, weight_matrix_empirical,
                                weight_matrix_true)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str, elapsed: float, budget: float):
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail} [{elapsed:.1f}s / {budget:.0f}s]")
        return ok
    return emit


def test_criterion_1_kkt_oracle(report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(50):
        pr = Problem(1 + i % 2, rng)
        ones = np.ones(len(pr.y))
        gamma = float(rng.uniform(0.01, 100))
        for got, ref in (
            (est.cls(pr.a, pr.y, pr.t), kkt_solve(pr.a, pr.y, ones, pr.t, 0.0)),
            (est.cwls(pr.a, pr.y, pr.w, pr.t), kkt_solve(pr.a, pr.y, pr.w, pr.t, 0.0)),
            (est.crwls(pr.a, pr.y, pr.w, pr.t, gamma), kkt_solve(pr.a, pr.y, pr.w, pr.t, gamma)),
        ):
            worst = max(worst, np.linalg.norm(got.theta_hat - ref) / np.linalg.norm(ref))
    ok = report(1, worst < 1e-9, f"max relative error vs KKT = {worst:.2e}", time.perf_counter() - start, 10)
    assert ok


def test_criterion_2_mse_formulas(report):
    start = time.perf_counter()
    cfg = exp.ExperimentConfig(scenario="Werner36", state_params=[0.2, 0.5, 0.8], n_list=[11000], rounds=1000,
                               estimators=["LS", "WLS", "CWLS", "CRWLS"], weights="true", seed=2024)
    res = exp.run_experiment(cfg)
    rel = {(r["state_param"], r["estimator"]): abs(r["mse_exp"] / r["mse_theory"] - 1) for r in res.rows}
    worst_key = max(rel, key=rel.get)
    ok = len(rel) == 12 and max(rel.values()) < 0.10
    ok = report(2, ok, f"max |exp/theory - 1| = {rel[worst_key]:.3f} at q={worst_key[0]} {worst_key[1]}",
                time.perf_counter() - start, 120)
    assert ok


def test_criterion_3_improvement_window(report):
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    _, povm, basis = exp.scenario_werner36(0.5)
    a = np.asarray(design_matrix(povm, basis))
    t = basis.trace_vector
    worst_eig, min_tr, count = np.inf, np.inf, 0
    while count < 20:
        theta = decompose(random_density_matrix(4, None, rng), basis)
        alpha_sq = theta @ theta - 1 / (t @ t)
        if alpha_sq < 1e-8:
            continue
        count += 1
        p = probabilities(a, theta)
        f = est.mse_matrix("CWLS", a, p, 1000, theta, t)
        for gamma in np.linspace(0, 2 / alpha_sq, 12)[1:-1]:
            diff = f - est.mse_matrix("CRWLS", a, p, 1000, theta, t, gamma)
            worst_eig = min(worst_eig, np.linalg.eigvalsh(diff)[0])
            min_tr = min(min_tr, np.trace(diff))
    ok = worst_eig > -1e-10 and min_tr > 0
    ok = report(3, ok, f"min eigenvalue {worst_eig:.2e}, min trace {min_tr:.2e}", time.perf_counter() - start, 30)
    assert ok


def _fd(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def test_criterion_4_identities(report):
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = {}

    def note(name, val):
        worst[name] = max(worst.get(name, 0.0), float(val))

    for _ in range(10):
        pr = Problem(2, rng)
        gamma = float(rng.uniform(1, 100))
        c = np.linalg.inv((pr.a.T * pr.w) @ pr.a)
        f = est.constrained_inverse(c, pr.t)
        note("F sym", np.abs(f - f.T).max())
        note("F t", np.linalg.norm(f @ pr.t))
        note("F C^-1 F", np.linalg.norm(f @ np.linalg.solve(c, f) - f) / np.linalg.norm(f))

        q = equiv.build_q(pr.t)
        h, fv = est.affine_form(pr.a, pr.w, pr.t, gamma)
        note("QH first row", np.abs((q @ h)[0]).max())
        note("Qf first", abs((q @ fv)[0] - 1 / np.linalg.norm(pr.t)))
        note("Qt", np.abs(q @ pr.t - np.linalg.norm(pr.t) * np.eye(len(pr.t))[0]).max())

        red = equiv.reduce(pr.a, pr.y, pr.t)
        theta_hat = est.crwls(pr.a, pr.y, pr.w, pr.t, gamma).theta_hat
        alpha_hat = equiv.alpha_rwls(red, pr.w, gamma)
        note("m1", np.abs(pr.y - pr.a @ theta_hat - (red.z - red.k @ alpha_hat)).max())
        note("m2", abs(np.trace(pr.a @ h) - np.trace(red.k @ equiv.u_matrix(red.k, pr.w, gamma))))

        sigma = equiv.sigma_matrix(red.k, pr.p)
        g = rng.standard_normal(sigma.shape[0])
        s = equiv.s_matrix(sigma, gamma, pr.n)
        step = 1e-3 * gamma
        for fn, exact in (
            (lambda x: g @ equiv.s_matrix(sigma, x, pr.n) @ g, -g @ s @ s @ g / pr.n),
            (lambda x: np.trace(equiv.s_matrix(sigma, x, pr.n)), -np.trace(s @ s) / pr.n),
        ):
            note("B2", abs(_fd(fn, gamma, step) / exact - 1))

        si = np.linalg.inv(sigma)
        ui = np.linalg.inv(equiv.upsilon_matrix(pr.a, pr.p))
        t = pr.t
        alpha = equiv.alpha_of(pr.theta, red.q)
        tr_u = np.trace(ui) - t @ ui @ ui @ t / (t @ ui @ t)
        quad_u = pr.theta @ ui @ pr.theta - (pr.theta @ ui @ t) ** 2 / (t @ ui @ t)
        note("B3", max(abs(np.trace(si) / tr_u - 1), abs(alpha @ si @ alpha / quad_u - 1)))

    limits = {"F sym": 1e-12, "F t": 1e-10, "F C^-1 F": 1e-9, "QH first row": 1e-10, "Qf first": 1e-12,
              "Qt": 1e-12, "m1": 1e-10, "m2": 1e-10, "B2": 1e-6, "B3": 1e-8}
    bad = [k for k in limits if worst[k] >= limits[k]]
    detail = "all identities within tolerance" if not bad else f"violations: {bad}"
    ok = report(4, not bad, detail, time.perf_counter() - start, 30)
    assert ok, {k: worst[k] for k in bad}


def test_criterion_5_equivalence(report):
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    lift_err, tune_err = 0.0, 0.0
    for _ in range(20):
        pr = Problem(2, rng, n=int(rng.integers(500, 20000)))
        gamma = float(rng.uniform(0, 200))
        ref = est.crwls(pr.a, pr.y, pr.w, pr.t, gamma).theta_hat
        u_theta = tuning.tune_gamma_u(pr.a, pr.y, pr.w, pr.t, n=pr.n).minimizer
        for q in (None, gram_schmidt_q(pr.t, rng)):
            red = equiv.reduce(pr.a, pr.y, pr.t, q)
            lifted = equiv.lift(equiv.alpha_rwls(red, pr.w, gamma), red.q, pr.t)
            lift_err = max(lift_err, np.abs(lifted - ref).max())
            u_alpha = tuning.tune_gamma_u(pr.a, pr.y, pr.w, pr.t, n=pr.n, form="alpha", q=q).minimizer
            tune_err = max(tune_err, abs(u_theta - u_alpha) / (1 + u_theta))
    ok = lift_err < 1e-10 and tune_err < 1e-4
    ok = report(5, ok, f"lift error {lift_err:.1e}, tuner disagreement {tune_err:.1e}",
                time.perf_counter() - start, 60)
    assert ok


def test_criterion_6_gamma_convergence(report):
    start = time.perf_counter()
    rho, povm, basis = exp.scenario_werner36(0.5)
    a = np.asarray(design_matrix(povm, basis))
    theta = decompose(rho, basis)
    p = probabilities(a, theta)
    t = basis.trace_vector
    gs = tuning.gamma_star(a, p, theta, t)
    med = []
    for k, n in enumerate((10**3, 10**4, 10**5)):
        w = weight_matrix_true(p, n)
        errs = []
        for r in range(200):
            y = sample_separate(p, n, exp.derive_seed(606, k, r)).frequencies
            errs.append(abs(tuning.tune_gamma_u(a, y, w, t).minimizer - gs) / gs)
        med.append(float(np.median(errs)))
    r_err = abs(tuning.tune_gamma_R(a, weight_matrix_true(p, 10**5), theta, t).minimizer - gs) / gs
    ok = med[0] > med[1] > med[2] and r_err < 0.05
    ok = report(6, ok, f"median u-errors {[round(m, 3) for m in med]}, R-error at 1e5 {r_err:.4f} "
                f"(gamma* = {gs:.3f})", time.perf_counter() - start, 300)
    assert ok


def test_criterion_7_under_determinate(report):
    start = time.perf_counter()
    grid = [round(0.1 * i, 1) for i in range(11)]
    gammas = [1.0, 10.0, 100.0]
    bad_est = 0
    rng = np.random.default_rng(707)
    for p in grid:
        rho, povm, basis = exp.scenario_six_qubit(p, num_projectors=40, num_qubits=3)
        a = np.asarray(design_matrix(povm, basis))
        probs = probabilities(a, decompose(rho, basis))
        for _ in range(10):
            rec = sample_separate(probs, 1100, rng)
            w = weight_matrix_empirical(rec)
            for g in gammas:
                th = est.crwls(a, rec.frequencies, w, basis.trace_vector, g).theta_hat
                tr = np.trace(reconstruct(th, basis)).real
                bad_est += not (np.all(np.isfinite(th)) and abs(tr - 1) < 1e-10)
    cfg = exp.ExperimentConfig(scenario="SixQubitUnder", num_qubits=3, num_projectors=40, state_params=grid,
                               n_list=[1100], rounds=200, estimators=["CRWLS"],
                               gamma_policy={"kind": "Fixed", "values": gammas}, seed=77)
    res = exp.run_experiment(cfg)
    ratios = []
    for p in grid:
        vals = [res.row(p, 1100, "CRWLS", g)["mse_exp"] for g in gammas]
        ratios.append(max(vals) / min(vals))
    ok = bad_est == 0 and all(np.isfinite(ratios)) and max(ratios) < 2
    ok = report(7, ok, f"{bad_est} invalid estimates, max MSE ratio across gamma {max(ratios):.3f}",
                time.perf_counter() - start, 120)
    assert ok


def test_criterion_8_determinism(report, tmp_path):
    start = time.perf_counter()
    configs = [
        dict(scenario="Werner36", state_params=[0.0, 0.5, 1.0], n_list=[110, 1100], rounds=30, seed=8),
        dict(scenario="WernerCRLS", state_params=[0.3], n_list=[1100], rounds=10, seed=8),
        dict(scenario="SixQubitUnder", num_qubits=3, num_projectors=40, state_params=[0.5], n_list=[1100],
             rounds=20, estimators=["CRWLS"], gamma_policy={"kind": "Fixed", "values": [1, 10]}, seed=8),
    ]
    same = []
    for i, doc in enumerate(configs):
        blobs = []
        for run, threads in enumerate((1, 4)):
            res = exp.run_experiment(exp.ExperimentConfig(**doc, threads=threads))
            csv_path = exp.emit(res, tmp_path / f"{i}-{run}", formats=("csv",))[0]
            blobs.append(csv_path.read_bytes())
        same.append(blobs[0] == blobs[1])
    ok = report(8, all(same), f"bitwise-identical CSV on rerun for {sum(same)}/{len(same)} configs",
                time.perf_counter() - start, 600)
    assert ok
