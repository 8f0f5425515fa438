from __future__ import annotations

import numpy as np
import pytest

from tomolr.errors import DegenerateProbability, DimensionMismatch, IncompleteMeasurement, InvalidOperator
from tomolr.experiments import scenario_six_qubit, scenario_werner36, werner36_povm, werner_state
from tomolr.linalg import decompose, make_pauli_basis, pauli_word
from tomolr.measurement import (MeasurementRecord, Povm, design_matrix, pauli_projector_povm, probabilities,
                                reconstructs_effects, sample_collective, sample_separate, simulate,
                                weight_matrix_empirical, weight_matrix_true)

S2 = np.sqrt(2)


def z_povm():
    return Povm(np.array([np.diag([1, 0]), np.diag([0, 1])]), complete=True)


def test_design_matrix_of_z_measurement():
    a = design_matrix(z_povm(), make_pauli_basis(1))
    np.testing.assert_allclose(np.asarray(a), [[1 / S2, 0, 0, 1 / S2], [1 / S2, 0, 0, -1 / S2]], atol=1e-15)
    assert a.rank == 2 and not a.rank_full


def test_werner_design_matrix_full_rank():
    _, povm, basis = scenario_werner36(0.5)
    a = design_matrix(povm, basis)
    assert a.shape == (36, 16) and a.rank == 16 and a.rank_full
    assert reconstructs_effects(a, povm, basis)


def test_design_matrix_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        design_matrix(z_povm(), make_pauli_basis(2))


def test_povm_validation():
    with pytest.raises(IncompleteMeasurement):
        Povm(np.array([np.diag([1, 0])]), complete=True)
    with pytest.raises(InvalidOperator):
        Povm(np.array([np.diag([1.0, -0.5])]))
    with pytest.raises(InvalidOperator):
        Povm(np.array([[[0, 1], [0, 0]]]))


def test_povm_json_round_trip(tmp_path):
    povm = werner36_povm()
    path = tmp_path / "povm.json"
    povm.save(path)
    back = Povm.load(path)
    assert back.complete and back.dim == 4
    np.testing.assert_array_equal(back.effects, povm.effects)


def test_probabilities():
    b = make_pauli_basis(1)
    a = design_matrix(z_povm(), b)
    np.testing.assert_allclose(probabilities(a, decompose(np.eye(2) / 2, b)), [0.5, 0.5])
    for q in (0.0, 0.3, 1.0):
        rho, povm, basis = scenario_werner36(q)
        p = probabilities(design_matrix(povm, basis), decompose(rho, basis))
        assert abs(p.sum() - 1) < 1e-10
    rho, povm, basis = scenario_werner36(0.0)
    p = probabilities(design_matrix(povm, basis), decompose(rho, basis))
    np.testing.assert_allclose(p, np.trace(povm.effects, axis1=1, axis2=2).real / 4, atol=1e-15)


def test_probabilities_clip_roundoff_and_reject_invalid():
    a = np.eye(2)
    p, clipped = probabilities(a, np.array([-1e-12, 1 + 1e-12]), return_clipped=True)
    assert clipped == 2
    np.testing.assert_array_equal(p, [0.0, 1.0])
    with pytest.raises(InvalidOperator):
        probabilities(a, np.array([-0.1, 0.5]))


def test_sample_separate_degenerate_and_deterministic():
    rec = sample_separate(np.array([1.0, 0.0]), 17, seed=1)
    np.testing.assert_array_equal(rec.counts, [17, 0])
    a = sample_separate(np.array([0.3, 0.6]), 1000, seed=5)
    b = sample_separate(np.array([0.3, 0.6]), 1000, seed=5)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert a.seed == 5


def test_sample_separate_concentration():
    rec = sample_separate(np.array([0.5, 0.5]), 10**6, seed=2)
    assert np.all(np.abs(rec.frequencies - 0.5) < 5 * np.sqrt(0.25 / 1e6))


def test_separate_variance_mean_and_independence():
    p = np.array([0.1, 0.5, 0.8])
    n, reps = 200, 10**4
    rng = np.random.default_rng(3)
    freqs = np.array([sample_separate(p, n, rng).frequencies for _ in range(reps)])
    np.testing.assert_allclose(freqs.var(axis=0, ddof=1), (p - p * p) / n, rtol=0.05)
    e = freqs - p
    assert np.all(np.abs(e.mean(axis=0)) < 5 * np.sqrt(e.var(axis=0) / reps))
    corr = np.corrcoef(freqs.T)
    assert np.abs(corr[np.triu_indices(3, 1)]).max() < 5 / np.sqrt(reps)


def test_sample_collective():
    rec = sample_collective(np.array([1.0, 0.0, 0.0]), 7, seed=0)
    np.testing.assert_array_equal(rec.counts, [7, 0, 0])
    p = np.array([0.2, 0.3, 0.5])
    n, reps = 100, 10**4
    rng = np.random.default_rng(4)
    recs = [sample_collective(p, n, rng) for _ in range(reps)]
    assert all(r.counts.sum() == n for r in recs)
    freqs = np.array([r.frequencies for r in recs])
    assert np.abs(freqs.sum(axis=1) - 1).max() < 1e-15
    np.testing.assert_allclose(freqs.var(axis=0, ddof=1), (p - p * p) / n, rtol=0.05)
    cov = np.cov(freqs.T)
    assert np.all(cov[np.triu_indices(3, 1)] < 0)
    # multinomial covariance -p_i p_j / n
    assert cov[0, 1] == pytest.approx(-p[0] * p[1] / n, rel=0.1)


def test_collective_rejects_incomplete():
    with pytest.raises(IncompleteMeasurement):
        sample_collective(np.array([0.2, 0.2]), 10)
    povm = Povm(np.array([np.diag([1, 0])]))
    b = make_pauli_basis(1)
    with pytest.raises(IncompleteMeasurement):
        simulate(povm, design_matrix(povm, b), decompose(np.eye(2) / 2, b), 10, "collective")


def test_record_invariants_and_json(tmp_path):
    with pytest.raises(ValueError):
        MeasurementRecord(np.array([3, 8]), 5)
    with pytest.raises(ValueError):
        MeasurementRecord(np.array([1, 1]), 5, "collective")
    rec = sample_separate(np.array([0.2, 0.7]), 50, seed=9)
    path = tmp_path / "rec.json"
    rec.save(path)
    back = MeasurementRecord.load(path)
    assert back.to_dict() == rec.to_dict()


def test_weight_matrix_true():
    np.testing.assert_allclose(weight_matrix_true(np.array([0.5, 0.5]), 100).diag, [400, 400])
    np.testing.assert_allclose(weight_matrix_true(np.array([0.1, 0.9]), 10).diag, [10 / 0.09] * 2)
    with pytest.raises(DegenerateProbability):
        weight_matrix_true(np.array([0.0, 1.0]), 10)


def test_weight_matrix_empirical():
    rec = MeasurementRecord(np.array([0, 30, 70]), 100)
    w = weight_matrix_empirical(rec, 1e-8)
    assert w.clamp_count == 1
    assert w.diag[0] == pytest.approx(100 / (1e-8 - 1e-16))
    p = np.array([0.25, 0.5])
    exact = MeasurementRecord(np.array([25, 50]), 100)
    np.testing.assert_allclose(weight_matrix_empirical(exact).diag, weight_matrix_true(p, 100).diag)


def test_empirical_weight_is_consistent():
    p = np.array([0.2, 0.45, 0.7])
    rng = np.random.default_rng(11)
    errs = []
    for n in (10**2, 10**4, 10**6):
        w_true = weight_matrix_true(p, n).diag
        rel = [np.abs(weight_matrix_empirical(sample_separate(p, n, rng)).diag / w_true - 1).max()
               for _ in range(200)]
        errs.append(np.median(rel))
    assert errs[0] > errs[1] > errs[2]


def test_pauli_projectors():
    povm = pauli_projector_povm(1, 3, seed=0)
    assert povm.num_outcomes == 3 and not povm.complete
    # the Z word gives |0><0| / 3
    (k,) = [i for i, (w, s) in enumerate(povm.labels) if w == (3,)]
    np.testing.assert_allclose(povm.effects[k], np.diag([1, 0]) / 3)
    for word, sign in pauli_projector_povm(3, 20, seed=1).labels:
        q = (np.eye(8) + sign * pauli_word(word)) / 2
        assert np.abs(q @ q - q).max() < 1e-12


def test_pauli_projectors_six_qubit_rank():
    povm = pauli_projector_povm(6, 200, seed=0)
    assert povm.num_outcomes == 200
    assert len(set(povm.labels)) == 200
    assert all(sign == 1 and 0 not in word for word, sign in povm.labels)
    ranks = np.linalg.matrix_rank(povm.effects[:10] * 200, tol=1e-8)
    assert np.all(ranks == 32)


def test_pauli_projectors_fall_back_to_both_signs():
    povm = pauli_projector_povm(3, 40, seed=0)
    assert len(set(povm.labels)) == 40
    assert {s for _, s in povm.labels} == {1, -1}
    assert all(0 not in w for w, _ in povm.labels)
    with pytest.raises(ValueError):
        pauli_projector_povm(3, 55)
    with pytest.raises(ValueError):
        pauli_projector_povm(3, 28, both_signs=False)


def test_six_qubit_design_is_under_determinate():
    _, povm, basis = scenario_six_qubit(0.5)
    a = design_matrix(povm, basis)
    assert a.shape == (200, 4096) and not a.rank_full


def test_werner_state_properties():
    assert np.allclose(werner_state(0.0), np.eye(4) / 4)
    rho = werner_state(1.0)
    assert np.trace(rho @ rho).real == pytest.approx(1.0)
    np.testing.assert_allclose(werner36_povm().effects.sum(axis=0), np.eye(4), atol=1e-12)
