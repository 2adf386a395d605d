import math
import warnings

import numpy as np
import pytest
from sklearn.base import clone

from hyperpair.states import fidelity, hyperentangled_state, pure_density
from hyperpair.tomography import (
    DensityMatrixMLE,
    ReducedRankWarning,
    TomographyDataset,
    analyzer_settings_effects,
    bootstrap_fidelity,
    dataset_from_outcome_counts,
    exact_dataset,
    expected_probabilities,
    load_density_matrix,
    loglikelihood,
    loglikelihood_gradient,
    mle_reconstruct,
    pauli_effects,
    pauli_settings,
    quad_plus_single_dof_settings,
    sampled_dataset,
    save_density_matrix,
)
from conftest import random_density, two_qubit_pauli_effects

PAULI_EFFECTS_16 = np.stack([pauli_effects(b) for b in pauli_settings()])
EFFECTS_4 = two_qubit_pauli_effects()


def trace_distance(a, b):
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())


class TestDataset:
    def test_validation(self):
        effects = np.array([np.eye(2) * 2.0])
        with pytest.raises(ValueError):
            TomographyDataset(effects=effects, counts=np.array([1.0]),
                              setting_index=np.array([0]))
        with pytest.raises(ValueError):
            TomographyDataset(effects=np.array([np.eye(2)]), counts=np.array([-1.0]),
                              setting_index=np.array([0]))

    def test_trials_grouping(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=50, seed=0)
        assert np.all(ds.trials() == 50)
        assert ds.n_settings == 9
        assert np.all(ds.counts <= 50)

    def test_operator_span_rank_complete_sets(self):
        ds = exact_dataset(np.eye(4) / 4, EFFECTS_4)
        assert ds.operator_span_rank() == 16
        ds16 = exact_dataset(np.eye(16) / 16, PAULI_EFFECTS_16)
        assert ds16.operator_span_rank() == 256

    def test_analyzer_set_is_rank_deficient(self):
        effects = analyzer_settings_effects(quad_plus_single_dof_settings())
        ds = exact_dataset(np.eye(16) / 16, effects)
        assert ds.operator_span_rank() == 81


class TestLogLikelihood:
    def test_uniform_closed_form(self):
        counts = np.full((81, 16), 7.0)
        ds = dataset_from_outcome_counts(PAULI_EFFECTS_16, counts)
        expected = 81 * 16 * 7.0 * math.log(1 / 16)
        assert loglikelihood(np.eye(16) / 16, ds) == pytest.approx(expected, rel=1e-12)

    def test_floor_engages_only_for_vanishing_probability(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        effects = np.array([np.diag([0.0, 1.0]).astype(complex)])
        ds = TomographyDataset(effects=effects, counts=np.array([3.0]),
                               setting_index=np.array([0]))
        assert loglikelihood(rho, ds) == pytest.approx(3.0 * math.log(1e-12))
        interior = np.eye(2) / 2
        assert loglikelihood(interior, ds) == pytest.approx(3.0 * math.log(0.5))

    def test_local_optimality_probe(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=2000, seed=1)
        result = mle_reconstruct(ds)
        best = loglikelihood(result.rho, ds)
        for _ in range(100):
            direction = random_density(rng, 4)
            perturbed = 0.97 * result.rho + 0.03 * direction
            assert loglikelihood(perturbed, ds) <= best + 1e-9


class TestGradient:
    def test_matches_central_finite_differences(self, rng):
        for trial in range(3):
            rho = random_density(rng, 4)
            ds = sampled_dataset(rho, EFFECTS_4, shots=500, seed=trial)
            g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            analytic = loglikelihood_gradient(g, ds)

            def value(mat):
                gram = mat.conj().T @ mat
                return loglikelihood(gram / np.trace(gram).real, ds)

            step = 1e-6
            numeric = np.zeros_like(analytic)
            for r in range(4):
                for c in range(4):
                    delta = np.zeros((4, 4), dtype=complex)
                    delta[r, c] = step
                    d_re = (value(g + delta) - value(g - delta)) / (2 * step)
                    d_im = (value(g + 1j * delta) - value(g - 1j * delta)) / (2 * step)
                    numeric[r, c] = d_re + 1j * d_im
            rel = np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic)
            assert rel < 1e-6

    def test_gradient_vanishes_at_maximum(self, rng):
        rho = random_density(rng, 4)
        ds = exact_dataset(rho, EFFECTS_4)
        result = mle_reconstruct(ds)
        eigvals, eigvecs = np.linalg.eigh(result.rho)
        g = (eigvecs * np.sqrt(np.maximum(eigvals, 0))) @ eigvecs.conj().T
        gradient = loglikelihood_gradient(g, ds)
        assert np.linalg.norm(gradient) < 1e-6


class TestReconstruction:
    def test_exact_probability_recovery_16(self, rng):
        for _ in range(3):
            rho = random_density(rng, 16)
            result = mle_reconstruct(exact_dataset(rho, PAULI_EFFECTS_16))
            assert result.converged
            assert trace_distance(result.rho, rho) < 1e-6

    def test_pure_state_identity_recovery(self):
        psi = hyperentangled_state(0.0)
        result = mle_reconstruct(exact_dataset(pure_density(psi), PAULI_EFFECTS_16))
        assert fidelity(result.rho, psi) == pytest.approx(1.0, abs=1e-6)

    def test_likelihood_monotone_along_iteration(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=200, seed=8)
        est = DensityMatrixMLE().fit(ds, rho0=np.eye(4, dtype=complex) / 4)
        gains = np.diff(est.log_likelihood_path_)
        assert np.all(gains >= -1e-8)

    def test_count_scaling_leaves_estimate_unchanged(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=300, seed=4)
        scaled = TomographyDataset(effects=ds.effects, counts=ds.counts * 1000.0,
                                   setting_index=ds.setting_index)
        rho_a = mle_reconstruct(ds).rho
        rho_b = mle_reconstruct(scaled).rho
        assert np.array_equal(rho_a, rho_b)

    def test_estimate_is_valid_density_operator(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=40, seed=2)
        result = mle_reconstruct(ds)
        est = result.rho
        assert np.allclose(est, est.conj().T, atol=1e-12)
        assert np.trace(est).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(est)[0] >= -1e-12

    def test_reduced_rank_warning_and_flag(self):
        effects = analyzer_settings_effects(quad_plus_single_dof_settings())
        ds = exact_dataset(pure_density(hyperentangled_state(0.0)), effects)
        with pytest.warns(ReducedRankWarning):
            mle_reconstruct(ds)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            mle_reconstruct(ds, allow_deficient=True)

    def test_estimator_api(self, rng):
        est = DensityMatrixMLE(tol=1e-8, max_iter=500)
        params = est.get_params()
        assert params["tol"] == 1e-8
        assert clone(est).get_params() == params
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=500, seed=6)
        est.fit(ds)
        probs = est.predict(ds.effects)
        assert probs.shape == (36,)
        group_sums = np.bincount(ds.setting_index, weights=probs)
        assert np.allclose(group_sums, 1.0, atol=1e-9)

    def test_non_convergence_reported(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=50, seed=11)
        est = DensityMatrixMLE(tol=1e-16, max_iter=3).fit(
            ds, rho0=np.eye(4, dtype=complex) / 4)
        assert not est.converged_


class TestBootstrap:
    def test_determinism(self, rng):
        rho = random_density(rng, 4)
        target = np.linalg.eigh(rho)[1][:, -1]
        ds = sampled_dataset(rho, EFFECTS_4, shots=60, seed=5)
        first = bootstrap_fidelity(ds, target, resamples=100, seed=17)
        second = bootstrap_fidelity(ds, target, resamples=100, seed=17)
        assert first.low == second.low and first.high == second.high

    def test_huge_count_interval_collapses(self, rng):
        rho = random_density(rng, 4)
        target = np.linalg.eigh(rho)[1][:, -1]
        ds = exact_dataset(rho, EFFECTS_4)
        huge = TomographyDataset(effects=ds.effects, counts=ds.counts * 1e8,
                                 setting_index=ds.setting_index)
        interval = bootstrap_fidelity(huge, target, resamples=100, seed=1)
        assert interval.high - interval.low < 1e-3

    def test_width_scales_with_inverse_root_counts(self, rng):
        rho = random_density(rng, 4)
        target = np.linalg.eigh(rho)[1][:, -1]
        widths = []
        scales = [20, 200, 2000]
        for shots in scales:
            ds = sampled_dataset(rho, EFFECTS_4, shots=shots, seed=7)
            interval = bootstrap_fidelity(ds, target, resamples=150, seed=23)
            widths.append(interval.high - interval.low)
        slope = np.polyfit(np.log10(scales), np.log10(widths), 1)[0]
        assert -0.75 < slope < -0.3

    def test_minimum_resamples_enforced(self, rng):
        rho = random_density(rng, 4)
        ds = sampled_dataset(rho, EFFECTS_4, shots=50, seed=5)
        with pytest.raises(ValueError):
            bootstrap_fidelity(ds, np.array([1, 0, 0, 0], dtype=complex), resamples=10)


class TestRecordsInterface:
    def test_dataset_from_count_records_csv(self, tmp_path, rng):
        from hyperpair.counts import CountRecord, records_from_csv, records_to_csv
        from hyperpair.measurement import OUTCOME_TUPLES, JointSetting
        from hyperpair.counts import sample_outcome_counts

        rho = pure_density(hyperentangled_state(0.0))
        settings = [JointSetting(alpha_i=22.5, phi_i=0.5), JointSetting(alpha_s=45.0)]
        counts = sample_outcome_counts(rho, settings, shots=400, seed=12)
        records = [
            CountRecord(setting=setting, integration_s=1.0,
                        raw=int(counts[s, k]), dark=0, outcomes=outcomes)
            for s, setting in enumerate(settings)
            for k, outcomes in enumerate(OUTCOME_TUPLES)
        ]
        path = tmp_path / "records.csv"
        records_to_csv(records, path)
        from hyperpair.tomography import dataset_from_records
        dataset = dataset_from_records(records_from_csv(path))
        assert dataset.dim == 16
        assert dataset.n_settings == 2
        assert np.all(dataset.trials() == 400)
        with pytest.warns(ReducedRankWarning):
            result = mle_reconstruct(dataset)
        probs = expected_probabilities(result.rho, dataset.effects)
        observed = dataset.counts / 400
        assert np.max(np.abs(probs - observed)) < 0.08


class TestMatrixIO:
    def test_round_trip(self, tmp_path, rng):
        rho = random_density(rng, 16)
        path = tmp_path / "rho.txt"
        save_density_matrix(path, rho)
        loaded = load_density_matrix(path)
        assert np.allclose(loaded, rho, atol=1e-15)

    def test_header_validation(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a matrix\n")
        with pytest.raises(ValueError):
            load_density_matrix(path)


class TestExpectedProbabilities:
    def test_against_direct_traces(self, rng):
        rho = random_density(rng, 4)
        effects = EFFECTS_4.reshape(-1, 4, 4)
        probs = expected_probabilities(rho, effects)
        direct = [np.trace(rho @ e).real for e in effects]
        assert np.allclose(probs, direct, atol=1e-12)
