import math

import numpy as np
import pytest
from sklearn.base import clone

from hyperpair.counts import RunPlan, simulate_counts
from hyperpair.fringes import (
    DegenerateGridError,
    FitConvergenceError,
    FringeSurfaceFitter,
    fit_fringes,
)
from hyperpair.measurement import JointSetting
from hyperpair.states import NoiseModel, apply_noise, hyperentangled_state


def surface_xy(alpha_points=13, phi_points=13):
    alpha = np.linspace(0.0, 180.0, alpha_points, endpoint=False)
    phi = np.linspace(0.0, 2 * math.pi, phi_points, endpoint=False)
    return np.array([[a, p] for a in alpha for p in phi])


def model_counts(X, amplitude, v_pol, alpha0, v_et, phi0):
    return amplitude * (1 + v_pol * np.cos(np.radians(2 * (X[:, 0] - alpha0)))) \
        * (1 + v_et * np.cos(X[:, 1] - phi0))


class TestExactRecovery:
    def test_planted_parameters_recovered_to_machine_precision(self):
        X = surface_xy()
        planted = dict(amplitude=210.0, v_pol=0.95, alpha0=12.0, v_et=0.90, phi0=0.8)
        y = model_counts(X, **planted)
        fit = FringeSurfaceFitter().fit(X, y)
        assert fit.amplitude_ == pytest.approx(planted["amplitude"], abs=1e-9)
        assert fit.visibility_pol_ == pytest.approx(planted["v_pol"], abs=1e-9)
        assert fit.alpha_offset_deg_ == pytest.approx(planted["alpha0"], abs=1e-9)
        assert fit.visibility_et_ == pytest.approx(planted["v_et"], abs=1e-9)
        assert fit.phi_offset_rad_ == pytest.approx(planted["phi0"], abs=1e-9)
        assert fit.residual_ < 1e-14

    def test_offsets_wrap_into_canonical_ranges(self):
        X = surface_xy()
        y = model_counts(X, 100.0, 0.8, 170.0, 0.7, 6.0)
        fit = FringeSurfaceFitter().fit(X, y)
        assert 0.0 <= fit.alpha_offset_deg_ < 180.0
        assert 0.0 <= fit.phi_offset_rad_ < 2 * math.pi
        assert fit.alpha_offset_deg_ == pytest.approx(170.0, abs=1e-8)
        assert fit.phi_offset_rad_ == pytest.approx(6.0, abs=1e-8)

    def test_predict_reproduces_surface(self):
        X = surface_xy()
        y = model_counts(X, 55.0, 0.5, 30.0, 0.4, 2.0)
        fit = FringeSurfaceFitter().fit(X, y)
        assert np.allclose(fit.predict(X), y, atol=1e-8)

    def test_estimator_api(self):
        fitter = FringeSurfaceFitter(max_iter=77)
        params = fitter.get_params()
        assert params["max_iter"] == 77
        cloned = clone(fitter)
        assert cloned.get_params() == params
        with pytest.raises(RuntimeError):
            fitter.predict(surface_xy())


class TestStochasticRecovery:
    @staticmethod
    def simulate_and_fit(seed, planted_v=0.98):
        rho = apply_noise(hyperentangled_state(0.0),
                          NoiseModel(visibility_pol=planted_v, visibility_et=planted_v))
        alpha = np.linspace(0.0, 180.0, 13, endpoint=False)
        phi = np.linspace(0.0, 2 * math.pi, 13, endpoint=False)
        settings = tuple(JointSetting(alpha_s=0.0, phi_s=0.0, alpha_i=a, phi_i=p)
                         for a in alpha for p in phi)
        plan = RunPlan(settings=settings, integration_s=80.0, pair_rate_cps=100.0,
                       dark_rate_cps=0.25, seed=seed)
        records = simulate_counts(rho, plan)
        return fit_fringes(records)

    def test_poisson_surface_recovers_planted_visibility(self):
        fit = self.simulate_and_fit(seed=5)
        assert fit.visibility_pol_ == pytest.approx(0.98, abs=0.015)
        assert fit.visibility_et_ == pytest.approx(0.98, abs=0.015)

    def test_recovery_error_scales_with_counts(self):
        # planted-parameter RMS error should fall roughly as 1/sqrt(N)
        rho = apply_noise(hyperentangled_state(0.0),
                          NoiseModel(visibility_pol=0.9, visibility_et=0.9))
        alpha = np.linspace(0.0, 180.0, 9, endpoint=False)
        phi = np.linspace(0.0, 2 * math.pi, 9, endpoint=False)
        settings = tuple(JointSetting(alpha_i=a, phi_i=p) for a in alpha for p in phi)
        times = [8.0, 80.0, 800.0]
        rms = []
        for time_s in times:
            errs = []
            for rep in range(10):
                plan = RunPlan(settings=settings, integration_s=time_s,
                               pair_rate_cps=100.0, seed=(31, rep))
                fit = fit_fringes(simulate_counts(rho, plan))
                errs.append((fit.visibility_pol_ - 0.9) ** 2 + (fit.visibility_et_ - 0.9) ** 2)
            rms.append(math.sqrt(np.mean(errs)))
        slope = np.polyfit(np.log10(times), np.log10(rms), 1)[0]
        assert -0.75 < slope < -0.25

    def test_maximally_mixed_surface_fits_zero_visibility(self):
        rho = apply_noise(hyperentangled_state(0.0), NoiseModel(white_noise_weight=1.0))
        alpha = np.linspace(0.0, 180.0, 9, endpoint=False)
        phi = np.linspace(0.0, 2 * math.pi, 9, endpoint=False)
        settings = tuple(JointSetting(alpha_i=a, phi_i=p) for a in alpha for p in phi)
        plan = RunPlan(settings=settings, integration_s=500.0, pair_rate_cps=100.0, seed=2)
        fit = fit_fringes(simulate_counts(rho, plan))
        assert fit.visibility_pol_ < 0.02
        assert fit.visibility_et_ < 0.02


class TestGuards:
    def test_degenerate_grid_too_few_points(self):
        alpha = np.linspace(0.0, 180.0, 4, endpoint=False)
        phi = np.linspace(0.0, 2 * math.pi, 9, endpoint=False)
        X = np.array([[a, p] for a in alpha for p in phi])
        with pytest.raises(DegenerateGridError):
            FringeSurfaceFitter().fit(X, np.ones(len(X)))

    def test_degenerate_grid_partial_period(self):
        alpha = np.linspace(0.0, 60.0, 9)
        phi = np.linspace(0.0, 2 * math.pi, 9, endpoint=False)
        X = np.array([[a, p] for a in alpha for p in phi])
        with pytest.raises(DegenerateGridError):
            FringeSurfaceFitter().fit(X, np.ones(len(X)))

    def test_non_convergence_raises(self):
        X = surface_xy(9, 9)
        y = model_counts(X, 500.0, 0.9, 40.0, 0.8, 1.0)
        rng = np.random.default_rng(0)
        y = rng.poisson(y).astype(float)
        with pytest.raises(FitConvergenceError):
            FringeSurfaceFitter(max_iter=1).fit(X, y)

    def test_records_must_share_signal_setting(self):
        records = []
        for alpha_s in (0.0, 45.0):
            plan = RunPlan(settings=tuple(JointSetting(alpha_s=alpha_s, alpha_i=a)
                                          for a in np.linspace(0, 180, 5, endpoint=False)),
                           integration_s=1.0, pair_rate_cps=10.0)
            records.extend(simulate_counts(
                apply_noise(hyperentangled_state(0.0), NoiseModel()), plan))
        with pytest.raises(ValueError, match="signal-side"):
            fit_fringes(records)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            FringeSurfaceFitter().fit(np.ones((4, 3)), np.ones(4))
