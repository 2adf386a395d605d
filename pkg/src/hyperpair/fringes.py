"""Two-dimensional interference-fringe fitting.

Coincidence surfaces over the idler settings (alpha_i, phi_i) at a fixed
signal setting follow the separable sinusoid

    model(alpha, phi) = A * (1 + V_pol cos(2 (alpha - alpha0)))
                          * (1 + V_et  cos(phi - phi0))

with angles in degrees and phases in radians.  The angular frequencies are
fixed by the analyzers (2 per polarization degree, 1 per phase), so the fit
initializes by projecting the marginal fringes onto those known frequencies
and then refines all five parameters with a damped Gauss-Newton iteration.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .counts import CountRecord


class FitConvergenceError(RuntimeError):
    """Least-squares refinement did not converge within the iteration budget."""


class DegenerateGridError(ValueError):
    """The sampled grid cannot constrain the fringe model."""


def _fringe_model(params: np.ndarray, alpha: np.ndarray, phi: np.ndarray) -> np.ndarray:
    amplitude, v_pol, alpha0, v_et, phi0 = params
    g_pol = 1.0 + v_pol * np.cos(np.radians(2.0 * (alpha - alpha0)))
    g_et = 1.0 + v_et * np.cos(phi - phi0)
    return amplitude * g_pol * g_et


def _fringe_jacobian(params: np.ndarray, alpha: np.ndarray, phi: np.ndarray) -> np.ndarray:
    amplitude, v_pol, alpha0, v_et, phi0 = params
    arg_pol = np.radians(2.0 * (alpha - alpha0))
    g_pol = 1.0 + v_pol * np.cos(arg_pol)
    g_et = 1.0 + v_et * np.cos(phi - phi0)
    jac = np.empty((alpha.size, 5))
    jac[:, 0] = g_pol * g_et
    jac[:, 1] = amplitude * np.cos(arg_pol) * g_et
    jac[:, 2] = amplitude * v_pol * np.sin(arg_pol) * (math.pi / 90.0) * g_et
    jac[:, 3] = amplitude * g_pol * np.cos(phi - phi0)
    jac[:, 4] = amplitude * g_pol * v_et * np.sin(phi - phi0)
    return jac


def _projection_start(alpha: np.ndarray, phi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Initial parameters from discrete projections at the fixed frequencies."""
    mean = float(y.mean())
    if mean <= 0.0:
        return np.array([max(y.max(), 1.0), 0.1, 0.0, 0.1, 0.0])

    alpha_values = np.unique(alpha)
    pol_marginal = np.array([y[alpha == a].mean() for a in alpha_values])
    z_pol = 2.0 * np.mean(pol_marginal * np.exp(-2j * np.radians(alpha_values)))
    phi_values = np.unique(phi)
    et_marginal = np.array([y[phi == p].mean() for p in phi_values])
    z_et = 2.0 * np.mean(et_marginal * np.exp(-1j * phi_values))

    v_pol = min(abs(z_pol) / mean, 1.0)
    v_et = min(abs(z_et) / mean, 1.0)
    alpha0 = math.degrees(-np.angle(z_pol) / 2.0) if abs(z_pol) > 0 else 0.0
    phi0 = float(-np.angle(z_et)) if abs(z_et) > 0 else 0.0
    return np.array([mean, v_pol, alpha0, v_et, phi0])


def _canonicalize(params: np.ndarray) -> np.ndarray:
    amplitude, v_pol, alpha0, v_et, phi0 = params
    if v_pol < 0.0:
        v_pol, alpha0 = -v_pol, alpha0 + 90.0
    if v_et < 0.0:
        v_et, phi0 = -v_et, phi0 + math.pi
    return np.array([
        amplitude,
        min(v_pol, 1.0),
        alpha0 % 180.0,
        min(v_et, 1.0),
        phi0 % (2.0 * math.pi),
    ])


class FringeSurfaceFitter(BaseEstimator):
    """Least-squares fit of the separable two-dimensional fringe model.

    Parameters
    ----------
    max_iter : int
        Gauss-Newton iteration budget.
    tol : float
        Relative decrease of the squared residual below which the fit is
        declared converged.
    damping : float
        Initial Levenberg damping added to the normal equations; adapted
        multiplicatively during the iteration.

    Attributes
    ----------
    amplitude_ : float
        Overall surface amplitude A (counts).
    visibility_pol_, visibility_et_ : float
        Fringe visibilities, clipped into [0, 1].
    alpha_offset_deg_, phi_offset_rad_ : float
        Fringe offsets, wrapped to [0, 180) degrees and [0, 2 pi).
    residual_ : float
        Sum of squared residuals at the solution.
    n_iter_ : int
        Accepted Gauss-Newton steps.
    """

    def __init__(self, max_iter: int = 200, tol: float = 1e-14, damping: float = 1e-3):
        self.max_iter = max_iter
        self.tol = tol
        self.damping = damping

    def fit(self, X, y):
        """Fit the surface to counts ``y`` at settings ``X``.

        ``X`` is (n, 2): idler polarization angle in degrees and idler phase
        in radians.  The grid must offer at least 5 distinct values per axis
        and cover at least one fringe period on each.
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"X must have shape (n, 2), got {X.shape}")
        if X.shape[0] != y.size:
            raise ValueError("X and y lengths differ")
        alpha, phi = X[:, 0], X[:, 1]
        self._check_grid(alpha, 180.0, "polarization angle")
        self._check_grid(phi, 2.0 * math.pi, "interferometer phase")

        params = _projection_start(alpha, phi, y)
        residual = _fringe_model(params, alpha, phi) - y
        sse = float(residual @ residual)
        damping = float(self.damping)
        converged = False
        n_iter = 0
        for _ in range(self.max_iter):
            jac = _fringe_jacobian(params, alpha, phi)
            gram = jac.T @ jac
            gradient = jac.T @ residual
            step_ok = False
            for _ in range(50):
                try:
                    step = np.linalg.solve(gram + damping * np.diag(np.diag(gram)), -gradient)
                except np.linalg.LinAlgError:
                    damping *= 10.0
                    continue
                candidate = params + step
                cand_residual = _fringe_model(candidate, alpha, phi) - y
                cand_sse = float(cand_residual @ cand_residual)
                if cand_sse <= sse:
                    step_ok = True
                    break
                damping *= 10.0
            if not step_ok:
                break
            damping = max(damping / 3.0, 1e-12)
            params, residual = candidate, cand_residual
            gain = sse - cand_sse
            sse = cand_sse
            n_iter += 1
            if gain <= self.tol * max(sse, 1e-300):
                converged = True
                break
        if not converged:
            raise FitConvergenceError(
                f"fringe fit did not converge within {self.max_iter} iterations "
                f"(residual {sse:.6g})"
            )

        params = _canonicalize(params)
        self.amplitude_ = float(params[0])
        self.visibility_pol_ = float(params[1])
        self.alpha_offset_deg_ = float(params[2])
        self.visibility_et_ = float(params[3])
        self.phi_offset_rad_ = float(params[4])
        self.residual_ = sse
        self.n_iter_ = n_iter
        return self

    def predict(self, X) -> np.ndarray:
        """Model counts at the given (alpha_i, phi_i) settings."""
        if not hasattr(self, "amplitude_"):
            raise RuntimeError("fit the estimator before calling predict")
        X = np.asarray(X, dtype=float)
        params = np.array([
            self.amplitude_, self.visibility_pol_, self.alpha_offset_deg_,
            self.visibility_et_, self.phi_offset_rad_,
        ])
        return _fringe_model(params, X[:, 0], X[:, 1])

    @staticmethod
    def _check_grid(values: np.ndarray, period: float, label: str) -> None:
        unique = np.unique(values)
        if unique.size < 5:
            raise DegenerateGridError(
                f"{label} grid needs at least 5 distinct values, got {unique.size}"
            )
        span = float(unique.max() - unique.min())
        step = float(np.median(np.diff(unique)))
        if span + step < period - 1e-9:
            raise DegenerateGridError(
                f"{label} grid spans {span:.6g}, less than one period {period:.6g}"
            )


def fit_fringes(records: Sequence[CountRecord], use_corrected: bool = True,
                **fitter_params) -> FringeSurfaceFitter:
    """Fit a fringe surface to records sharing one signal-side setting.

    Uses dark-corrected counts by default; raw counts with
    ``use_corrected=False``.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to fit")
    ref = records[0].setting
    for rec in records:
        if (rec.setting.alpha_s, rec.setting.phi_s) != (ref.alpha_s, ref.phi_s):
            raise ValueError("fringe records must share the signal-side setting")
    X = np.array([[rec.setting.alpha_i, rec.setting.phi_i] for rec in records])
    y = np.array([rec.corrected if use_corrected else rec.raw for rec in records], dtype=float)
    return FringeSurfaceFitter(**fitter_params).fit(X, y)
