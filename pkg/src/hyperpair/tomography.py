"""Maximum-likelihood density-matrix reconstruction from count data.

The estimator maximizes the multinomial log-likelihood sum(n_j log p_j),
p_j = Tr(rho E_j), over valid density operators.  Positivity and unit trace
hold by construction: the iterate is always of the form G^dag G normalized
to unit trace, updated by the expectation-maximization-style fixed-point map

    rho  <-  R rho R / Tr(R rho R),     R = sum_j (n_j / p_j) E_j,

with a diluted fallback (R mixed toward the identity) whenever the full
step would decrease the likelihood, so the likelihood is non-decreasing
across accepted iterations.

Measurement sets
----------------
Two builders are provided.  ``analyzer_settings_effects`` derives effects
from joint analyzer settings (the quad plus canonical single-DOF bases);
linear polarizers and interferometer phases only reach two bases per
qubit, so this set spans a proper subspace of the operator space and the
fit warns about the reduced rank.  ``pauli_effects`` is the per-qubit
three-basis product set (81 settings for two photons in two DOFs), which is
informationally complete and is used by the bundled campaigns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .measurement import (
    DEFAULT_ANALYZER,
    OUTCOME_TUPLES,
    AnalyzerConfig,
    JointSetting,
    SettingQuad,
    joint_effect,
)
from .states import dagger
from .validation import check_density_operator, check_state_vector

PROBABILITY_FLOOR = 1e-12


class ReducedRankWarning(UserWarning):
    """The measurement effects span less than the full operator space."""


class TomographyError(RuntimeError):
    pass


@dataclass(frozen=True)
class TomographyDataset:
    """Measurement effects with observed counts, grouped by setting.

    ``effects`` has shape (n, d, d); ``counts`` the matching observations
    (float so exact probabilities can stand in for infinite statistics);
    ``setting_index`` groups effects that form one complete measurement.
    """

    effects: np.ndarray
    counts: np.ndarray
    setting_index: np.ndarray

    def __post_init__(self):
        effects = np.asarray(self.effects, dtype=complex)
        counts = np.asarray(self.counts, dtype=float)
        groups = np.asarray(self.setting_index, dtype=int)
        if effects.ndim != 3 or effects.shape[1] != effects.shape[2]:
            raise ValueError(f"effects must have shape (n, d, d), got {effects.shape}")
        if counts.shape != (effects.shape[0],) or groups.shape != (effects.shape[0],):
            raise ValueError("effects, counts, and setting_index lengths differ")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        herm = np.max(np.abs(effects - effects.conj().transpose(0, 2, 1)))
        if herm > 1e-9:
            raise ValueError("effects must be Hermitian")
        eigs = np.linalg.eigvalsh(effects)
        if eigs.min() < -1e-9 or eigs.max() > 1.0 + 1e-9:
            raise ValueError("effects must be positive with eigenvalues <= 1")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "setting_index", groups)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def n_settings(self) -> int:
        return int(self.setting_index.max()) + 1 if self.setting_index.size else 0

    def trials(self) -> np.ndarray:
        """Total counts per setting group."""
        return np.bincount(self.setting_index, weights=self.counts,
                           minlength=self.n_settings)

    def operator_span_rank(self) -> int:
        """Dimension of the real operator subspace spanned by the effects."""
        d = self.dim
        flat = self.effects.reshape(self.effects.shape[0], d * d)
        stacked = np.concatenate([flat.real, flat.imag], axis=1)
        return int(np.linalg.matrix_rank(stacked, tol=1e-9))


def analyzer_settings_effects(settings: Sequence[JointSetting],
                              config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """Effects (n_settings, 16, 16, 16) of joint analyzer settings.

    Outcome ordering within a setting follows ``measurement.OUTCOME_TUPLES``.
    """
    out = np.empty((len(settings), 16, 16, 16), dtype=complex)
    for s, setting in enumerate(settings):
        for k, outcomes in enumerate(OUTCOME_TUPLES):
            out[s, k] = joint_effect(setting, outcomes, config)
    return out


def quad_plus_single_dof_settings(quad: SettingQuad = SettingQuad()) -> list[JointSetting]:
    """The 16 quad combinations plus four canonical-basis settings.

    The extra settings measure both parties in the H/V and diagonal
    polarization bases crossed with the two canonical phase bases.  Note
    this set is not informationally complete (linear analyzers reach only
    two bases per qubit); reconstructions from it warn about reduced rank.
    """
    settings = [quad.setting(r, c) for r in range(4) for c in range(4)]
    settings.extend([
        JointSetting(alpha_s=0.0, alpha_i=0.0, phi_s=0.0, phi_i=0.0),
        JointSetting(alpha_s=0.0, alpha_i=0.0, phi_s=math.pi / 2, phi_i=math.pi / 2),
        JointSetting(alpha_s=45.0, alpha_i=45.0, phi_s=0.0, phi_i=0.0),
        JointSetting(alpha_s=45.0, alpha_i=45.0, phi_s=math.pi / 2, phi_i=math.pi / 2),
    ])
    return settings


_PAULI_EIGENBASES = {
    "z": np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex),
    "x": np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0),
    "y": np.array([[1.0, 1.0], [1.0j, -1.0j]], dtype=complex) / math.sqrt(2.0),
}


def pauli_settings() -> list[tuple[str, str, str, str]]:
    """All 81 per-qubit basis choices over (pol_s, time_s, pol_i, time_i)."""
    return list(product("zxy", repeat=4))


def pauli_effects(bases: Sequence[str]) -> np.ndarray:
    """The 16 product projectors of one per-qubit basis choice, (16, 16, 16)."""
    if len(bases) != 4:
        raise ValueError("need one basis label per qubit (four total)")
    single = []
    for label in bases:
        basis = _PAULI_EIGENBASES[label]
        single.append([np.outer(basis[:, k], basis[:, k].conj()) for k in range(2)])
    out = np.empty((16, 16, 16), dtype=complex)
    for k, bits in enumerate(product((0, 1), repeat=4)):
        effect = single[0][bits[0]]
        for q in range(1, 4):
            effect = np.kron(effect, single[q][bits[q]])
        out[k] = effect
    return out


def dataset_from_outcome_counts(effects_by_setting: np.ndarray,
                                counts_by_setting: np.ndarray) -> TomographyDataset:
    """Flatten per-setting effect/count blocks into a dataset."""
    effects = np.asarray(effects_by_setting, dtype=complex)
    counts = np.asarray(counts_by_setting, dtype=float)
    if effects.shape[:2] != counts.shape:
        raise ValueError("effects and counts disagree on (n_settings, n_outcomes)")
    n_settings, n_outcomes = counts.shape
    groups = np.repeat(np.arange(n_settings), n_outcomes)
    d = effects.shape[-1]
    return TomographyDataset(effects=effects.reshape(-1, d, d),
                             counts=counts.reshape(-1), setting_index=groups)


def dataset_from_records(records, config: AnalyzerConfig = DEFAULT_ANALYZER,
                         use_corrected: bool = True) -> TomographyDataset:
    """Dataset from count records (one record per setting and outcome)."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    settings: list[JointSetting] = []
    index = {}
    for rec in records:
        if rec.setting not in index:
            index[rec.setting] = len(settings)
            settings.append(rec.setting)
    effects = np.empty((len(records), 16, 16), dtype=complex)
    counts = np.empty(len(records))
    groups = np.empty(len(records), dtype=int)
    for k, rec in enumerate(records):
        effects[k] = joint_effect(rec.setting, rec.outcomes, config)
        counts[k] = rec.corrected if use_corrected else rec.raw
        groups[k] = index[rec.setting]
    return TomographyDataset(effects=effects, counts=counts, setting_index=groups)


def expected_probabilities(rho, effects: np.ndarray) -> np.ndarray:
    """Born probabilities Tr(rho E_j) for a stack of effects."""
    mat = np.asarray(rho, dtype=complex)
    flat = np.asarray(effects, dtype=complex).transpose(0, 2, 1).reshape(effects.shape[0], -1)
    return np.real(flat @ mat.reshape(-1))


def exact_dataset(rho, effects_by_setting: np.ndarray) -> TomographyDataset:
    """Dataset whose counts are the exact outcome probabilities.

    Emulates the infinite-statistics limit: the maximizer of the likelihood
    is the state itself (up to the effect span).
    """
    mat = check_density_operator(rho)
    n_settings, n_outcomes, d, _ = np.asarray(effects_by_setting).shape
    counts = expected_probabilities(mat, np.asarray(effects_by_setting).reshape(-1, d, d))
    return dataset_from_outcome_counts(effects_by_setting,
                                       counts.reshape(n_settings, n_outcomes))


def sampled_dataset(rho, effects_by_setting: np.ndarray, shots: int,
                    seed: int = 0) -> TomographyDataset:
    """Multinomial counts with ``shots`` trials per setting."""
    mat = check_density_operator(rho)
    effects = np.asarray(effects_by_setting, dtype=complex)
    n_settings, n_outcomes, d, _ = effects.shape
    counts = np.empty((n_settings, n_outcomes))
    for s in range(n_settings):
        probs = np.clip(expected_probabilities(mat, effects[s]), 0.0, None)
        probs /= probs.sum()
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(s,)))
        counts[s] = rng.multinomial(int(shots), probs)
    return dataset_from_outcome_counts(effects, counts)


def loglikelihood(rho, dataset: TomographyDataset,
                  floor: float = PROBABILITY_FLOOR) -> float:
    """Multinomial log-likelihood sum(n_j log p_j), up to the count-only
    normalization constant.

    Probabilities below ``floor`` are floored to keep the value finite when
    an effect with observed counts has (numerically) zero probability.
    """
    probs = expected_probabilities(rho, dataset.effects)
    return float(dataset.counts @ np.log(np.maximum(probs, floor)))


def loglikelihood_gradient(factor: np.ndarray, dataset: TomographyDataset,
                           floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    """Gradient of the log-likelihood in the rho = G^dag G / Tr parameterization.

    Returns a complex matrix whose real and imaginary parts are the partial
    derivatives with respect to the real and imaginary parts of G.
    """
    g = np.asarray(factor, dtype=complex)
    gram = dagger(g) @ g
    tau = float(np.real(np.trace(gram)))
    rho = gram / tau
    probs = np.maximum(expected_probabilities(rho, dataset.effects), floor)
    weights = dataset.counts / probs
    r_op = np.einsum("j,jkl->kl", weights, dataset.effects)
    wirtinger = (g @ r_op - float(dataset.counts.sum()) * g) / tau
    return 2.0 * wirtinger


class DensityMatrixMLE(BaseEstimator):
    """Maximum-likelihood density-operator estimator.

    Parameters
    ----------
    tol : float
        Convergence threshold on the likelihood gain per iteration and on
        the fixed-point residual.
    max_iter : int
        Iteration budget.
    probability_floor : float
        Floor applied to outcome probabilities inside the likelihood.
    allow_deficient : bool
        Acknowledge a reconstruction from effects that span less than the
        full operator space; suppresses the ``ReducedRankWarning``.

    Attributes
    ----------
    rho_ : ndarray
        The reconstructed density operator (Hermitian, unit trace, PSD by
        construction).
    log_likelihood_ : float
    n_iter_ : int
    converged_ : bool
    operator_span_rank_ : int
    """

    def __init__(self, tol: float = 1e-10, max_iter: int = 100_000,
                 probability_floor: float = PROBABILITY_FLOOR,
                 allow_deficient: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.probability_floor = probability_floor
        self.allow_deficient = allow_deficient

    def fit(self, dataset: TomographyDataset, y=None, rho0: np.ndarray | None = None):
        """Run the ascent from a linear-inversion start (or ``rho0``).

        The convergence test compares the per-count likelihood gain and the
        fixed-point residual against ``tol``; normalizing the gain by the
        total counts makes the stopping rule (and hence the returned
        iterate) exactly invariant under rescaling all counts.
        """
        if not isinstance(dataset, TomographyDataset):
            raise TypeError("fit expects a TomographyDataset")
        d = dataset.dim
        rank = dataset.operator_span_rank()
        self.operator_span_rank_ = rank
        if rank < d * d and not self.allow_deficient:
            warnings.warn(
                f"measurement effects span {rank} of {d * d} operator dimensions; "
                "the reconstruction is only determined on that subspace",
                ReducedRankWarning,
            )

        total = float(dataset.counts.sum())
        if total <= 0.0:
            raise ValueError("dataset carries no counts")
        counts = dataset.counts / total  # scale-invariant weights
        floor = self.probability_floor

        # Real-arithmetic views of the effect stack for fast Born products.
        effects_re = np.ascontiguousarray(dataset.effects.real.reshape(-1, d * d))
        effects_im = np.ascontiguousarray(dataset.effects.imag.reshape(-1, d * d))
        effects_re_t = np.ascontiguousarray(effects_re.T)
        effects_im_t = np.ascontiguousarray(effects_im.T)

        def probabilities(mat):
            flipped = mat.T
            probs = effects_re @ flipped.real.ravel() - effects_im @ flipped.imag.ravel()
            return np.maximum(probs, floor)

        def log_lik_of(mat):
            return float(counts @ np.log(probabilities(mat)))

        if rho0 is not None:
            rho = np.asarray(rho0, dtype=complex).copy()
        else:
            rho = self._linear_inversion_start(dataset)
        log_lik = log_lik_of(rho)
        path = [log_lik]
        converged = False
        n_iter = 0
        identity = np.eye(d)
        for n_iter in range(1, self.max_iter + 1):
            weights = counts / probabilities(rho)
            r_op = (effects_re_t @ weights + 1j * (effects_im_t @ weights)).reshape(d, d)
            r_op = (r_op + dagger(r_op)) / 2.0

            candidate = r_op @ rho @ r_op
            candidate /= np.real(np.trace(candidate))
            cand_log_lik = log_lik_of(candidate)
            if cand_log_lik < log_lik:
                # Diluted step: mix the update operator toward the identity
                # until the likelihood stops decreasing.
                eta = 0.5
                while eta > 1e-8:
                    mixed = (1.0 - eta) * identity + eta * r_op
                    candidate = mixed @ rho @ mixed
                    candidate /= np.real(np.trace(candidate))
                    cand_log_lik = log_lik_of(candidate)
                    if cand_log_lik >= log_lik:
                        break
                    eta /= 2.0
                if cand_log_lik < log_lik:
                    converged = True
                    break
            gain = cand_log_lik - log_lik
            residual = float(np.linalg.norm(candidate - rho))
            rho = candidate
            log_lik = cand_log_lik
            path.append(log_lik)
            if gain < self.tol or residual < self.tol:
                converged = True
                break

        self.rho_ = (rho + dagger(rho)) / 2.0
        self.log_likelihood_ = log_lik * total
        self.log_likelihood_path_ = np.asarray(path) * total
        self.n_iter_ = n_iter
        self.converged_ = converged
        return self

    def _linear_inversion_start(self, dataset: TomographyDataset) -> np.ndarray:
        """Least-squares inversion of the observed frequencies, clipped PSD.

        Solves min ||p(rho) - f||_2 over (non-physical) matrices, then
        restores Hermiticity, floors the spectrum, and normalizes.  For
        rank-deficient effect sets this is the minimum-norm solution on the
        spanned subspace.
        """
        d = dataset.dim
        trials = dataset.trials()[dataset.setting_index]
        safe = np.maximum(trials, 1e-300)
        freq = dataset.counts / safe
        design = dataset.effects.transpose(0, 2, 1).reshape(-1, d * d)
        solution, *_ = np.linalg.lstsq(design, freq.astype(complex), rcond=None)
        rho = solution.reshape(d, d)
        rho = (rho + dagger(rho)) / 2.0
        eigvals, eigvecs = np.linalg.eigh(rho)
        eigvals = np.maximum(eigvals, 1e-12)
        rho = (eigvecs * eigvals) @ dagger(eigvecs)
        return rho / np.real(np.trace(rho))

    def predict(self, effects: np.ndarray) -> np.ndarray:
        """Born probabilities of the reconstructed state for given effects."""
        if not hasattr(self, "rho_"):
            raise RuntimeError("fit the estimator before calling predict")
        return expected_probabilities(self.rho_, np.asarray(effects, dtype=complex))


@dataclass(frozen=True)
class MleResult:
    """Reconstruction summary."""

    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    operator_span_rank: int
    fidelity_interval: tuple[float, float] | None = None


def mle_reconstruct(dataset: TomographyDataset, tol: float = 1e-10,
                    max_iter: int = 100_000, allow_deficient: bool = False,
                    rho0: np.ndarray | None = None) -> MleResult:
    """Functional wrapper around ``DensityMatrixMLE``.

    Non-convergence is reported through ``converged``, with the best iterate
    returned.
    """
    est = DensityMatrixMLE(tol=tol, max_iter=max_iter,
                           allow_deficient=allow_deficient).fit(dataset, rho0=rho0)
    return MleResult(rho=est.rho_, log_likelihood=est.log_likelihood_,
                     iterations=est.n_iter_, converged=est.converged_,
                     operator_span_rank=est.operator_span_rank_)


@dataclass(frozen=True)
class BootstrapInterval:
    """Percentile bootstrap interval of the fidelity to a target state."""

    low: float
    high: float
    fidelities: np.ndarray
    n_failed: int


def bootstrap_fidelity(dataset: TomographyDataset, target, resamples: int = 200,
                       seed: int = 0, alpha: float = 0.05, tol: float = 1e-10,
                       max_iter: int = 100_000,
                       allow_deficient: bool = False) -> BootstrapInterval:
    """Bootstrap the reconstruction fidelity by Poisson-resampling the counts.

    Each resample redraws every count as Poisson(n_j), refits (warm-started
    from the point estimate for speed; the maximizer does not depend on the
    start), and evaluates <target|rho|target>.  Resamples whose fit does not
    converge are excluded and reported in ``n_failed``.
    """
    if resamples < 100:
        raise ValueError(f"resamples must be >= 100, got {resamples}")
    target_vec = check_state_vector(target, dim=dataset.dim)
    point = mle_reconstruct(dataset, tol=tol, max_iter=max_iter,
                            allow_deficient=allow_deficient)
    # Warm start strictly inside the simplex so zero eigenvalues cannot pin
    # resampled fits.
    start = 0.99 * point.rho + 0.01 * np.eye(dataset.dim) / dataset.dim

    fidelities = []
    n_failed = 0
    for k in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))
        counts = rng.poisson(dataset.counts).astype(float)
        if counts.sum() == 0:
            n_failed += 1
            continue
        resampled = TomographyDataset(effects=dataset.effects, counts=counts,
                                      setting_index=dataset.setting_index)
        result = mle_reconstruct(resampled, tol=tol, max_iter=max_iter,
                                 allow_deficient=True, rho0=start)
        if not result.converged:
            n_failed += 1
            continue
        fidelities.append(float(np.real(target_vec.conj() @ result.rho @ target_vec)))
    if not fidelities:
        raise TomographyError("all bootstrap resamples failed to converge")
    values = np.sort(np.asarray(fidelities))
    low, high = np.percentile(values, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return BootstrapInterval(low=float(low), high=float(high),
                             fidelities=values, n_failed=n_failed)


def save_density_matrix(path, rho) -> None:
    """Write a complex matrix as plain text: one row per line, entries 're,im'."""
    mat = np.asarray(rho, dtype=complex)
    lines = [f"# complex matrix {mat.shape[0]} {mat.shape[1]}"]
    for row in mat:
        lines.append(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_density_matrix(path) -> np.ndarray:
    """Read a matrix written by ``save_density_matrix``."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split()
    if header[:3] != ["#", "complex", "matrix"]:
        raise ValueError(f"{path}: not a complex-matrix file")
    rows, cols = int(header[3]), int(header[4])
    if len(lines) - 1 != rows:
        raise ValueError(f"{path}: expected {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=complex)
    for r, line in enumerate(lines[1:]):
        entries = line.split()
        if len(entries) != cols:
            raise ValueError(f"{path}: row {r} has {len(entries)} entries, expected {cols}")
        for c, token in enumerate(entries):
            re_part, im_part = token.split(",")
            out[r, c] = complex(float(re_part), float(im_part))
    return out
