"""States and dense linear algebra for a polarization x time-bin photon pair.

Basis convention
----------------
The joint Hilbert space of one photon pair is ordered as

    (pol_s, time_s, pol_i, time_i)

with the signal factors first and the most significant factor leftmost,
i.e. basis index = ((pol_s * 2 + time_s) * 2 + pol_i) * 2 + time_i.
Single-factor labels are H=0, V=1 for polarization and E=0 (early),
L=1 (late) for the time bin.  Single-DOF four-dimensional states use the
(pol_s, pol_i) or (time_s, time_i) ordering; see the constructors below.

Because the party cut (signal: factors 0,1 / idler: factors 2,3) is not
contiguous with the DOF cut (polarization: factors 0,2 / time: factors 1,3),
helpers are provided to combine per-DOF operators into the interleaved
16-dimensional ordering and to trace a DOF out.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .validation import (
    EIGENVALUE_FLOOR,
    check_density_operator,
    check_state_vector,
    check_unit_interval,
)

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_EARLY = np.array([1.0, 0.0], dtype=complex)
KET_LATE = np.array([0.0, 1.0], dtype=complex)

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

#: Labels of the 16 joint basis states in index order, e.g. "HEHE" is
#: |H>_s |E>_s |H>_i |E>_i.
BASIS_LABELS = tuple(
    f"{p_s}{t_s}{p_i}{t_i}"
    for p_s, t_s, p_i, t_i in product("HV", "EL", "HV", "EL")
)


def basis_index(pol_s: int, time_s: int, pol_i: int, time_i: int) -> int:
    """Index of the joint basis state with the given single-factor labels."""
    return ((pol_s * 2 + time_s) * 2 + pol_i) * 2 + time_i


def dagger(matrix) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(matrix).conj().T


def tensor(*factors) -> np.ndarray:
    """Kronecker product of the given matrices or vectors, leftmost first."""
    if not factors:
        raise ValueError("tensor() needs at least one factor")
    out = np.asarray(factors[0], dtype=complex)
    for factor in factors[1:]:
        out = np.kron(out, np.asarray(factor, dtype=complex))
    return out


def trace(matrix) -> complex:
    """Matrix trace."""
    mat = np.asarray(matrix)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"trace needs a square matrix, got shape {mat.shape}")
    return complex(np.trace(mat))


def pure_density(state) -> np.ndarray:
    """Projector |psi><psi| of a (validated) state vector."""
    vec = check_state_vector(state)
    return np.outer(vec, vec.conj())


def eigen_floor_check(rho, floor: float = EIGENVALUE_FLOOR) -> bool:
    """True iff the minimum eigenvalue of the Hermitian part is >= floor."""
    mat = np.asarray(rho, dtype=complex)
    herm = (mat + mat.conj().T) / 2.0
    return bool(np.linalg.eigvalsh(herm)[0] >= floor)


def dof_product(op_pol: np.ndarray, op_et: np.ndarray) -> np.ndarray:
    """Combine a (pol_s, pol_i) operator and a (time_s, time_i) operator.

    Returns the 16x16 operator acting on the interleaved joint ordering
    (pol_s, time_s, pol_i, time_i).
    """
    op_pol = np.asarray(op_pol, dtype=complex).reshape(2, 2, 2, 2)
    op_et = np.asarray(op_et, dtype=complex).reshape(2, 2, 2, 2)
    # indices: pol (p, r | P, R), time (q, s | Q, S) -> (pqrs | PQRS)
    joint = np.einsum("prPR,qsQS->pqrsPQRS", op_pol, op_et)
    return joint.reshape(16, 16)


def partial_trace_time(rho16) -> np.ndarray:
    """Trace out both time bins, returning the (pol_s, pol_i) operator."""
    mat = np.asarray(rho16, dtype=complex).reshape((2,) * 8)
    return np.einsum("pqrsPqRs->prPR", mat).reshape(4, 4)


def partial_trace_pol(rho16) -> np.ndarray:
    """Trace out both polarizations, returning the (time_s, time_i) operator."""
    mat = np.asarray(rho16, dtype=complex).reshape((2,) * 8)
    return np.einsum("pqrspQrS->qsQS", mat).reshape(4, 4)


def hyperentangled_state(phase_sum: float = 0.0) -> np.ndarray:
    """Ideal hyperentangled pair state on the 16-dimensional joint space.

    The state is (|EE> + e^{i*phase_sum}|LL>) (x) (|HH> + |VV>) / 2, where
    ``phase_sum`` is the accumulated interferometer phase on the late-late
    branch.  All four nonzero amplitudes have magnitude 1/2.
    """
    vec = np.zeros(16, dtype=complex)
    late_phase = np.exp(1j * float(phase_sum))
    for pol in (0, 1):
        vec[basis_index(pol, 0, pol, 0)] = 0.5
        vec[basis_index(pol, 1, pol, 1)] = 0.5 * late_phase
    return vec


def polarization_bell_state() -> np.ndarray:
    """(|HH> + |VV>) / sqrt(2) on the (pol_s, pol_i) four-dimensional space."""
    vec = np.zeros(4, dtype=complex)
    vec[0] = vec[3] = 1.0 / np.sqrt(2.0)
    return vec


def time_bin_bell_state(phase_sum: float = 0.0) -> np.ndarray:
    """(|EE> + e^{i*phase_sum}|LL>) / sqrt(2) on the (time_s, time_i) space."""
    vec = np.zeros(4, dtype=complex)
    vec[0] = 1.0 / np.sqrt(2.0)
    vec[3] = np.exp(1j * float(phase_sum)) / np.sqrt(2.0)
    return vec


@dataclass(frozen=True)
class NoiseModel:
    """Parameterized imperfections of the pair source and analyzers.

    Parameters
    ----------
    phase_jitter_sigma : float
        Std dev (radians) of Gaussian jitter on the summed interferometer
        phase.  Damps the early-early/late-late coherence by exp(-sigma^2/2).
    pump_imbalance : float
        Offset epsilon of the |HH> vs |VV> pair contribution probabilities,
        populations 1/2 +/- epsilon, coherence sqrt(1 - 4 epsilon^2) / 2.
    white_noise_weight : float
        Weight w of an admixed maximally mixed state.
    visibility_pol, visibility_et : float
        Per-DOF visibility overrides.  A visibility V replaces the state by
        the V-weighted mixture with a maximally mixed DOF, so every
        correlator of that DOF scales by exactly V.
    """

    phase_jitter_sigma: float = 0.0
    pump_imbalance: float = 0.0
    white_noise_weight: float = 0.0
    visibility_pol: float = 1.0
    visibility_et: float = 1.0

    def __post_init__(self):
        if self.phase_jitter_sigma < 0.0:
            raise ValueError(f"phase_jitter_sigma must be >= 0, got {self.phase_jitter_sigma!r}")
        if not -0.5 <= self.pump_imbalance <= 0.5:
            raise ValueError(f"pump_imbalance must lie in [-1/2, 1/2], got {self.pump_imbalance!r}")
        check_unit_interval("white_noise_weight", self.white_noise_weight)
        check_unit_interval("visibility_pol", self.visibility_pol)
        check_unit_interval("visibility_et", self.visibility_et)

    @property
    def dephasing_factor(self) -> float:
        """Gaussian average <e^{i delta}> = exp(-sigma^2 / 2) of the jitter."""
        return float(np.exp(-0.5 * self.phase_jitter_sigma**2))


def _time_pair_labels():
    idx = np.arange(16)
    time_s = (idx >> 2) & 1
    time_i = idx & 1
    return time_s * 2 + time_i


def _pol_pair_labels():
    idx = np.arange(16)
    pol_s = (idx >> 3) & 1
    pol_i = (idx >> 1) & 1
    return pol_s * 2 + pol_i


def _schur_dephase(rho: np.ndarray, group: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """Schur-multiply rho by sqrt(f_g f_h) over group labels (CP for f >= 0)."""
    scale = np.sqrt(factors[group])
    return rho * np.outer(scale, scale)


def _jitter_mask(labels: np.ndarray, factor: float, late_label: int = 3) -> np.ndarray:
    late = labels == late_label
    mask = np.where(late[:, None] ^ late[None, :], factor, 1.0)
    return mask


def _replace_time_with_mixed(rho16: np.ndarray) -> np.ndarray:
    pol = partial_trace_time(rho16)
    return dof_product(pol, np.eye(4, dtype=complex) / 4.0)


def _replace_pol_with_mixed(rho16: np.ndarray) -> np.ndarray:
    et = partial_trace_pol(rho16)
    return dof_product(np.eye(4, dtype=complex) / 4.0, et)


def apply_noise(state, model: NoiseModel, dof: str | None = None) -> np.ndarray:
    """Turn a pure state into the density operator under the noise model.

    ``state`` is either the 16-dimensional hyperentangled state or a
    4-dimensional single-DOF state, in which case ``dof`` must name the
    degree of freedom ("pol" or "et") and the other DOF's noise parameters
    must be left at their no-op defaults.

    The all-zero model returns the exact pure projector.
    """
    vec = check_state_vector(state)
    if vec.size == 16:
        if dof not in (None, "hyper"):
            raise ValueError(f"16-dimensional states take dof=None, got {dof!r}")
        return _apply_noise_hyper(vec, model)
    if vec.size == 4:
        if dof not in ("pol", "et"):
            raise ValueError("4-dimensional states need dof='pol' or dof='et'")
        return _apply_noise_single(vec, model, dof)
    raise ValueError(f"unsupported state dimension {vec.size}")


def _imbalance_weights(epsilon: float) -> np.ndarray:
    # pair labels: 0 = HH, 1 = HV, 2 = VH, 3 = VV
    return np.array([1.0 + 2.0 * epsilon, 1.0, 1.0, 1.0 - 2.0 * epsilon])


def _apply_noise_hyper(vec: np.ndarray, model: NoiseModel) -> np.ndarray:
    rho = np.outer(vec, vec.conj())
    rho *= _jitter_mask(_time_pair_labels(), model.dephasing_factor)
    if model.pump_imbalance != 0.0:
        rho = _schur_dephase(rho, _pol_pair_labels(), _imbalance_weights(model.pump_imbalance))
        rho /= np.trace(rho).real
    if model.visibility_et < 1.0:
        rho = model.visibility_et * rho + (1.0 - model.visibility_et) * _replace_time_with_mixed(rho)
    if model.visibility_pol < 1.0:
        rho = model.visibility_pol * rho + (1.0 - model.visibility_pol) * _replace_pol_with_mixed(rho)
    if model.white_noise_weight > 0.0:
        rho = (1.0 - model.white_noise_weight) * rho + model.white_noise_weight * np.eye(16) / 16.0
    return rho


def _apply_noise_single(vec: np.ndarray, model: NoiseModel, dof: str) -> np.ndarray:
    rho = np.outer(vec, vec.conj())
    if dof == "pol":
        if model.phase_jitter_sigma != 0.0 or model.visibility_et != 1.0:
            raise ValueError("time-bin noise parameters are undefined for a polarization-only state")
        if model.pump_imbalance != 0.0:
            rho = _schur_dephase(rho, np.arange(4), _imbalance_weights(model.pump_imbalance))
            rho /= np.trace(rho).real
        visibility = model.visibility_pol
    else:
        if model.pump_imbalance != 0.0 or model.visibility_pol != 1.0:
            raise ValueError("polarization noise parameters are undefined for a time-bin-only state")
        rho *= _jitter_mask(np.arange(4), model.dephasing_factor)
        visibility = model.visibility_et
    if visibility < 1.0:
        rho = visibility * rho + (1.0 - visibility) * np.eye(4) / 4.0
    if model.white_noise_weight > 0.0:
        rho = (1.0 - model.white_noise_weight) * rho + model.white_noise_weight * np.eye(4) / 4.0
    return rho


def fidelity(rho, target) -> float:
    """Overlap <target|rho|target> with a pure target state.

    ``rho`` may be a density operator or a second pure state, in which case
    the squared inner product |<rho|target>|^2 is returned.
    """
    target_vec = check_state_vector(target)
    mat = np.asarray(rho, dtype=complex)
    if mat.ndim == 1:
        vec = check_state_vector(mat)
        if vec.size != target_vec.size:
            raise ValueError(f"dimension mismatch: {vec.size} vs {target_vec.size}")
        value = abs(np.vdot(vec, target_vec)) ** 2
    else:
        mat = check_density_operator(mat)
        if mat.shape[0] != target_vec.size:
            raise ValueError(f"dimension mismatch: {mat.shape[0]} vs {target_vec.size}")
        value = float(np.real(target_vec.conj() @ mat @ target_vec))
    return float(min(1.0, max(0.0, value)))
