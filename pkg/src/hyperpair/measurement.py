"""Analyzer-chain measurement model and Bell-operator evaluation.

Each party's analyzer chain is a polarization projection (half-wave plate +
polarizing beam splitter) followed by an unbalanced interferometer whose
central time slot is post-selected.  Within the post-selected ensemble the
chain realizes, per party, a pair of dichotomic (+1/-1) measurements:

* polarization: projector onto cos(alpha)|H> + sin(alpha)|V> (+1) or its
  orthogonal complement (-1), with alpha in degrees;
* time bin: projector onto (|E> + e^{i phi}|L>) / sqrt(2) (+1) or its
  complement (-1), with phi in radians.

Outcome sign convention: beam-splitter transmit = +1, reflect = -1, and the
two interferometer output ports of the central slot are +1/-1 analogously.

Angle convention: with ``pol_sign_convention = "sum"`` (default) the idler
polarization analysis axis is mirrored (alpha_i -> -alpha_i), so the ideal
polarization correlator is cos(2(alpha_s + alpha_i)); ``"difference"``
keeps the unmirrored cos(2(alpha_s - alpha_i)) form.  Wave-plate analyzers
can realize either; the sum form matches the published correlation tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .states import KET_H, KET_V
from .validation import check_density_operator, check_positive

#: Sign weighting (one negative, three positive) that maximizes the Bell
#: value of the ideal state at the standard quad settings.
DEFAULT_BELL_SIGNS = (-1, 1, 1, 1)

#: Standard CHSH weighting.
DEFAULT_CHSH_SIGNS = (1, 1, 1, -1)

#: Minimum ratio of interferometer imbalance to single-photon coherence
#: time for the post-selection model to be valid.
FRANSON_MIN_IMBALANCE_RATIO = 10.0

#: Fraction of coincidences that land in the post-selected central slot.
CENTRAL_SLOT_WEIGHT = 0.5

#: The 16 joint outcome sign tuples (pol_s, et_s, pol_i, et_i), index order
#: used by ``outcome_probabilities``.
OUTCOME_TUPLES = tuple(product((1, -1), repeat=4))


class FransonConfigError(ValueError):
    """Analyzer configuration violates the post-selection validity checks."""


@dataclass(frozen=True)
class JointSetting:
    """One joint analyzer setting: pol angles in degrees, phases in radians.

    Angles are normalized to [0, 180) and phases to [0, 2*pi).
    """

    alpha_s: float = 0.0
    alpha_i: float = 0.0
    phi_s: float = 0.0
    phi_i: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_s", float(self.alpha_s) % 180.0)
        object.__setattr__(self, "alpha_i", float(self.alpha_i) % 180.0)
        object.__setattr__(self, "phi_s", float(self.phi_s) % (2.0 * math.pi))
        object.__setattr__(self, "phi_i", float(self.phi_i) % (2.0 * math.pi))


@dataclass(frozen=True)
class SettingQuad:
    """Unprimed and primed settings per party and per DOF.

    The conventional primed offsets are +45 degrees for polarization and
    +pi/2 for the interferometer phase; ``from_base`` applies them.  Rows of
    the correlation table run over the phase pairs (phi_s, phi_i),
    (phi_s, phi_i'), (phi_s', phi_i), (phi_s', phi_i'); columns over the
    analogous polarization pairs.
    """

    alpha_s: float = 0.0
    alpha_s_prime: float = 45.0
    alpha_i: float = 22.5
    alpha_i_prime: float = 67.5
    phi_s: float = 0.0
    phi_s_prime: float = math.pi / 2.0
    phi_i: float = math.pi / 4.0
    phi_i_prime: float = 3.0 * math.pi / 4.0

    @classmethod
    def from_base(cls, alpha_s: float = 0.0, alpha_i: float = 22.5,
                  phi_s: float = 0.0, phi_i: float = math.pi / 4.0) -> "SettingQuad":
        return cls(
            alpha_s=alpha_s, alpha_s_prime=alpha_s + 45.0,
            alpha_i=alpha_i, alpha_i_prime=alpha_i + 45.0,
            phi_s=phi_s, phi_s_prime=phi_s + math.pi / 2.0,
            phi_i=phi_i, phi_i_prime=phi_i + math.pi / 2.0,
        )

    def has_standard_offsets(self, atol: float = 1e-12) -> bool:
        return (
            abs((self.alpha_s_prime - self.alpha_s) % 180.0 - 45.0) <= atol
            and abs((self.alpha_i_prime - self.alpha_i) % 180.0 - 45.0) <= atol
            and abs((self.phi_s_prime - self.phi_s) % (2 * math.pi) - math.pi / 2) <= atol
            and abs((self.phi_i_prime - self.phi_i) % (2 * math.pi) - math.pi / 2) <= atol
        )

    def setting(self, row: int, col: int) -> JointSetting:
        """Joint setting of the correlation-table cell (row, col)."""
        phi_s = self.phi_s if row in (0, 1) else self.phi_s_prime
        phi_i = self.phi_i if row in (0, 2) else self.phi_i_prime
        alpha_s = self.alpha_s if col in (0, 1) else self.alpha_s_prime
        alpha_i = self.alpha_i if col in (0, 2) else self.alpha_i_prime
        return JointSetting(alpha_s=alpha_s, alpha_i=alpha_i, phi_s=phi_s, phi_i=phi_i)

    def settings(self) -> list[list[JointSetting]]:
        return [[self.setting(r, c) for c in range(4)] for r in range(4)]


@dataclass(frozen=True)
class AnalyzerConfig:
    """Interferometer geometry and correlator angle convention.

    ``mi_imbalance_ps`` is the nominal travel-time difference of both
    interferometers, ``mi_mismatch_ps`` the residual difference between the
    two.  Validity requires the mismatch within ``mi_match_tolerance_ps``
    and the imbalance at least ``FRANSON_MIN_IMBALANCE_RATIO`` coherence
    times, so single-photon interference is excluded while two-photon
    interference of the central slot survives.
    """

    mi_imbalance_ps: float = 300.0
    mi_mismatch_ps: float = 0.0
    mi_match_tolerance_ps: float = 0.03
    coherence_time_ps: float = 5.0
    pol_sign_convention: str = "sum"

    def __post_init__(self):
        if self.pol_sign_convention not in ("sum", "difference"):
            raise ValueError(f"pol_sign_convention must be 'sum' or 'difference', got {self.pol_sign_convention!r}")

    def validate(self) -> "AnalyzerConfig":
        check_positive("mi_imbalance_ps", self.mi_imbalance_ps)
        check_positive("coherence_time_ps", self.coherence_time_ps)
        if abs(self.mi_mismatch_ps) > self.mi_match_tolerance_ps:
            raise FransonConfigError(
                f"interferometer mismatch {self.mi_mismatch_ps} ps exceeds the "
                f"matching tolerance {self.mi_match_tolerance_ps} ps"
            )
        if self.mi_imbalance_ps < FRANSON_MIN_IMBALANCE_RATIO * self.coherence_time_ps:
            raise FransonConfigError(
                f"imbalance {self.mi_imbalance_ps} ps is not large against the "
                f"coherence time {self.coherence_time_ps} ps"
            )
        return self


DEFAULT_ANALYZER = AnalyzerConfig()


def pol_effect(alpha_deg: float, outcome: int) -> np.ndarray:
    """Rank-1 polarization effect at analyzer angle ``alpha_deg``.

    The +1 and -1 effects for one angle sum to the identity.
    """
    alpha = math.radians(float(alpha_deg))
    ket = math.cos(alpha) * KET_H + math.sin(alpha) * KET_V
    proj = np.outer(ket, ket.conj())
    return proj if _check_outcome(outcome) > 0 else np.eye(2, dtype=complex) - proj


@dataclass(frozen=True)
class TimeBinEffect:
    """Central-slot time-bin effect plus its post-selection weight."""

    matrix: np.ndarray
    postselection_weight: float = CENTRAL_SLOT_WEIGHT


def et_effect(phi: float, outcome: int, config: AnalyzerConfig = DEFAULT_ANALYZER) -> TimeBinEffect:
    """Post-selected time-bin effect at interferometer phase ``phi``.

    Within the central slot the +1 effect projects onto
    (|E> + e^{i phi}|L>) / sqrt(2); the -1 effect is its complement.  The
    post-selection weight is the fraction of coincidences retained by the
    central slot, for use in absolute-rate accounting.
    """
    config.validate()
    ket = np.array([1.0, np.exp(1j * float(phi))], dtype=complex) / np.sqrt(2.0)
    proj = np.outer(ket, ket.conj())
    matrix = proj if _check_outcome(outcome) > 0 else np.eye(2, dtype=complex) - proj
    return TimeBinEffect(matrix=matrix)


def pol_observable(alpha_deg: float) -> np.ndarray:
    """Dichotomic polarization observable, +1 projector minus -1 projector."""
    return pol_effect(alpha_deg, +1) - pol_effect(alpha_deg, -1)


def time_observable(phi: float, config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """Dichotomic central-slot time-bin observable."""
    return et_effect(phi, +1, config).matrix - et_effect(phi, -1, config).matrix


def _check_outcome(outcome: int) -> int:
    if outcome not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {outcome!r}")
    return outcome


def _idler_angle(alpha_i: float, config: AnalyzerConfig) -> float:
    return -alpha_i if config.pol_sign_convention == "sum" else alpha_i


def joint_effect(setting: JointSetting, outcomes: Sequence[int],
                 config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """16x16 effect for one joint setting and outcome tuple.

    ``outcomes`` are the four signs (pol_s, et_s, pol_i, et_i).
    """
    o_pol_s, o_et_s, o_pol_i, o_et_i = (_check_outcome(o) for o in outcomes)
    factors = (
        pol_effect(setting.alpha_s, o_pol_s),
        et_effect(setting.phi_s, o_et_s, config).matrix,
        pol_effect(_idler_angle(setting.alpha_i, config), o_pol_i),
        et_effect(setting.phi_i, o_et_i, config).matrix,
    )
    out = factors[0]
    for factor in factors[1:]:
        out = np.kron(out, factor)
    return out


def coincidence_probability(rho, setting: JointSetting, outcomes: Sequence[int] = (1, 1, 1, 1),
                            config: AnalyzerConfig = DEFAULT_ANALYZER) -> float:
    """Probability of one joint outcome within the post-selected ensemble.

    The 16 outcome probabilities of a setting sum to one.
    """
    mat = check_density_operator(rho, dim=16)
    effect = joint_effect(setting, outcomes, config)
    return float(np.real(np.trace(mat @ effect)))


def outcome_probabilities(rho, setting: JointSetting,
                          config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """All 16 joint outcome probabilities, ordered like ``OUTCOME_TUPLES``."""
    mat = check_density_operator(rho, dim=16)
    probs = np.empty(16)
    for k, outcomes in enumerate(OUTCOME_TUPLES):
        probs[k] = float(np.real(np.trace(mat @ joint_effect(setting, outcomes, config))))
    return probs


def _joint_observable(setting: JointSetting, config: AnalyzerConfig) -> np.ndarray:
    factors = (
        pol_observable(setting.alpha_s),
        time_observable(setting.phi_s, config),
        pol_observable(_idler_angle(setting.alpha_i, config)),
        time_observable(setting.phi_i, config),
    )
    out = factors[0]
    for factor in factors[1:]:
        out = np.kron(out, factor)
    return out


def correlation(rho, setting: JointSetting, config: AnalyzerConfig = DEFAULT_ANALYZER) -> float:
    """Joint correlator: expectation of the product of all four outcome signs.

    Per party the sign is the product of the polarization and time-bin
    outcomes, so this is the two-party correlator of the combined
    dichotomic observables.
    """
    mat = check_density_operator(rho, dim=16)
    return float(np.real(np.trace(mat @ _joint_observable(setting, config))))


def _single_dof_correlation(rho, obs_s: np.ndarray, obs_i: np.ndarray, interleave_time: bool) -> float:
    mat = np.asarray(rho, dtype=complex)
    if mat.shape == (4, 4):
        observable = np.kron(obs_s, obs_i)
    elif mat.shape == (16, 16):
        eye = np.eye(2, dtype=complex)
        if interleave_time:
            observable = np.kron(np.kron(eye, obs_s), np.kron(eye, obs_i))
        else:
            observable = np.kron(np.kron(obs_s, eye), np.kron(obs_i, eye))
    else:
        raise ValueError(f"expected a 4x4 or 16x16 operator, got shape {mat.shape}")
    mat = check_density_operator(mat)
    return float(np.real(np.trace(mat @ observable)))


def polarization_correlation(rho, alpha_s: float, alpha_i: float,
                             config: AnalyzerConfig = DEFAULT_ANALYZER) -> float:
    """Polarization correlator, marginal over time-bin outcomes."""
    return _single_dof_correlation(
        rho, pol_observable(alpha_s), pol_observable(_idler_angle(alpha_i, config)),
        interleave_time=False,
    )


def time_correlation(rho, phi_s: float, phi_i: float,
                     config: AnalyzerConfig = DEFAULT_ANALYZER) -> float:
    """Time-bin correlator, marginal over polarization outcomes."""
    return _single_dof_correlation(
        rho, time_observable(phi_s, config), time_observable(phi_i, config),
        interleave_time=True,
    )


def correlation_table(rho, quad: SettingQuad = SettingQuad(),
                      config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """4x4 joint correlators over the quad's settings (rows: phase pairs)."""
    mat = check_density_operator(rho, dim=16)
    table = np.empty((4, 4))
    for r in range(4):
        for c in range(4):
            table[r, c] = np.real(np.trace(mat @ _joint_observable(quad.setting(r, c), config)))
    return table


def _check_signs(signs: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(signs, dtype=float)
    if arr.shape != (4,) or not np.all(np.isin(arr, (-1.0, 1.0))):
        raise ValueError(f"{name} must be four signs of +/-1, got {signs!r}")
    return arr


def chsh_value(correlations: Sequence[float], signs: Sequence[int] = DEFAULT_CHSH_SIGNS,
               allow_nonstandard: bool = False) -> float:
    """Signed CHSH sum of four correlators.

    The standard weighting has exactly one sign differing from the other
    three; pass ``allow_nonstandard=True`` to override.  |result| <= 4
    always, and <= 2 for any locally deterministic assignment.
    """
    values = np.asarray(correlations, dtype=float)
    if values.shape != (4,):
        raise ValueError(f"chsh_value needs four correlators, got {correlations!r}")
    arr = _check_signs(signs, "signs")
    if not allow_nonstandard and abs(int(arr.sum())) != 2:
        raise ValueError("CHSH sign pattern must have exactly one differing sign")
    return float(arr @ values)


def generalized_bell_value(table, row_signs: Sequence[int] = DEFAULT_BELL_SIGNS,
                           col_signs: Sequence[int] = DEFAULT_BELL_SIGNS) -> float:
    """Doubly signed sum over a 4x4 correlation table.

    Local-realistic models are bounded by 4; quantum states reach 8.
    """
    values = np.asarray(table, dtype=float)
    if values.shape != (4, 4):
        raise ValueError(f"correlation table must be 4x4, got shape {values.shape}")
    if np.any(np.abs(values) > 1.0 + 1e-9):
        raise ValueError("correlation strengths must lie in [-1, 1]")
    rows = _check_signs(row_signs, "row_signs")
    cols = _check_signs(col_signs, "col_signs")
    return float(rows @ values @ cols)


@dataclass(frozen=True)
class BellScanResult:
    """Bell-value surface over idler settings at fixed signal settings."""

    alpha_grid: np.ndarray
    phi_grid: np.ndarray
    surface: np.ndarray  # shape (len(alpha_grid), len(phi_grid))
    max_value: float = field(init=False)
    argmax_alpha: float = field(init=False)
    argmax_phi: float = field(init=False)

    def __post_init__(self):
        flat = int(np.argmax(self.surface))
        i, j = np.unravel_index(flat, self.surface.shape)
        object.__setattr__(self, "max_value", float(self.surface[i, j]))
        object.__setattr__(self, "argmax_alpha", float(self.alpha_grid[i]))
        object.__setattr__(self, "argmax_phi", float(self.phi_grid[j]))


def bell_scan(rho, alpha_grid, phi_grid, *, alpha_s: float = 0.0, phi_s: float = 0.0,
              row_signs: Sequence[int] = DEFAULT_BELL_SIGNS,
              col_signs: Sequence[int] = DEFAULT_BELL_SIGNS,
              config: AnalyzerConfig = DEFAULT_ANALYZER) -> BellScanResult:
    """Bell value over a grid of idler settings with one fixed weighting.

    For each grid point (alpha_i, phi_i) the quad is completed with the
    standard +45 degree / +pi/2 primed offsets on both parties, the 16
    correlators are evaluated, and the signed sum is formed.  The weighting
    is held fixed across the grid, so the surface is a linear Bell
    functional of the state.
    """
    alpha_grid = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    phi_grid = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    if alpha_grid.size == 0 or phi_grid.size == 0:
        raise ValueError("scan grids must be nonempty")
    mat = check_density_operator(rho, dim=16)
    config.validate()
    rows = _check_signs(row_signs, "row_signs")
    cols = _check_signs(col_signs, "col_signs")

    rho8 = mat.reshape((2,) * 8)
    alice_pol = [pol_observable(alpha_s), pol_observable(alpha_s + 45.0)]
    alice_time = [time_observable(phi_s, config), time_observable(phi_s + math.pi / 2, config)]
    mirror = -1.0 if config.pol_sign_convention == "sum" else 1.0
    bob_pol = np.stack(
        [[pol_observable(mirror * a), pol_observable(mirror * (a + 45.0))] for a in alpha_grid]
    )  # (n_alpha, 2, 2, 2)
    bob_time = np.stack(
        [[time_observable(p, config), time_observable(p + math.pi / 2, config)] for p in phi_grid]
    )  # (n_phi, 2, 2, 2)

    surface = np.zeros((alpha_grid.size, phi_grid.size))
    for r in range(4):
        b_s = alice_time[r // 2]
        bob_t = bob_time[:, r % 2]  # (n_phi, 2, 2)
        for c in range(4):
            a_s = alice_pol[c // 2]
            bob_p = bob_pol[:, c % 2]  # (n_alpha, 2, 2)
            # Tr[rho (A_s x B_s x A_i x B_i)]; lowercase row, uppercase column.
            partial = np.einsum("pqrsPQRS,Pp,Qq->rsRS", rho8, a_s, b_s)
            term = np.einsum("rsRS,xRr,ySs->xy", partial, bob_p, bob_t)
            surface += rows[r] * cols[c] * np.real(term)
    return BellScanResult(alpha_grid=alpha_grid, phi_grid=phi_grid, surface=surface)


def violation_sigmas(bell_value: float, sigma: float) -> float:
    """Standard deviations by which |bell_value| exceeds the local bound 4.

    Floored at zero.  Published tables truncate this ratio toward zero.
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    return max(0.0, (abs(float(bell_value)) - 4.0) / float(sigma))
