"""Desk-scale twin of a fiber source of hyperentangled photon pairs.

The package simulates and analyzes a telecom-wavelength source that is
entangled simultaneously in polarization and in emission time, distributed
over dense-wavelength-division-multiplexed channel pairs: state and noise
modeling, analyzer-chain measurement statistics, Bell-operator evaluation,
stochastic coincidence counting with fringe fitting, maximum-likelihood
state tomography, and the channel-grid rate budget.
"""

from .counts import (
    CountRecord,
    FilterExpansion,
    RunPlan,
    expand_filter_counts,
    quad_sweep_plan,
    records_from_csv,
    records_to_csv,
    sample_outcome_counts,
    simulate_counts,
    subtract_dark,
)
from .dwdm import (
    CapacityReport,
    ChannelPair,
    DetectorSpec,
    ItuChannel,
    LinkBudget,
    RateLimit,
    SpectralEnvelope,
    aggregate_capacity,
    channel_frequency_thz,
    coincidence_rate,
    frequency_to_wavelength_nm,
    max_pair_rate,
    pair_for,
    singles_rate,
    spectrum_weight,
)
from .fringes import (
    DegenerateGridError,
    FitConvergenceError,
    FringeSurfaceFitter,
    fit_fringes,
)
from .measurement import (
    AnalyzerConfig,
    BellScanResult,
    FransonConfigError,
    JointSetting,
    SettingQuad,
    bell_scan,
    chsh_value,
    coincidence_probability,
    correlation,
    correlation_table,
    et_effect,
    generalized_bell_value,
    joint_effect,
    outcome_probabilities,
    pol_effect,
    polarization_correlation,
    time_correlation,
    violation_sigmas,
)
from .states import (
    NoiseModel,
    apply_noise,
    dagger,
    eigen_floor_check,
    fidelity,
    hyperentangled_state,
    partial_trace_pol,
    partial_trace_time,
    polarization_bell_state,
    pure_density,
    tensor,
    time_bin_bell_state,
    trace,
)
from .tomography import (
    BootstrapInterval,
    DensityMatrixMLE,
    MleResult,
    TomographyDataset,
    bootstrap_fidelity,
    loglikelihood,
    mle_reconstruct,
)

__version__ = "0.1.0"
