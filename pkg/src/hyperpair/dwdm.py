"""ITU channel-grid arithmetic and the multiplexed link-rate budget.

Channel n of the 100 GHz grid sits at f = 190.0 + 0.1 n THz.  Down-converted
photon pairs conserve the pump energy, so usable channel pairs are symmetric
about the degenerate frequency: f_signal + f_idler = pump frequency.  The
budget model bounds the per-channel pair generation rate by three
constraints (multi-pair degradation against the coherence time and against
the detector timing resolution, and detector saturation) and converts it to
singles and coincidence rates through the link transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.integrate import quad

from .validation import check_positive, check_unit_interval

#: lambda [nm] * f [THz] for vacuum light.
SPEED_OF_LIGHT_NM_THZ = 299792.458

GRID_BASE_THZ = 190.0
GRID_STEP_THZ = 0.1
GRID_WIDTH_GHZ = 100.0
#: Supported channel numbers (C/L band coverage of the 190.0 THz anchor).
GRID_MIN_CHANNEL = 1
GRID_MAX_CHANNEL = 79

#: Pair generation rate is capped at this fraction of the inverse coherence
#: time and of the inverse detector timing resolution.
MULTI_PAIR_FRACTION = 0.05


def channel_frequency_thz(number: int) -> float:
    """Center frequency of grid channel ``number``.

    >>> channel_frequency_thz(10)
    191.0
    >>> round(channel_frequency_thz(33), 6)
    193.3
    """
    if not GRID_MIN_CHANNEL <= number <= GRID_MAX_CHANNEL:
        raise ValueError(f"channel {number} outside the supported grid "
                         f"[{GRID_MIN_CHANNEL}, {GRID_MAX_CHANNEL}]")
    return GRID_BASE_THZ + GRID_STEP_THZ * number


def frequency_to_wavelength_nm(frequency_thz: float) -> float:
    """Vacuum wavelength for a frequency in THz.

    >>> round(frequency_to_wavelength_nm(191.0), 1)
    1569.6
    """
    return SPEED_OF_LIGHT_NM_THZ / check_positive("frequency_thz", frequency_thz)


@dataclass(frozen=True)
class ItuChannel:
    """One 100 GHz grid channel."""

    number: int
    width_ghz: float = GRID_WIDTH_GHZ

    def __post_init__(self):
        channel_frequency_thz(self.number)

    @property
    def frequency_thz(self) -> float:
        return channel_frequency_thz(self.number)

    @property
    def wavelength_nm(self) -> float:
        return frequency_to_wavelength_nm(self.frequency_thz)


@dataclass(frozen=True)
class ChannelPair:
    """Energy-conserving signal/idler channel pair.

    The signal is the longer-wavelength (lower-frequency) channel.
    """

    signal: ItuChannel
    idler: ItuChannel

    def __post_init__(self):
        if self.signal.frequency_thz > self.idler.frequency_thz:
            raise ValueError("signal channel must be the lower-frequency one")

    @property
    def index(self) -> int:
        return self.signal.number

    @property
    def pump_frequency_thz(self) -> float:
        return self.signal.frequency_thz + self.idler.frequency_thz

    @property
    def pump_wavelength_nm(self) -> float:
        return frequency_to_wavelength_nm(self.pump_frequency_thz)


def pair_for(number: int, pair_sum: int = 43) -> ChannelPair:
    """Channel pair containing channel ``number`` for the given pairing sum.

    The partner channel is ``pair_sum - number``, which makes the pair
    frequencies sum to 2 * 190.0 + 0.1 * pair_sum THz.

    >>> pair_for(10).idler.number
    33
    >>> pair_for(14).idler.number
    29
    >>> pair_for(33).signal.number
    10
    """
    partner = pair_sum - int(number)
    low, high = sorted((int(number), partner))
    return ChannelPair(signal=ItuChannel(low), idler=ItuChannel(high))


@dataclass(frozen=True)
class SpectralEnvelope:
    """Pair-emission spectral envelope over the signal wavelength.

    Shapes: ``gaussian`` (default) or ``sinc2``, both parameterized by the
    full width at half maximum and normalized to 1 at the center.
    """

    center_nm: float = 1560.0
    fwhm_nm: float = 40.0
    shape: str = "gaussian"

    _SINC2_HALF_X = 1.3915574  # sinc^2(x) = 1/2

    def __post_init__(self):
        check_positive("fwhm_nm", self.fwhm_nm)
        check_positive("center_nm", self.center_nm)
        if self.shape not in ("gaussian", "sinc2"):
            raise ValueError(f"shape must be 'gaussian' or 'sinc2', got {self.shape!r}")

    def value(self, wavelength_nm: float) -> float:
        x = (wavelength_nm - self.center_nm) / self.fwhm_nm
        if self.shape == "gaussian":
            return math.exp(-4.0 * math.log(2.0) * x * x)
        arg = 2.0 * self._SINC2_HALF_X * x
        if arg == 0.0:
            return 1.0
        return (math.sin(arg) / arg) ** 2


def spectrum_weight(pair: ChannelPair, envelope: SpectralEnvelope = SpectralEnvelope()) -> float:
    """Relative pair-generation weight of a channel pair.

    Band average of the envelope over the signal channel, normalized to the
    envelope peak, so the weight at the center wavelength is 1.
    """
    f0 = pair.signal.frequency_thz
    half_thz = pair.signal.width_ghz / 1000.0 / 2.0
    lo = frequency_to_wavelength_nm(f0 + half_thz)
    hi = frequency_to_wavelength_nm(f0 - half_thz)
    integral, _ = quad(envelope.value, lo, hi)
    return float(integral / (hi - lo))


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector parameters."""

    efficiency: float
    timing_resolution_ps: float
    saturation_cps: float

    def __post_init__(self):
        check_unit_interval("efficiency", self.efficiency)
        check_positive("efficiency", self.efficiency)
        check_positive("timing_resolution_ps", self.timing_resolution_ps)
        check_positive("saturation_cps", self.saturation_cps)


@dataclass(frozen=True)
class LinkBudget:
    """Per-photon transmission and analyzer throughput of one channel.

    ``transmission_db`` is source-to-detector per photon, excluding detector
    efficiency.  The analyzer factors are calibrated constants of the
    analyzer chain: a photon reaches its monitored detector with probability
    ``analyzer_singles_factor`` (interferometer exit and polarization
    splitting onto the monitored ports), while a photon pair survives joint
    analysis and central-slot post-selection with probability
    ``coincidence_factor``.
    """

    transmission_db: float
    coherence_time_ps: float
    analyzer_singles_factor: float = 0.25
    coincidence_factor: float = 0.125
    channel_count: int = 1

    def __post_init__(self):
        if self.transmission_db > 0.0:
            raise ValueError(f"transmission_db must be <= 0 dB, got {self.transmission_db!r}")
        check_positive("coherence_time_ps", self.coherence_time_ps)
        for name in ("analyzer_singles_factor", "coincidence_factor"):
            value = getattr(self, name)
            check_unit_interval(name, value)
            check_positive(name, value)
        if self.channel_count < 1:
            raise ValueError(f"channel_count must be >= 1, got {self.channel_count!r}")

    @property
    def linear_transmission(self) -> float:
        return 10.0 ** (self.transmission_db / 10.0)


def singles_rate(pair_rate: float, budget: LinkBudget, detector: DetectorSpec) -> float:
    """Detected singles rate per monitored detector for a pair rate at source."""
    check_positive("pair_rate", pair_rate)
    return pair_rate * budget.linear_transmission * detector.efficiency * budget.analyzer_singles_factor


def coincidence_rate(pair_rate: float, budget: LinkBudget, detector: DetectorSpec) -> float:
    """Detected coincidence rate for a pair rate at source.

    Scales with the square of the per-photon linear transmission.
    """
    check_positive("pair_rate", pair_rate)
    detected = budget.linear_transmission * detector.efficiency
    return pair_rate * detected * detected * budget.coincidence_factor


#: Binding-constraint labels reported by ``max_pair_rate``.
CONSTRAINT_COHERENCE = "coherence-time"
CONSTRAINT_TIMING = "timing-resolution"
CONSTRAINT_SATURATION = "saturation"


@dataclass(frozen=True)
class RateLimit:
    """Maximum usable pair rate and which constraint binds it."""

    rate: float
    binding: str
    constraints: dict[str, float]


def max_pair_rate(budget: LinkBudget, detector: DetectorSpec) -> RateLimit:
    """Per-channel pair-rate cap and its binding constraint.

    The rate is the minimum of the multi-pair caps (a fixed fraction of the
    inverse coherence time and of the inverse detector timing resolution)
    and the rate at which the detected singles reach detector saturation.
    """
    constraints = {
        CONSTRAINT_COHERENCE: MULTI_PAIR_FRACTION / (budget.coherence_time_ps * 1e-12),
        CONSTRAINT_TIMING: MULTI_PAIR_FRACTION / (detector.timing_resolution_ps * 1e-12),
        CONSTRAINT_SATURATION: detector.saturation_cps / (
            budget.linear_transmission * detector.efficiency * budget.analyzer_singles_factor
        ),
    }
    binding = min(constraints, key=constraints.get)
    return RateLimit(rate=constraints[binding], binding=binding, constraints=constraints)


@dataclass(frozen=True)
class PairCapacity:
    """Budget outcome for one channel pair."""

    pair: ChannelPair
    pair_rate: float
    binding: str
    singles_cps: float
    coincidences_cps: float


@dataclass(frozen=True)
class CapacityReport:
    """Aggregate multiplexed capacity against a single-channel reference."""

    per_pair: tuple[PairCapacity, ...]
    total_coincidences_cps: float
    reference_rate: float
    reference_binding: str
    reference_coincidences_cps: float
    advantage: float = field(init=False)
    asymptotic_advantage: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "advantage", self.total_coincidences_cps / self.reference_coincidences_cps
        )


def aggregate_capacity(pairs, budget: LinkBudget, detector: DetectorSpec,
                       reference_budget: LinkBudget | None = None) -> CapacityReport:
    """Total multiplexed coincidence rate over the given channel pairs.

    ``reference_budget`` describes the unmultiplexed single-channel link the
    total is compared against; when provided, the report also carries the
    long-distance asymptotic advantage, the channel count divided by the
    squared extra per-photon linear loss of the multiplexed link.
    """
    pairs = tuple(pairs)
    if not pairs:
        raise ValueError("aggregate_capacity needs at least one channel pair")
    per_pair = []
    for pair in pairs:
        limit = max_pair_rate(budget, detector)
        per_pair.append(PairCapacity(
            pair=pair,
            pair_rate=limit.rate,
            binding=limit.binding,
            singles_cps=singles_rate(limit.rate, budget, detector),
            coincidences_cps=coincidence_rate(limit.rate, budget, detector),
        ))
    total = sum(item.coincidences_cps for item in per_pair)

    if reference_budget is None:
        reference_budget = budget
    ref_limit = max_pair_rate(reference_budget, detector)
    ref_coinc = coincidence_rate(ref_limit.rate, reference_budget, detector)
    extra_db = reference_budget.transmission_db - budget.transmission_db
    extra_linear = 10.0 ** (extra_db / 10.0)
    asymptotic = len(pairs) / (extra_linear * extra_linear) if extra_db > 0 else None
    return CapacityReport(
        per_pair=tuple(per_pair),
        total_coincidences_cps=total,
        reference_rate=ref_limit.rate,
        reference_binding=ref_limit.binding,
        reference_coincidences_cps=ref_coinc,
        asymptotic_advantage=asymptotic,
    )
