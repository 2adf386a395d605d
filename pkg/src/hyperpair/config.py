"""Campaign configuration: JSON schema, strict validation, resolution.

Configs are plain JSON with one section per subsystem.  Validation is
strict: unknown keys are rejected and every diagnostic names the offending
field by its dotted path, so ``hyperpair <cmd> --config broken.json`` fails
with an actionable message and exit code 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .dwdm import DetectorSpec, LinkBudget, SpectralEnvelope
from .measurement import AnalyzerConfig, SettingQuad
from .states import NoiseModel


class ConfigError(ValueError):
    """Invalid campaign configuration; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class _Section:
    """One mapping node of the config tree with consumed-key tracking."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, default):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key: str, default, minimum=None, maximum=None) -> float:
        raw = self.take(key, default)
        if raw is None:
            raise ConfigError(self._label(key), "required key is missing")
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(self._label(key), f"expected a number, got {raw!r}")
        value = float(raw)
        if minimum is not None and value < minimum:
            raise ConfigError(self._label(key), f"must be >= {minimum}, got {value}")
        if maximum is not None and value > maximum:
            raise ConfigError(self._label(key), f"must be <= {maximum}, got {value}")
        return value

    def integer(self, key: str, default, minimum=None, maximum=None) -> int:
        raw = self.take(key, default)
        if raw is None:
            raise ConfigError(self._label(key), "required key is missing")
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(self._label(key), f"expected an integer, got {raw!r}")
        if minimum is not None and raw < minimum:
            raise ConfigError(self._label(key), f"must be >= {minimum}, got {raw}")
        if maximum is not None and raw > maximum:
            raise ConfigError(self._label(key), f"must be <= {maximum}, got {raw}")
        return raw

    def string(self, key: str, default, choices=None) -> str:
        raw = self.take(key, default)
        if not isinstance(raw, str):
            raise ConfigError(self._label(key), f"expected a string, got {raw!r}")
        if choices is not None and raw not in choices:
            raise ConfigError(self._label(key), f"must be one of {sorted(choices)}, got {raw!r}")
        return raw

    def section(self, key: str) -> "_Section":
        return _Section(self.take(key, {}), self._label(key))

    def item_list(self, key: str, default=()) -> list:
        raw = self.take(key, list(default))
        if not isinstance(raw, list):
            raise ConfigError(self._label(key), f"expected a list, got {raw!r}")
        return raw

    def finish(self) -> None:
        unknown = set(self.data) - self.seen
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(self._label(key), "unknown key")


@dataclass(frozen=True)
class SourceConfig:
    """Prepared-state parameters: ideal-state phase plus the noise model."""

    phase_sum: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)


@dataclass(frozen=True)
class FringesConfig:
    alpha_points: int = 13
    phi_points: int = 13
    pair_rate_cps: float = 100.0
    integration_s: float = 80.0
    dark_rate_cps: float = 0.25
    alice_settings: tuple[tuple[float, float], ...] = (
        (0.0, 0.0), (0.0, math.pi / 2), (45.0, 0.0), (45.0, math.pi / 2),
    )


@dataclass(frozen=True)
class BellConfig:
    mode: str = "scan"
    table_path: str | None = None
    uncertainty: float | None = None
    alpha_start: float = 0.0
    alpha_stop: float = 180.0
    alpha_points: int = 97
    phi_start: float = 0.0
    phi_stop: float = 2.0 * math.pi
    phi_points: int = 97
    row_signs: tuple[int, int, int, int] = (-1, 1, 1, 1)
    col_signs: tuple[int, int, int, int] = (-1, 1, 1, 1)
    channels: tuple[dict, ...] = ()


@dataclass(frozen=True)
class TomographyConfig:
    measurement_set: str = "pauli"
    shots_per_setting: int = 400
    resamples: int = 200
    tol: float = 1e-10
    max_iter: int = 100_000


@dataclass(frozen=True)
class BudgetScenario:
    name: str
    detector: DetectorSpec
    multiplexed: LinkBudget
    reference: LinkBudget


@dataclass(frozen=True)
class BudgetConfig:
    pair_sum: int = 43
    channels: tuple[int, ...] = (10, 11, 12, 13, 14)
    envelope: SpectralEnvelope = field(default_factory=SpectralEnvelope)
    scenarios: tuple[BudgetScenario, ...] = ()


@dataclass(frozen=True)
class CampaignConfig:
    seed: int = 0
    output_dir: str = "out"
    source: SourceConfig = field(default_factory=SourceConfig)
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    fringes: FringesConfig = field(default_factory=FringesConfig)
    bell: BellConfig = field(default_factory=BellConfig)
    tomography: TomographyConfig = field(default_factory=TomographyConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    quad: SettingQuad = field(default_factory=SettingQuad)


def _parse_source(section: _Section) -> SourceConfig:
    phase_sum = section.number("phase_sum", 0.0)
    try:
        noise = NoiseModel(
            phase_jitter_sigma=section.number("phase_jitter_sigma", 0.0, minimum=0.0),
            pump_imbalance=section.number("pump_imbalance", 0.0, minimum=-0.5, maximum=0.5),
            white_noise_weight=section.number("white_noise_weight", 0.0, minimum=0.0, maximum=1.0),
            visibility_pol=section.number("visibility_pol", 1.0, minimum=0.0, maximum=1.0),
            visibility_et=section.number("visibility_et", 1.0, minimum=0.0, maximum=1.0),
        )
    except ValueError as exc:
        raise ConfigError(section.path, str(exc)) from exc
    section.finish()
    return SourceConfig(phase_sum=phase_sum, noise=noise)


def _parse_analyzer(section: _Section) -> AnalyzerConfig:
    config = AnalyzerConfig(
        mi_imbalance_ps=section.number("mi_imbalance_ps", 300.0, minimum=0.0),
        mi_mismatch_ps=section.number("mi_mismatch_ps", 0.0),
        mi_match_tolerance_ps=section.number("mi_match_tolerance_ps", 0.03, minimum=0.0),
        coherence_time_ps=section.number("coherence_time_ps", 5.0, minimum=0.0),
        pol_sign_convention=section.string("pol_sign_convention", "sum", {"sum", "difference"}),
    )
    section.finish()
    return config


def _parse_setting_pairs(section: _Section, key: str, default) -> tuple[tuple[float, float], ...]:
    raw = section.item_list(key, default)
    out = []
    for k, item in enumerate(raw):
        label = f"{section.path}.{key}[{k}]"
        if (not isinstance(item, list)) or len(item) != 2:
            raise ConfigError(label, f"expected [alpha_deg, phi_rad], got {item!r}")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in item):
            raise ConfigError(label, f"expected numbers, got {item!r}")
        out.append((float(item[0]), float(item[1])))
    if not out:
        raise ConfigError(f"{section.path}.{key}", "needs at least one setting")
    return tuple(out)


def _parse_fringes(section: _Section) -> FringesConfig:
    config = FringesConfig(
        alpha_points=section.integer("alpha_points", 13, minimum=5),
        phi_points=section.integer("phi_points", 13, minimum=5),
        pair_rate_cps=section.number("pair_rate_cps", 100.0, minimum=0.0),
        integration_s=section.number("integration_s", 80.0, minimum=0.0),
        dark_rate_cps=section.number("dark_rate_cps", 0.25, minimum=0.0),
        alice_settings=_parse_setting_pairs(
            section, "alice_settings",
            [[0.0, 0.0], [0.0, math.pi / 2], [45.0, 0.0], [45.0, math.pi / 2]],
        ),
    )
    section.finish()
    return config


def _parse_signs(section: _Section, key: str) -> tuple[int, int, int, int]:
    raw = section.item_list(key, [-1, 1, 1, 1])
    if len(raw) != 4 or any(v not in (-1, 1) or isinstance(v, bool) for v in raw):
        raise ConfigError(f"{section.path}.{key}", f"expected four +/-1 entries, got {raw!r}")
    return tuple(int(v) for v in raw)


def _parse_bell(section: _Section) -> BellConfig:
    mode = section.string("mode", "scan", {"scan", "table"})
    table_path = section.take("table_path", None)
    if table_path is not None and not isinstance(table_path, str):
        raise ConfigError(f"{section.path}.table_path", f"expected a string, got {table_path!r}")
    if mode == "table" and table_path is None:
        raise ConfigError(f"{section.path}.table_path", "required when mode is 'table'")
    uncertainty = section.take("uncertainty", None)
    if uncertainty is not None:
        if isinstance(uncertainty, bool) or not isinstance(uncertainty, (int, float)) or uncertainty <= 0:
            raise ConfigError(f"{section.path}.uncertainty", f"expected a positive number, got {uncertainty!r}")
        uncertainty = float(uncertainty)
    channels = []
    for k, item in enumerate(section.item_list("channels")):
        sub = _Section(item, f"{section.path}.channels[{k}]")
        channels.append({
            "signal": sub.integer("signal", None),
            "idler": sub.integer("idler", None),
            "bell_value": sub.number("bell_value", None),
            "sigma": sub.number("sigma", None, minimum=1e-12),
        })
        sub.finish()
    config = BellConfig(
        mode=mode,
        table_path=table_path,
        uncertainty=uncertainty,
        alpha_start=section.number("alpha_start", 0.0),
        alpha_stop=section.number("alpha_stop", 180.0),
        alpha_points=section.integer("alpha_points", 97, minimum=2),
        phi_start=section.number("phi_start", 0.0),
        phi_stop=section.number("phi_stop", 2.0 * math.pi),
        phi_points=section.integer("phi_points", 97, minimum=2),
        row_signs=_parse_signs(section, "row_signs"),
        col_signs=_parse_signs(section, "col_signs"),
        channels=tuple(channels),
    )
    section.finish()
    return config


def _parse_tomography(section: _Section) -> TomographyConfig:
    config = TomographyConfig(
        measurement_set=section.string("measurement_set", "pauli",
                                       {"pauli", "quad_plus_single_dof"}),
        shots_per_setting=section.integer("shots_per_setting", 400, minimum=1),
        resamples=section.integer("resamples", 200, minimum=100),
        tol=section.number("tol", 1e-10, minimum=0.0),
        max_iter=section.integer("max_iter", 100_000, minimum=1),
    )
    section.finish()
    return config


def _parse_link(section: _Section, channel_count: int) -> LinkBudget:
    budget = LinkBudget(
        transmission_db=section.number("transmission_db", None, maximum=0.0),
        coherence_time_ps=section.number("coherence_time_ps", None, minimum=1e-9),
        analyzer_singles_factor=section.number("analyzer_singles_factor", 0.25,
                                               minimum=1e-12, maximum=1.0),
        coincidence_factor=section.number("coincidence_factor", 0.125,
                                          minimum=1e-12, maximum=1.0),
        channel_count=channel_count,
    )
    section.finish()
    return budget


def _parse_budget(section: _Section) -> BudgetConfig:
    pair_sum = section.integer("pair_sum", 43)
    channels_raw = section.item_list("channels", [10, 11, 12, 13, 14])
    channels = []
    for k, item in enumerate(channels_raw):
        if isinstance(item, bool) or not isinstance(item, int):
            raise ConfigError(f"{section.path}.channels[{k}]", f"expected a channel number, got {item!r}")
        channels.append(item)
    env = section.section("envelope")
    try:
        envelope = SpectralEnvelope(
            center_nm=env.number("center_nm", 1560.0, minimum=1.0),
            fwhm_nm=env.number("fwhm_nm", 40.0, minimum=1e-9),
            shape=env.string("shape", "gaussian", {"gaussian", "sinc2"}),
        )
    except ValueError as exc:
        raise ConfigError(env.path, str(exc)) from exc
    env.finish()
    scenarios = []
    for k, item in enumerate(section.item_list("scenarios")):
        sub = _Section(item, f"{section.path}.scenarios[{k}]")
        name = sub.string("name", f"scenario-{k}")
        det = sub.section("detector")
        detector = DetectorSpec(
            efficiency=det.number("efficiency", None, minimum=1e-12, maximum=1.0),
            timing_resolution_ps=det.number("timing_resolution_ps", None, minimum=1e-9),
            saturation_cps=det.number("saturation_cps", None, minimum=1e-9),
        )
        det.finish()
        multiplexed = _parse_link(sub.section("multiplexed"), channel_count=len(channels))
        reference = _parse_link(sub.section("reference"), channel_count=1)
        sub.finish()
        scenarios.append(BudgetScenario(name=name, detector=detector,
                                        multiplexed=multiplexed, reference=reference))
    config = BudgetConfig(pair_sum=pair_sum, channels=tuple(channels),
                          envelope=envelope, scenarios=tuple(scenarios))
    section.finish()
    return config


def _parse_quad(section: _Section) -> SettingQuad:
    quad = SettingQuad.from_base(
        alpha_s=section.number("alpha_s_deg", 0.0),
        alpha_i=section.number("alpha_i_deg", 22.5),
        phi_s=section.number("phi_s_rad", 0.0),
        phi_i=section.number("phi_i_rad", math.pi / 4),
    )
    section.finish()
    return quad


def parse_config(data: dict) -> CampaignConfig:
    """Validate a raw mapping into a ``CampaignConfig``."""
    root = _Section(data, "")
    config = CampaignConfig(
        seed=root.integer("seed", 0, minimum=0),
        output_dir=root.string("output_dir", "out"),
        source=_parse_source(root.section("source")),
        analyzer=_parse_analyzer(root.section("analyzer")),
        fringes=_parse_fringes(root.section("fringes")),
        bell=_parse_bell(root.section("bell")),
        tomography=_parse_tomography(root.section("tomography")),
        budget=_parse_budget(root.section("budget")),
        quad=_parse_quad(root.section("quad")),
    )
    root.finish()
    return config


def load_config(path) -> CampaignConfig:
    """Load and validate a JSON campaign config file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(data)


def resolved_dict(config: CampaignConfig) -> dict:
    """Fully resolved config as a JSON-serializable mapping.

    The output directory is omitted: the archive lives inside it, and
    keeping it out makes rerun outputs byte-identical across locations.
    """
    return {
        "seed": config.seed,
        "source": {
            "phase_sum": config.source.phase_sum,
            "phase_jitter_sigma": config.source.noise.phase_jitter_sigma,
            "pump_imbalance": config.source.noise.pump_imbalance,
            "white_noise_weight": config.source.noise.white_noise_weight,
            "visibility_pol": config.source.noise.visibility_pol,
            "visibility_et": config.source.noise.visibility_et,
        },
        "analyzer": {
            "mi_imbalance_ps": config.analyzer.mi_imbalance_ps,
            "mi_mismatch_ps": config.analyzer.mi_mismatch_ps,
            "mi_match_tolerance_ps": config.analyzer.mi_match_tolerance_ps,
            "coherence_time_ps": config.analyzer.coherence_time_ps,
            "pol_sign_convention": config.analyzer.pol_sign_convention,
        },
        "quad": {
            "alpha_s_deg": config.quad.alpha_s,
            "alpha_i_deg": config.quad.alpha_i,
            "phi_s_rad": config.quad.phi_s,
            "phi_i_rad": config.quad.phi_i,
        },
        "fringes": {
            "alpha_points": config.fringes.alpha_points,
            "phi_points": config.fringes.phi_points,
            "pair_rate_cps": config.fringes.pair_rate_cps,
            "integration_s": config.fringes.integration_s,
            "dark_rate_cps": config.fringes.dark_rate_cps,
            "alice_settings": [list(item) for item in config.fringes.alice_settings],
        },
        "bell": {
            "mode": config.bell.mode,
            "table_path": config.bell.table_path,
            "uncertainty": config.bell.uncertainty,
            "alpha_start": config.bell.alpha_start,
            "alpha_stop": config.bell.alpha_stop,
            "alpha_points": config.bell.alpha_points,
            "phi_start": config.bell.phi_start,
            "phi_stop": config.bell.phi_stop,
            "phi_points": config.bell.phi_points,
            "row_signs": list(config.bell.row_signs),
            "col_signs": list(config.bell.col_signs),
            "channels": [dict(item) for item in config.bell.channels],
        },
        "tomography": {
            "measurement_set": config.tomography.measurement_set,
            "shots_per_setting": config.tomography.shots_per_setting,
            "resamples": config.tomography.resamples,
            "tol": config.tomography.tol,
            "max_iter": config.tomography.max_iter,
        },
        "budget": {
            "pair_sum": config.budget.pair_sum,
            "channels": list(config.budget.channels),
            "envelope": {
                "center_nm": config.budget.envelope.center_nm,
                "fwhm_nm": config.budget.envelope.fwhm_nm,
                "shape": config.budget.envelope.shape,
            },
            "scenarios": [
                {
                    "name": sc.name,
                    "detector": {
                        "efficiency": sc.detector.efficiency,
                        "timing_resolution_ps": sc.detector.timing_resolution_ps,
                        "saturation_cps": sc.detector.saturation_cps,
                    },
                    "multiplexed": {
                        "transmission_db": sc.multiplexed.transmission_db,
                        "coherence_time_ps": sc.multiplexed.coherence_time_ps,
                        "analyzer_singles_factor": sc.multiplexed.analyzer_singles_factor,
                        "coincidence_factor": sc.multiplexed.coincidence_factor,
                    },
                    "reference": {
                        "transmission_db": sc.reference.transmission_db,
                        "coherence_time_ps": sc.reference.coherence_time_ps,
                        "analyzer_singles_factor": sc.reference.analyzer_singles_factor,
                        "coincidence_factor": sc.reference.coincidence_factor,
                    },
                }
                for sc in config.budget.scenarios
            ],
        },
    }
