"""Stochastic coincidence-count simulation and count-level estimators.

The simulator draws windowed coincidence counts per analyzer setting:
signal coincidences are Poisson with mean rate * probability * time, and an
independent Poisson dark background is added on top.  A separately drawn
dark record (an independent background measurement of the same duration)
supports dark-count subtraction without reusing the noise realization.

Runs are reproducible: every setting draws from its own substream derived
from (master seed, setting index), so serial and parallel evaluation orders
produce identical records.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dwdm import ChannelPair, pair_for
from .measurement import (
    DEFAULT_ANALYZER,
    OUTCOME_TUPLES,
    AnalyzerConfig,
    JointSetting,
    SettingQuad,
    coincidence_probability,
    outcome_probabilities,
)
from .validation import check_non_negative

CSV_COLUMNS = (
    "alpha_s_deg", "phi_s_rad", "alpha_i_deg", "phi_i_rad",
    "out_pol_s", "out_et_s", "out_pol_i", "out_et_i",
    "integration_s", "raw", "dark", "corrected",
    "signal_channel", "idler_channel",
)


@dataclass(frozen=True)
class CountRecord:
    """Raw and dark coincidence counts for one setting and window.

    ``dark`` is an independently measured background estimate for the same
    integration window; ``corrected`` clamps the subtraction at zero.
    """

    setting: JointSetting
    integration_s: float
    raw: int
    dark: int
    outcomes: tuple[int, int, int, int] = (1, 1, 1, 1)
    channel: ChannelPair | None = None

    @property
    def corrected(self) -> int:
        return max(0, self.raw - self.dark)


def subtract_dark(record: CountRecord) -> int:
    """Dark-corrected coincidences, clamped at zero.

    The clamp biases the estimator upward when expected counts are at the
    dark level; both corrected and raw counts stay available downstream.
    """
    return record.corrected


@dataclass(frozen=True)
class RunPlan:
    """Settings, timing, rates, and seeding of one simulated campaign.

    ``seed`` may be an int or a tuple of ints (a seed path), so campaigns
    can hand each sub-run its own independent stream.
    """

    settings: tuple[JointSetting, ...]
    integration_s: float
    pair_rate_cps: float
    dark_rate_cps: float = 0.0
    seed: int | tuple[int, ...] = 0
    outcomes: tuple[int, int, int, int] = (1, 1, 1, 1)
    channel: ChannelPair | None = None

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        check_non_negative("integration_s", self.integration_s)
        check_non_negative("pair_rate_cps", self.pair_rate_cps)
        check_non_negative("dark_rate_cps", self.dark_rate_cps)


def _setting_rng(seed: int | tuple[int, ...], index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def simulate_counts(rho, plan: RunPlan, config: AnalyzerConfig = DEFAULT_ANALYZER) -> list[CountRecord]:
    """Simulate one record per setting of the plan.

    Identical plans (including the seed) yield identical records.
    """
    records = []
    for index, setting in enumerate(plan.settings):
        prob = coincidence_probability(rho, setting, plan.outcomes, config)
        rng = _setting_rng(plan.seed, index)
        mean_signal = plan.pair_rate_cps * prob * plan.integration_s
        mean_dark = plan.dark_rate_cps * plan.integration_s
        raw = int(rng.poisson(mean_signal)) + int(rng.poisson(mean_dark))
        dark = int(rng.poisson(mean_dark))
        records.append(CountRecord(
            setting=setting, integration_s=plan.integration_s,
            raw=raw, dark=dark, outcomes=plan.outcomes, channel=plan.channel,
        ))
    return records


def sample_outcome_counts(rho, settings: Sequence[JointSetting], shots: int, seed: int = 0,
                          config: AnalyzerConfig = DEFAULT_ANALYZER) -> np.ndarray:
    """Multinomial outcome counts, shape (n_settings, 16).

    Each setting distributes ``shots`` coincidences over the 16 joint
    outcomes ordered like ``measurement.OUTCOME_TUPLES``, from its own
    seed-derived substream.
    """
    counts = np.empty((len(settings), 16), dtype=np.int64)
    for index, setting in enumerate(settings):
        probs = np.clip(outcome_probabilities(rho, setting, config), 0.0, None)
        probs /= probs.sum()
        rng = _setting_rng(seed, index)
        counts[index] = rng.multinomial(shots, probs)
    return counts


def records_to_csv(records: Sequence[CountRecord], path=None) -> str:
    """Serialize records to the documented CSV schema; write to path if given."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        signal = rec.channel.signal.number if rec.channel is not None else ""
        idler = rec.channel.idler.number if rec.channel is not None else ""
        writer.writerow([
            f"{rec.setting.alpha_s:.12g}", f"{rec.setting.phi_s:.12g}",
            f"{rec.setting.alpha_i:.12g}", f"{rec.setting.phi_i:.12g}",
            rec.outcomes[0], rec.outcomes[1], rec.outcomes[2], rec.outcomes[3],
            f"{rec.integration_s:.12g}", rec.raw, rec.dark, rec.corrected,
            signal, idler,
        ])
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def records_from_csv(source) -> list[CountRecord]:
    """Parse records written by ``records_to_csv`` (path or text)."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    else:
        text = str(source)
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"count CSV is missing columns: {sorted(missing)}")
    records = []
    for row in reader:
        channel = None
        if row["signal_channel"]:
            pair_sum = int(row["signal_channel"]) + int(row["idler_channel"])
            channel = pair_for(int(row["signal_channel"]), pair_sum)
        records.append(CountRecord(
            setting=JointSetting(
                alpha_s=float(row["alpha_s_deg"]), alpha_i=float(row["alpha_i_deg"]),
                phi_s=float(row["phi_s_rad"]), phi_i=float(row["phi_i_rad"]),
            ),
            integration_s=float(row["integration_s"]),
            raw=int(row["raw"]), dark=int(row["dark"]),
            outcomes=(int(row["out_pol_s"]), int(row["out_et_s"]),
                      int(row["out_pol_i"]), int(row["out_et_i"])),
            channel=channel,
        ))
    return records


@dataclass(frozen=True)
class FilterExpansion:
    """Correlators estimated from a one-outcome filter sweep.

    ``table`` holds the 16 joint correlators (rows: phase pairs, columns:
    polarization pairs), ``table_sigma`` their Poisson uncertainties from
    parametric resampling, and ``outcome_counts`` the reconstructed counts
    of all 16 outcomes per setting.
    """

    table: np.ndarray
    table_sigma: np.ndarray
    pol_correlations: np.ndarray
    time_correlations: np.ndarray
    total_per_setting: float
    outcome_counts: np.ndarray  # shape (4, 4, 16)


def _rank_one_correlators(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Factor a 4x4 one-outcome count grid into per-DOF correlators.

    The grid is fit by its best rank-1 approximation N/16 * (1 + T_r)(1 + P_c).
    The overall scale split between the factors is fixed by the quad
    structure: settings offset by +45 degrees / +pi/2 on both parties flip
    the sign of the ideal correlator, so opposite corners of each factor
    vector average to the gauge constant.
    """
    if counts.shape != (4, 4):
        raise ValueError(f"expected a 4x4 count grid, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    total = float(counts.sum())
    if total == 0.0:
        return np.zeros(4), np.zeros(4), 0.0
    u, s, vt = np.linalg.svd(counts.astype(float))
    row = u[:, 0] * np.sqrt(s[0])
    col = vt[0] * np.sqrt(s[0])
    if row.sum() < 0:
        row, col = -row, -col
    row_gauge = (row[0] + row[3]) / 2.0
    col_gauge = (col[0] + col[3]) / 2.0
    if row_gauge <= 0.0 or col_gauge <= 0.0:
        raise ValueError("count grid is inconsistent with the separable fringe model")
    time_corr = np.clip(row / row_gauge - 1.0, -1.0, 1.0)
    pol_corr = np.clip(col / col_gauge - 1.0, -1.0, 1.0)
    return time_corr, pol_corr, 16.0 * row_gauge * col_gauge


def _match_quad_grid(records: Sequence[CountRecord], quad: SettingQuad, atol: float = 1e-9) -> np.ndarray:
    """Arrange corrected counts of a quad sweep into the 4x4 table layout."""
    counts = np.full((4, 4), -1.0)
    for rec in records:
        if rec.outcomes != (1, 1, 1, 1):
            raise ValueError("filter expansion expects the all-+1 outcome sweep")
        for r in range(4):
            for c in range(4):
                ref = quad.setting(r, c)
                if (abs(rec.setting.alpha_s - ref.alpha_s) <= atol
                        and abs(rec.setting.alpha_i - ref.alpha_i) <= atol
                        and abs(rec.setting.phi_s - ref.phi_s) <= atol
                        and abs(rec.setting.phi_i - ref.phi_i) <= atol):
                    counts[r, c] = rec.corrected
    if np.any(counts < 0):
        missing = [(r, c) for r in range(4) for c in range(4) if counts[r, c] < 0]
        raise ValueError(f"quad sweep is incomplete, missing table cells {missing}")
    return counts


def expand_filter_counts(records: Sequence[CountRecord], quad: SettingQuad = SettingQuad(),
                         resamples: int = 200, seed: int = 0) -> FilterExpansion:
    """Estimate all 16 outcomes and the correlators from a one-outcome sweep.

    With two detectors only the all-+1 outcome is recorded per setting.
    Assuming a constant total coincidence rate across settings and vanishing
    single-party marginals, the count grid is separable and the remaining 15
    outcome counts follow from the per-DOF correlators; uncertainties come
    from parametric Poisson resampling of the observed grid.
    """
    counts = _match_quad_grid(records, quad)
    time_corr, pol_corr, total = _rank_one_correlators(counts)
    table = np.outer(time_corr, pol_corr)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    tables = np.empty((resamples, 4, 4))
    for k in range(resamples):
        resampled = rng.poisson(counts).astype(float)
        t_k, p_k, _ = _rank_one_correlators(resampled)
        tables[k] = np.outer(t_k, p_k)
    sigma = tables.std(axis=0, ddof=1)

    pol_signs = np.array([o[0] * o[2] for o in OUTCOME_TUPLES])
    et_signs = np.array([o[1] * o[3] for o in OUTCOME_TUPLES])
    outcome_counts = (total / 16.0) * (
        (1.0 + pol_signs[None, None, :] * pol_corr[None, :, None])
        * (1.0 + et_signs[None, None, :] * time_corr[:, None, None])
    )
    return FilterExpansion(
        table=table, table_sigma=sigma,
        pol_correlations=pol_corr, time_correlations=time_corr,
        total_per_setting=total, outcome_counts=outcome_counts,
    )


def quad_sweep_plan(quad: SettingQuad, integration_s: float, pair_rate_cps: float,
                    dark_rate_cps: float = 0.0, seed: int = 0,
                    channel: ChannelPair | None = None) -> RunPlan:
    """Plan covering the 16 quad settings in table order (row-major)."""
    settings = tuple(quad.setting(r, c) for r in range(4) for c in range(4))
    return RunPlan(settings=settings, integration_s=integration_s,
                   pair_rate_cps=pair_rate_cps, dark_rate_cps=dark_rate_cps,
                   seed=seed, channel=channel)
