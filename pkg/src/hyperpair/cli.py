"""Command-line front end: reproducible data artifacts for each analysis.

Subcommands
-----------
fringes   simulate coincidence surfaces over the idler settings at the four
          fixed signal settings and fit the fringe model to each
bell      scan the Bell value over idler settings (or recompute it from a
          correlation-table CSV) and summarize per-channel violations
tomo      simulate tomography counts, reconstruct the state by maximum
          likelihood, and bootstrap a fidelity interval
budget    evaluate the channel-pair rate/capacity budget scenarios

All commands take ``--config <json>`` plus optional ``--seed``, ``--out``,
and ``--format {csv,json}`` overrides, archive the resolved configuration
next to their outputs, and write outputs atomically.  Exit codes: 0 on
success, 2 on configuration/schema errors, 3 on numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import CampaignConfig, ConfigError, load_config, resolved_dict
from .counts import RunPlan, records_to_csv, simulate_counts
from .dwdm import aggregate_capacity, max_pair_rate, pair_for, spectrum_weight
from .fringes import FitConvergenceError, fit_fringes
from .measurement import (
    JointSetting,
    bell_scan,
    generalized_bell_value,
    violation_sigmas,
)
from .states import apply_noise, fidelity, hyperentangled_state
from .tomography import (
    TomographyError,
    analyzer_settings_effects,
    bootstrap_fidelity,
    mle_reconstruct,
    pauli_effects,
    pauli_settings,
    quad_plus_single_dof_settings,
    sampled_dataset,
    save_density_matrix,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3


class NonConvergenceError(RuntimeError):
    pass


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_table(path_base: Path, header: list[str], rows: list[list], fmt: str) -> Path:
    if fmt == "json":
        path = path_base.with_suffix(".json")
        payload = [dict(zip(header, row)) for row in rows]
        _write_json(path, payload)
        return path
    path = path_base.with_suffix(".csv")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buffer.getvalue())
    return path


def _prepare_run(config: CampaignConfig, args) -> tuple[CampaignConfig, Path]:
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out_dir = Path(args.out) if args.out is not None else Path(config.output_dir)
    config = dataclasses.replace(config, output_dir=str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "resolved_config.json", resolved_dict(config))
    return config, out_dir


def _source_state(config: CampaignConfig) -> np.ndarray:
    state = hyperentangled_state(config.source.phase_sum)
    return apply_noise(state, config.source.noise)


def _fmt(value: float) -> str:
    return f"{float(value):.12g}"


def run_fringes(config: CampaignConfig, out_dir: Path, fmt: str) -> None:
    rho = _source_state(config)
    fr = config.fringes
    alpha_grid = np.linspace(0.0, 180.0, fr.alpha_points, endpoint=False)
    phi_grid = np.linspace(0.0, 2.0 * math.pi, fr.phi_points, endpoint=False)
    summaries = []
    for k, (alpha_s, phi_s) in enumerate(fr.alice_settings):
        settings = tuple(
            JointSetting(alpha_s=alpha_s, phi_s=phi_s, alpha_i=a, phi_i=p)
            for a in alpha_grid for p in phi_grid
        )
        plan = RunPlan(settings=settings, integration_s=fr.integration_s,
                       pair_rate_cps=fr.pair_rate_cps, dark_rate_cps=fr.dark_rate_cps,
                       seed=(config.seed, k))
        records = simulate_counts(rho, plan, config.analyzer)
        _write_text(out_dir / f"fringes_surface_{k}.csv", records_to_csv(records))
        fit = fit_fringes(records)
        summaries.append({
            "surface": k,
            "alpha_s_deg": alpha_s,
            "phi_s_rad": phi_s,
            "amplitude": fit.amplitude_,
            "visibility_pol": fit.visibility_pol_,
            "visibility_et": fit.visibility_et_,
            "alpha_offset_deg": fit.alpha_offset_deg_,
            "phi_offset_rad": fit.phi_offset_rad_,
            "residual": fit.residual_,
            "n_iter": fit.n_iter_,
        })
    _write_json(out_dir / "fringe_fits.json", {
        "surfaces": summaries,
        "mean_visibility_pol": sum(s["visibility_pol"] for s in summaries) / len(summaries),
        "mean_visibility_et": sum(s["visibility_et"] for s in summaries) / len(summaries),
    })


def read_correlation_table(path) -> np.ndarray:
    """Parse a 4x4 correlation-table CSV (plain numbers, no header)."""
    rows = []
    text = Path(path).read_text()
    for r, line in enumerate(csv.reader(io.StringIO(text))):
        if not line or all(not cell.strip() for cell in line):
            continue
        if len(line) != 4:
            raise ConfigError(f"{path}:row {r + 1}", f"expected 4 columns, found {len(line)}")
        try:
            rows.append([float(cell) for cell in line])
        except ValueError as exc:
            raise ConfigError(f"{path}:row {r + 1}", str(exc)) from exc
    if len(rows) != 4:
        raise ConfigError(str(path), f"expected 4 table rows, found {len(rows)}")
    return np.asarray(rows)


def run_bell(config: CampaignConfig, out_dir: Path, fmt: str) -> None:
    bc = config.bell
    report: dict = {"mode": bc.mode, "row_signs": list(bc.row_signs),
                    "col_signs": list(bc.col_signs)}
    if bc.mode == "table":
        table = read_correlation_table(bc.table_path)
        value = generalized_bell_value(table, bc.row_signs, bc.col_signs)
        report["bell_value"] = value
        if bc.uncertainty is not None:
            sigmas = violation_sigmas(value, bc.uncertainty)
            report["uncertainty"] = bc.uncertainty
            report["violation_sigmas"] = sigmas
            report["violation_sigmas_printed"] = int(sigmas)
        _write_table(out_dir / "bell_table", [f"col_{c}" for c in range(4)],
                     [[_fmt(v) for v in row] for row in table], fmt)
    else:
        rho = _source_state(config)
        alpha_grid = np.linspace(bc.alpha_start, bc.alpha_stop, bc.alpha_points)
        phi_grid = np.linspace(bc.phi_start, bc.phi_stop, bc.phi_points)
        result = bell_scan(rho, alpha_grid, phi_grid,
                           alpha_s=config.quad.alpha_s, phi_s=config.quad.phi_s,
                           row_signs=bc.row_signs, col_signs=bc.col_signs,
                           config=config.analyzer)
        rows = [
            [_fmt(alpha_grid[i]), _fmt(phi_grid[j]), _fmt(result.surface[i, j])]
            for i in range(alpha_grid.size) for j in range(phi_grid.size)
        ]
        _write_table(out_dir / "bell_scan", ["alpha_i_deg", "phi_i_rad", "bell_value"], rows, fmt)
        report.update({
            "max_bell_value": result.max_value,
            "argmax_alpha_i_deg": result.argmax_alpha,
            "argmax_phi_i_rad": result.argmax_phi,
        })
        if bc.uncertainty is not None:
            report["uncertainty"] = bc.uncertainty
            report["violation_sigmas"] = violation_sigmas(result.max_value, bc.uncertainty)

    if bc.channels:
        rows = []
        for entry in bc.channels:
            sigmas = violation_sigmas(entry["bell_value"], entry["sigma"])
            rows.append([entry["signal"], entry["idler"], _fmt(entry["bell_value"]),
                         _fmt(entry["sigma"]), _fmt(sigmas), int(sigmas)])
        _write_table(out_dir / "channel_summary",
                     ["signal", "idler", "bell_value", "sigma",
                      "violation_sigmas", "violation_sigmas_printed"], rows, fmt)
        report["channels"] = [
            {"signal": row[0], "idler": row[1], "bell_value": float(row[2]),
             "sigma": float(row[3]), "violation_sigmas": float(row[4]),
             "violation_sigmas_printed": row[5]}
            for row in rows
        ]
    _write_json(out_dir / "bell_report.json", report)


def run_tomo(config: CampaignConfig, out_dir: Path, fmt: str) -> None:
    rho_true = _source_state(config)
    tc = config.tomography
    if tc.measurement_set == "pauli":
        effects = np.stack([pauli_effects(bases) for bases in pauli_settings()])
        allow_deficient = False
    else:
        settings = quad_plus_single_dof_settings(config.quad)
        effects = analyzer_settings_effects(settings, config.analyzer)
        allow_deficient = True
    dataset = sampled_dataset(rho_true, effects, tc.shots_per_setting, seed=config.seed)
    result = mle_reconstruct(dataset, tol=tc.tol, max_iter=tc.max_iter,
                             allow_deficient=allow_deficient)
    if not result.converged:
        raise NonConvergenceError(
            f"tomography did not converge within {tc.max_iter} iterations"
        )
    target = hyperentangled_state(config.source.phase_sum)
    interval = bootstrap_fidelity(dataset, target, resamples=tc.resamples,
                                  seed=config.seed + 1, tol=tc.tol,
                                  max_iter=tc.max_iter, allow_deficient=True)
    save_density_matrix(out_dir / "rho_estimate.txt", result.rho)
    _write_json(out_dir / "tomography_summary.json", {
        "measurement_set": tc.measurement_set,
        "shots_per_setting": tc.shots_per_setting,
        "fidelity": fidelity(result.rho, target),
        "fidelity_interval": [interval.low, interval.high],
        "bootstrap_resamples": tc.resamples,
        "bootstrap_failed": interval.n_failed,
        "log_likelihood": result.log_likelihood,
        "iterations": result.iterations,
        "converged": result.converged,
        "operator_span_rank": result.operator_span_rank,
    })


def run_budget(config: CampaignConfig, out_dir: Path, fmt: str) -> None:
    bc = config.budget
    pairs = [pair_for(n, bc.pair_sum) for n in bc.channels]
    pair_rows = [
        [pair.signal.number, pair.idler.number,
         _fmt(pair.signal.wavelength_nm), _fmt(pair.idler.wavelength_nm),
         _fmt(pair.pump_frequency_thz), _fmt(spectrum_weight(pair, bc.envelope))]
        for pair in pairs
    ]
    _write_table(out_dir / "channel_pairs",
                 ["signal", "idler", "signal_wavelength_nm", "idler_wavelength_nm",
                  "pump_frequency_thz", "spectrum_weight"], pair_rows, fmt)

    scenario_rows = []
    scenarios_payload = []
    for sc in bc.scenarios:
        capacity = aggregate_capacity(pairs, sc.multiplexed, sc.detector, sc.reference)
        limit = max_pair_rate(sc.multiplexed, sc.detector)
        per_channel = capacity.per_pair[0]
        scenario_rows.append([
            sc.name, _fmt(limit.rate), limit.binding,
            _fmt(per_channel.singles_cps), _fmt(per_channel.coincidences_cps),
            _fmt(capacity.total_coincidences_cps),
            _fmt(capacity.reference_rate), capacity.reference_binding,
            _fmt(capacity.reference_coincidences_cps), _fmt(capacity.advantage),
            _fmt(capacity.asymptotic_advantage) if capacity.asymptotic_advantage else "",
        ])
        scenarios_payload.append({
            "name": sc.name,
            "pair_rate_per_channel": limit.rate,
            "binding_constraint": limit.binding,
            "constraints": limit.constraints,
            "singles_per_detector_cps": per_channel.singles_cps,
            "coincidences_per_channel_cps": per_channel.coincidences_cps,
            "total_coincidences_cps": capacity.total_coincidences_cps,
            "reference_pair_rate": capacity.reference_rate,
            "reference_binding_constraint": capacity.reference_binding,
            "reference_coincidences_cps": capacity.reference_coincidences_cps,
            "advantage": capacity.advantage,
            "asymptotic_advantage": capacity.asymptotic_advantage,
        })
    _write_table(out_dir / "capacity_report",
                 ["scenario", "pair_rate_per_channel", "binding_constraint",
                  "singles_per_detector_cps", "coincidences_per_channel_cps",
                  "total_coincidences_cps", "reference_pair_rate",
                  "reference_binding_constraint", "reference_coincidences_cps",
                  "advantage", "asymptotic_advantage"], scenario_rows, fmt)
    _write_json(out_dir / "budget_report.json", {
        "pair_sum": bc.pair_sum,
        "channels": list(bc.channels),
        "scenarios": scenarios_payload,
    })


_COMMANDS = {
    "fringes": run_fringes,
    "bell": run_bell,
    "tomo": run_tomo,
    "budget": run_budget,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperpair",
        description="Simulation campaigns for a multiplexed hyperentangled pair source.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fringes", "simulate and fit coincidence fringe surfaces"),
        ("bell", "Bell-value scan or correlation-table recomputation"),
        ("tomo", "maximum-likelihood state reconstruction"),
        ("budget", "channel-pair rate and capacity budget"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON campaign config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--format", choices=("csv", "json"), default="csv",
                         help="table output format (JSON summaries are always written)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config, out_dir = _prepare_run(config, args)
        _COMMANDS[args.command](config, out_dir, args.format)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, FitConvergenceError, TomographyError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
