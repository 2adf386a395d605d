import json
import math
from pathlib import Path

import pytest

from hyperpair.cli import main
from hyperpair.config import ConfigError, load_config, parse_config, resolved_dict

PUBLISHED_CORRELATIONS_CSV = """0.51,-0.33,-0.46,-0.41
-0.57,0.34,0.50,0.54
-0.36,0.30,0.62,0.52
-0.69,0.58,0.55,0.46
"""

BUDGET_SECTION = {
    "pair_sum": 43,
    "channels": [10, 11, 12, 13, 14],
    "scenarios": [
        {
            "name": "installed",
            "detector": {"efficiency": 0.2, "timing_resolution_ps": 100.0,
                         "saturation_cps": 20000.0},
            "multiplexed": {"transmission_db": -13.0, "coherence_time_ps": 5.0},
            "reference": {"transmission_db": -10.0, "coherence_time_ps": 1.0},
        },
        {
            "name": "best",
            "detector": {"efficiency": 0.9, "timing_resolution_ps": 15.0,
                         "saturation_cps": 150000000.0},
            "multiplexed": {"transmission_db": -13.0, "coherence_time_ps": 5.0},
            "reference": {"transmission_db": -10.0, "coherence_time_ps": 1.0},
        },
    ],
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestConfigValidation:
    def test_defaults_parse(self):
        config = parse_config({})
        assert config.seed == 0
        assert config.analyzer.pol_sign_convention == "sum"

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError, match="fringes.alpha_pointz"):
            parse_config({"fringes": {"alpha_pointz": 5}})

    def test_nested_type_error_has_path(self):
        with pytest.raises(ConfigError, match="source.visibility_pol"):
            parse_config({"source": {"visibility_pol": "high"}})

    def test_range_check(self):
        with pytest.raises(ConfigError, match="must be <= 1"):
            parse_config({"source": {"white_noise_weight": 1.4}})

    def test_table_mode_requires_path(self):
        with pytest.raises(ConfigError, match="table_path"):
            parse_config({"bell": {"mode": "table"}})

    def test_sign_pattern_validated(self):
        with pytest.raises(ConfigError, match="row_signs"):
            parse_config({"bell": {"row_signs": [1, 2, 3, 4]}})

    def test_json_line_diagnostic(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"seed": 1,\n  oops\n}')
        with pytest.raises(ConfigError, match="line 2"):
            load_config(path)

    def test_resolved_dict_round_trips(self):
        config = parse_config({"seed": 9, "budget": BUDGET_SECTION})
        resolved = resolved_dict(config)
        assert parse_config(json.loads(json.dumps(resolved))).seed == 9

    def test_demo_config_parses(self):
        config = load_config(Path(__file__).resolve().parents[1] / "configs" / "demo.json")
        assert config.tomography.measurement_set == "pauli"
        assert len(config.budget.scenarios) == 2


class TestExitCodes:
    def test_config_error_exit_2(self, tmp_path, capsys):
        path = write_config(tmp_path, {"nonsense": 1})
        code = main(["budget", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "nonsense" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path, capsys):
        code = main(["budget", "--config", str(tmp_path / "absent.json")])
        assert code == 2

    def test_nonconvergence_exit_3(self, tmp_path, capsys):
        payload = {
            "tomography": {"measurement_set": "quad_plus_single_dof",
                           "shots_per_setting": 50, "tol": 0.0, "max_iter": 2},
        }
        path = write_config(tmp_path, payload)
        code = main(["tomo", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 3
        assert "non-convergence" in capsys.readouterr().err

    def test_success_exit_0(self, tmp_path):
        path = write_config(tmp_path, {"budget": BUDGET_SECTION})
        assert main(["budget", "--config", str(path), "--out", str(tmp_path / "o")]) == 0


class TestBudgetCommand:
    def test_published_figures_in_report(self, tmp_path):
        path = write_config(tmp_path, {"budget": BUDGET_SECTION})
        out = tmp_path / "out"
        assert main(["budget", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "budget_report.json").read_text())
        installed, best = report["scenarios"]
        assert installed["binding_constraint"] == "saturation"
        assert installed["pair_rate_per_channel"] == pytest.approx(8e6, rel=0.01)
        assert installed["coincidences_per_channel_cps"] == pytest.approx(100.0, rel=0.01)
        assert installed["reference_coincidences_cps"] == pytest.approx(200.0, rel=0.01)
        assert best["binding_constraint"] == "timing-resolution"
        assert best["pair_rate_per_channel"] == pytest.approx(3.33e9, rel=0.01)
        assert best["total_coincidences_cps"] == pytest.approx(4.15e6, rel=0.05)
        pairs = (out / "channel_pairs.csv").read_text().splitlines()
        assert len(pairs) == 6  # header + five pairs

    def test_json_format_switch(self, tmp_path):
        path = write_config(tmp_path, {"budget": BUDGET_SECTION})
        out = tmp_path / "out"
        assert main(["budget", "--config", str(path), "--out", str(out),
                     "--format", "json"]) == 0
        assert (out / "capacity_report.json").exists()
        assert not (out / "capacity_report.csv").exists()


class TestBellCommand:
    def test_table_mode_recomputes_published_value(self, tmp_path):
        table_path = tmp_path / "correlations.csv"
        table_path.write_text(PUBLISHED_CORRELATIONS_CSV)
        payload = {
            "bell": {
                "mode": "table", "table_path": str(table_path), "uncertainty": 0.12,
                "channels": [
                    {"signal": 10, "idler": 33, "bell_value": 7.73, "sigma": 0.12},
                    {"signal": 13, "idler": 30, "bell_value": 7.61, "sigma": 0.11},
                ],
            }
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["bell", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "bell_report.json").read_text())
        assert report["bell_value"] == pytest.approx(7.74, abs=1e-9)
        assert report["violation_sigmas_printed"] == 31
        printed = [c["violation_sigmas_printed"] for c in report["channels"]]
        assert printed == [31, 32]

    def test_malformed_table_exit_2(self, tmp_path, capsys):
        table_path = tmp_path / "correlations.csv"
        table_path.write_text("0.1,0.2\n")
        payload = {"bell": {"mode": "table", "table_path": str(table_path)}}
        path = write_config(tmp_path, payload)
        assert main(["bell", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "row 1" in capsys.readouterr().err

    def test_scan_mode_ideal_state(self, tmp_path):
        payload = {"bell": {"alpha_points": 49, "phi_points": 49}}
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["bell", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "bell_report.json").read_text())
        assert report["max_bell_value"] == pytest.approx(8.0, abs=1e-9)
        assert report["argmax_alpha_i_deg"] == pytest.approx(22.5)
        assert report["argmax_phi_i_rad"] == pytest.approx(math.pi / 4)
        scan = (out / "bell_scan.csv").read_text().splitlines()
        assert scan[0] == "alpha_i_deg,phi_i_rad,bell_value"
        assert len(scan) == 1 + 49 * 49


class TestFringesCommand:
    FRINGES = {
        "source": {"visibility_pol": 0.95, "visibility_et": 0.95},
        "fringes": {"alpha_points": 9, "phi_points": 9, "pair_rate_cps": 400.0,
                    "integration_s": 50.0, "dark_rate_cps": 0.4},
    }

    def test_surfaces_and_fits_written(self, tmp_path):
        path = write_config(tmp_path, self.FRINGES)
        out = tmp_path / "out"
        assert main(["fringes", "--config", str(path), "--out", str(out)]) == 0
        fits = json.loads((out / "fringe_fits.json").read_text())
        assert len(fits["surfaces"]) == 4
        assert fits["mean_visibility_pol"] == pytest.approx(0.95, abs=0.03)
        assert fits["mean_visibility_et"] == pytest.approx(0.95, abs=0.03)
        for k in range(4):
            lines = (out / f"fringes_surface_{k}.csv").read_text().splitlines()
            assert len(lines) == 1 + 81

    def test_seed_override_archived_and_effective(self, tmp_path):
        path = write_config(tmp_path, self.FRINGES)
        out_a, out_b, out_c = (tmp_path / name for name in ("a", "b", "c"))
        main(["fringes", "--config", str(path), "--out", str(out_a), "--seed", "1"])
        main(["fringes", "--config", str(path), "--out", str(out_b), "--seed", "1"])
        main(["fringes", "--config", str(path), "--out", str(out_c), "--seed", "2"])
        assert json.loads((out_a / "resolved_config.json").read_text())["seed"] == 1
        surface_a = (out_a / "fringes_surface_0.csv").read_text()
        assert surface_a == (out_b / "fringes_surface_0.csv").read_text()
        assert surface_a != (out_c / "fringes_surface_0.csv").read_text()


class TestGoldenDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        table_path = tmp_path / "correlations.csv"
        table_path.write_text(PUBLISHED_CORRELATIONS_CSV)
        payload = {
            "seed": 11,
            "source": {"visibility_pol": 0.97, "visibility_et": 0.97},
            "fringes": {"alpha_points": 7, "phi_points": 7, "pair_rate_cps": 200.0,
                        "integration_s": 20.0, "dark_rate_cps": 0.25},
            "bell": {"mode": "table", "table_path": str(table_path), "uncertainty": 0.12},
            "budget": BUDGET_SECTION,
        }
        path = write_config(tmp_path, payload)
        runs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            for command in ("fringes", "bell", "budget"):
                assert main([command, "--config", str(path), "--out", str(out)]) == 0
            runs.append(tree_bytes(out))
        assert runs[0] == runs[1]
