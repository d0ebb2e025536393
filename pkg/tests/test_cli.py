"""Scenario files, CSV round trips through the CLI, manifests, exit codes."""

from __future__ import annotations

import json

import numpy as np
import pytest

from sizepop.cli import main
from sizepop.model import Grid3, validate_scenario
from sizepop.oracles import run_oracles
from sizepop.scenario_io import (
    ScenarioFileError,
    parse_scenario,
    read_field_csv,
    write_field_csv,
)

MINIMAL = {
    "grid": {"Ns": 6, "Nt": 6, "Nx": 4, "s_f": 1.0, "T": 1.0, "L": 1.0},
    "rates": {"gamma": 1.0, "mu": 0.1, "r": 0.5, "f": 0.0, "C": 0.1, "p0": 1.0},
    "diffusion_k": 0.01,
    "bounds": {"phi_l": 0.0, "phi_m": 1.0},
    "cost": {"rho": 5.0, "c": 1.0, "sign_variant": "minus"},
    "tolerances": {"fixed_point_tol": 1e-9, "max_iters": 100, "relax_omega": 1.0, "seed": 0},
}


def _write(tmp_path, doc, name="scenario.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestParseScenario:
    def test_minimal_constants(self, tmp_path):
        sc = parse_scenario(_write(tmp_path, MINIMAL))
        vsc = validate_scenario(sc)
        assert vsc.growth_case.tag == "a"
        np.testing.assert_allclose(vsc.mu_grid, 0.1)

    def test_wrong_table_shape_names_key(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["rates"]["mu"] = {"table": [[0.1, 0.2], [0.3, 0.4]]}
        with pytest.raises(ScenarioFileError, match="rates.mu"):
            parse_scenario(_write(tmp_path, doc))

    def test_missing_diffusion_k(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        del doc["diffusion_k"]
        with pytest.raises(ScenarioFileError, match="diffusion_k required"):
            parse_scenario(_write(tmp_path, doc))

    def test_unknown_key_rejected(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["rates"]["beta"] = 0.5
        with pytest.raises(ScenarioFileError, match="unknown key 'beta'"):
            parse_scenario(_write(tmp_path, doc))

    def test_unknown_preset_rejected(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["rates"]["gamma"] = {"preset": "quadratic-in-s", "a": 1.0}
        with pytest.raises(ScenarioFileError, match="unknown preset"):
            parse_scenario(_write(tmp_path, doc))

    def test_parse_error_reports_line_and_column(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "grid": [,]\n}')
        with pytest.raises(ScenarioFileError, match="line 2"):
            parse_scenario(path)

    def test_tabulated_rate_round_trip(self, tmp_path, rng):
        doc = json.loads(json.dumps(MINIMAL))
        table = (0.2 + 0.5 * rng.random((6, 7, 4))).tolist()
        doc["rates"]["mu"] = {"table": table}
        vsc = validate_scenario(parse_scenario(_write(tmp_path, doc)))
        np.testing.assert_allclose(vsc.mu_grid, np.asarray(table))


class TestSubcommands:
    def test_simulate_outputs_and_manifest(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        out = tmp_path / "sim"
        assert main(["simulate", "--scenario", scenario, "--beta", "0.4",
                     "--out", str(out)]) == 0
        for name in ("p.csv", "newborns.csv", "population.csv", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert set(manifest["artifacts"]) == {"p.csv", "newborns.csv", "population.csv"}
        assert all(len(v) == 64 for v in manifest["artifacts"].values())

    def test_simulate_deterministic(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert main(["simulate", "--scenario", scenario, "--beta", "0.4",
                         "--out", str(out)]) == 0
            outs.append({n: (out / n).read_bytes()
                         for n in ("p.csv", "newborns.csv", "population.csv")})
        assert outs[0] == outs[1]

    def test_adjoint_outputs(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        out = tmp_path / "adj"
        assert main(["adjoint", "--scenario", scenario, "--beta", "0.4",
                     "--out", str(out)]) == 0
        grid = Grid3(**MINIMAL["grid"])
        phi = read_field_csv(out / "phi.csv", grid)
        assert phi.axes == ("size", "time", "space")
        assert np.abs(phi.values[:, -1, :]).max() == 0.0

    def test_beta_from_field_file(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        grid = Grid3(**MINIMAL["grid"])
        from sizepop.model import Field
        beta = Field.full(grid, ("size", "time", "space"), 0.25)
        beta_path = tmp_path / "beta.csv"
        write_field_csv(beta, beta_path)
        out = tmp_path / "simfile"
        assert main(["simulate", "--scenario", scenario, "--beta", str(beta_path),
                     "--out", str(out)]) == 0
        # constant file equals the constant run
        out2 = tmp_path / "simconst"
        assert main(["simulate", "--scenario", scenario, "--beta", "0.25",
                     "--out", str(out2)]) == 0
        assert (out / "p.csv").read_bytes() == (out2 / "p.csv").read_bytes()

    def test_simulate_with_tabulated_rates(self, tmp_path, rng):
        doc = json.loads(json.dumps(MINIMAL))
        doc["rates"]["mu"] = {"table": (0.05 + 0.2 * rng.random((6, 7, 4))).tolist()}
        doc["rates"]["p0"] = {"table": (0.5 + rng.random((6, 4))).tolist()}
        out = tmp_path / "tab"
        assert main(["simulate", "--scenario", _write(tmp_path, doc),
                     "--beta", "0.3", "--out", str(out)]) == 0
        grid = Grid3(**MINIMAL["grid"])
        p = read_field_csv(out / "p.csv", grid)
        assert p.values.min() >= 0.0
        np.testing.assert_allclose(p.values[:, 0, :], np.asarray(doc["rates"]["p0"]["table"]))

    def test_optimize_report(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        out = tmp_path / "opt"
        assert main(["optimize", "--scenario", scenario, "--out", str(out),
                     "--tol", "1e-8", "--max-iters", "50"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "converged"
        assert len(report["J_history"]) == report["iterations"]
        assert report["contraction"] is not None
        assert (np.asarray(report["update_residuals"][:-1]) > 0).all()

    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck", "--directions", "2", "--seed", "1"]) == 0
        assert "all pass" in capsys.readouterr().out

    def test_non_finite_control_is_numerical_failure(self, tmp_path):
        scenario = _write(tmp_path, MINIMAL)
        grid = Grid3(**MINIMAL["grid"])
        from sizepop.model import Field
        vals = np.full((grid.Ns, grid.Nt + 1, grid.Nx), 0.2)
        vals[1, 2, 1] = np.nan
        beta_path = tmp_path / "bad_beta.csv"
        write_field_csv(Field(grid, ("size", "time", "space"), vals), beta_path)
        assert main(["simulate", "--scenario", scenario, "--beta", str(beta_path),
                     "--out", str(tmp_path / "nf")]) == 3

    def test_invalid_scenario_is_usage_error(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["rates"]["r"] = 1.0  # violates the female-ratio assumption
        assert main(["simulate", "--scenario", _write(tmp_path, doc),
                     "--beta", "0.4", "--out", str(tmp_path / "x")]) == 1

    def test_oracle_only_filter(self, tmp_path, capsys):
        out = tmp_path / "oracle"
        assert main(["oracle", "--only", "heat_mode_decay", "--out", str(out)]) == 0
        report = json.loads((out / "oracle_report.json").read_text())
        assert [r["name"] for r in report["oracles"]] == ["heat_mode_decay"]

    def test_oracle_gradcheck_alias_runs_fd_gradient(self, capsys):
        assert main(["oracle", "--only", "gradcheck"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert [r["name"] for r in report["oracles"]] == ["fd_gradient"]

    def test_unknown_oracle_is_usage_error(self):
        assert main(["oracle", "--only", "nonexistent"]) == 1


def test_corrupted_adjoint_fails_duality_oracle():
    report = run_oracles(names=["transpose_duality"], corrupt_adjoint_sign=True)
    assert not report["all_passed"]
    clean = run_oracles(names=["transpose_duality"])
    assert clean["all_passed"]
