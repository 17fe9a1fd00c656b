import json

import numpy as np
import pytest
import yaml

from exportnet import load_panel, load_params
from exportnet.cli import main
from conftest import DATA_DIR

CPI = str(DATA_DIR / "us_cpi_inflation_1963_2000.csv")


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """One generated panel shared by the command tests."""
    root = tmp_path_factory.mktemp("cli_world")
    out = root / "gen"
    rc = main([
        "generate", "--out", str(out), "--products", "20", "--years", "8",
        "--seed", "3",
    ])
    assert rc == 0
    params = root / "params.json"
    params.write_text(json.dumps(
        {"coupling": 0.05, "sigma": 0.08, "tau": 0.8, "mu_bar": 0.03}
    ) + "\n")
    return {"root": root, "out": out, "panel": str(out / "panel.csv"),
            "params": str(params)}


class TestGenerate:
    def test_writes_panel_truth_and_config(self, world):
        panel = load_panel(world["panel"])
        assert panel.n_products == 20 and panel.n_years == 8
        assert panel.base_year == 1962
        truth = json.loads((world["out"] / "truth.json").read_text())
        assert truth["coupling"] == 0.051 and truth["seed"] == 3
        echoed = yaml.safe_load((world["out"] / "config.yaml").read_text())
        assert echoed["products"] == 20 and echoed["years"] == 8

    def test_output_directory_is_required(self, capsys):
        assert main(["generate"]) == 2
        assert "output directory" in capsys.readouterr().err


class TestIngest:
    def test_summary_weights_and_correlation(self, world, tmp_path):
        rc = main([
            "ingest", "--panel", world["panel"], "--inflation", CPI,
            "--out", str(tmp_path),
        ])
        assert rc == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["n_products"] == 20 and summary["n_years"] == 8
        assert summary["repaired_cells"] == 0
        assert summary["inflation_years"] == 38
        assert 0 < summary["mean_abs_correlation"] < 1
        lines = (tmp_path / "weights.csv").read_text().strip().splitlines()
        assert lines[0] == "product_id,weight" and len(lines) == 21
        corr = np.loadtxt(tmp_path / "correlation.csv", delimiter=",")
        assert corr.shape == (20, 20)
        np.testing.assert_allclose(np.diag(corr), 1.0)

    def test_floor_policy_repairs_reject_refuses(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "product_id,year_1962,year_1963,year_1964,year_1965\n"
            "a,1.0,2.0,3.0,4.0\n"
            "b,1.0,0.0,2.0,2.0\n"
            "c,5.0,4.5,6.0,5.5\n"
        )
        assert main(["ingest", "--panel", str(bad),
                     "--out", str(tmp_path / "r")]) == 2
        assert "b" in capsys.readouterr().err
        rc = main(["ingest", "--panel", str(bad), "--policy", "floor",
                   "--out", str(tmp_path / "f")])
        assert rc == 0
        summary = json.loads((tmp_path / "f" / "summary.json").read_text())
        assert summary["repaired_cells"] == 1

    def test_missing_panel_file(self, tmp_path, capsys):
        rc = main(["ingest", "--panel", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_malformed_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("product,year_1962\na,1.0\n")
        assert main(["ingest", "--panel", str(bad),
                     "--out", str(tmp_path / "o")]) == 2

    def test_inflation_base_year_mismatch(self, world, tmp_path, capsys):
        late = tmp_path / "late.csv"
        rows = "\n".join(f"{y},2.0" for y in range(1970, 1978))
        late.write_text("year,rate_percent\n" + rows + "\n")
        rc = main(["ingest", "--panel", world["panel"], "--inflation",
                   str(late), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "1963" in capsys.readouterr().err

    def test_panel_is_required(self, tmp_path, capsys):
        assert main(["ingest", "--out", str(tmp_path)]) == 2
        assert "panel CSV is required" in capsys.readouterr().err


class TestCalibrate:
    def test_report_and_diagnostics_artifacts(self, world, tmp_path, capsys):
        rc = main([
            "calibrate", "--panel", world["panel"], "--out", str(tmp_path),
            "--replicates", "10", "--seed", "1",
        ])
        assert rc == 0
        assert "coupling=" in capsys.readouterr().out
        params = load_params(tmp_path / "report.json")
        assert np.isfinite([params.coupling, params.sigma,
                            params.tau, params.mu_bar]).all()
        payload = json.loads((tmp_path / "report.json").read_text())
        assert "variance_curve" in payload
        curve = (tmp_path / "variance_curve.csv").read_text().splitlines()
        assert curve[0] == "horizon_years,empirical,fitted" and len(curve) > 3
        points = (tmp_path / "fg_points.csv").read_text().splitlines()
        assert points[0] == "product,start,stop,load,rate,selected"
        assert len(points) == 1 + 20 * 8 * 7 / 2


class TestSimulate:
    def run(self, world, out, *extra):
        return main([
            "simulate", "--panel", world["panel"], "--params", world["params"],
            "--out", str(out), "--horizon", "3", "--replicates", "2",
            "--seed", "5", *extra,
        ])

    def test_same_seed_is_byte_identical(self, world, tmp_path, capsys):
        assert self.run(world, tmp_path / "a") == 0
        assert "wrote 2 trajectories" in capsys.readouterr().out
        assert self.run(world, tmp_path / "b") == 0
        for name in ("trajectory_000.csv", "trajectory_001.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_independent_noise_changes_the_draws(self, world, tmp_path):
        assert self.run(world, tmp_path / "cor") == 0
        assert self.run(world, tmp_path / "ind", "--independent-noise") == 0
        assert (tmp_path / "cor" / "trajectory_000.csv").read_bytes() != \
            (tmp_path / "ind" / "trajectory_000.csv").read_bytes()

    def test_blowup_exits_1(self, world, tmp_path, capsys):
        wild = tmp_path / "wild.json"
        wild.write_text(json.dumps(
            {"coupling": 0.0, "sigma": 0.0, "tau": 0.8, "mu_bar": 1e7}
        ))
        rc = main([
            "simulate", "--panel", world["panel"], "--params", str(wild),
            "--out", str(tmp_path / "o"), "--horizon", "1",
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestAnalyze:
    def test_smoke_artifacts(self, world, tmp_path):
        rc = main([
            "analyze", "--panel", world["panel"], "--params", world["params"],
            "--out", str(tmp_path), "--horizon", "5", "--replicates", "12",
            "--seed", "2",
        ])
        assert rc == 0
        analysis = json.loads((tmp_path / "analysis.json").read_text())
        assert set(analysis["relaxation"]) == {
            "start", "plateau", "timescale_years", "residual"
        }
        assert len(analysis["comparison_products"]) == 9
        assert analysis["kernel_residual"] < 1e-12
        assert analysis["correlator_mae_9_products"] >= 0
        assert {"exponent", "power_law"} <= set(analysis["tail"])
        relax = (tmp_path / "relaxation.csv").read_text().splitlines()
        assert relax[0] == "t,rank_correlation,fitted" and len(relax) == 7
        assert (tmp_path / "edges.csv").exists()


class TestSweep:
    def test_smoke_artifacts(self, world, tmp_path):
        rc = main([
            "sweep", "--panel", world["panel"], "--params", world["params"],
            "--out", str(tmp_path), "--grid-min", "0.01", "--grid-max", "0.5",
            "--grid-points", "4", "--replicates", "10",
            "--transient-horizon", "4", "--asymptotic-horizon", "8",
            "--asymptotic-replicates", "10", "--seed", "6",
        ])
        assert rc == 0
        summary = json.loads((tmp_path / "sweep.json").read_text())
        grid = np.geomspace(0.01, 0.5, 4)
        assert summary["transient_argmax"] in grid
        assert summary["asymptotic_argmax"] in grid
        assert summary["baseline"] == 0.03
        assert isinstance(summary["transient_below_baseline_at_top"], bool)
        for name in ("sweep_transient.csv", "sweep_asymptotic.csv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert lines[0] == "coupling,growth_rate,stderr,horizon,baseline"
            assert len(lines) == 5


class TestSelftest:
    def test_battery_passes(self, capsys):
        assert main(["selftest"]) == 0
        assert "all 5 checks passed" in capsys.readouterr().out


class TestOptionResolution:
    def test_cli_beats_config_beats_default(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("products: 15\nseed: 9\n")
        out = tmp_path / "o"
        rc = main(["generate", "--config", str(cfg), "--products", "10",
                   "--years", "5", "--out", str(out)])
        assert rc == 0
        echoed = yaml.safe_load((out / "config.yaml").read_text())
        assert echoed["products"] == 10   # flag wins over file
        assert echoed["seed"] == 9        # file wins over default
        assert echoed["years"] == 5
        panel = load_panel(out / "panel.csv")
        assert panel.n_products == 10 and panel.n_years == 5

    def test_unknown_config_key_is_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("verbosity: 3\n")
        rc = main(["generate", "--config", str(cfg), "--out",
                   str(tmp_path / "o")])
        assert rc == 2
        assert "unknown option" in capsys.readouterr().err

    def test_config_must_be_a_mapping(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("- 1\n- 2\n")
        rc = main(["generate", "--config", str(cfg), "--out",
                   str(tmp_path / "o")])
        assert rc == 2
        assert "key-value mapping" in capsys.readouterr().err

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 2
        assert "generate" in capsys.readouterr().out

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip()

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
