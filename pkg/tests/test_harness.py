import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from greedybandit import cli
from greedybandit.contexts import gaussian_spec, laplace_spec
from greedybandit.harness import (AGGREGATE_COLUMNS, ConfigError,
                                  ExperimentConfig, RAW_COLUMNS, ResultsTable,
                                  config_from_ini, config_to_ini,
                                  default_policies, load_raw_csv, preset_config,
                                  render_svg, run_experiment, write_csv,
                                  write_outputs, _episode_seeds)
from greedybandit.policies import PolicyConfig

SVG_NS = "{http://www.w3.org/2000/svg}"


def tiny_config(tmp_path, **kw):
    base = dict(d=2, K=3, T=20, reps=2, seed=5, sigma=0.5, spec=gaussian_spec(),
                policies=default_policies(0.5), output_dir=str(tmp_path / "out"),
                emit_svg=True, diagnostics=False, jobs=1)
    base.update(kw)
    return ExperimentConfig(**base)


class TestValidation:
    def test_key_paths_in_messages(self, tmp_path):
        with pytest.raises(ConfigError, match="experiment.T"):
            tiny_config(tmp_path, T=0).validate()
        with pytest.raises(ConfigError, match="experiment.reps"):
            tiny_config(tmp_path, reps=0).validate()
        with pytest.raises(ConfigError, match="experiment.sigma"):
            tiny_config(tmp_path, sigma=-1.0).validate()
        with pytest.raises(ConfigError, match="policies"):
            tiny_config(tmp_path, policies=[]).validate()

    def test_spec_dim_conflict(self, tmp_path):
        cfg = tiny_config(tmp_path, spec=gaussian_spec(mean=np.zeros(3)))
        with pytest.raises(ConfigError, match="spec"):
            cfg.validate()

    def test_theta0_shape(self, tmp_path):
        pols = [PolicyConfig("greedy", theta0=np.zeros(5))]
        with pytest.raises(ConfigError, match=r"policies\[0\].theta0"):
            tiny_config(tmp_path, policies=pols).validate()

    def test_duplicate_names(self, tmp_path):
        pols = [PolicyConfig("greedy", theta0=np.zeros(2), name="a"),
                PolicyConfig("linucb", name="a")]
        with pytest.raises(ConfigError, match="duplicate"):
            tiny_config(tmp_path, policies=pols).validate()


class TestRunExperiment:
    def test_trajectory_and_row_counts(self, tmp_path):
        cfg = tiny_config(tmp_path, reps=3)
        table = run_experiment(cfg)
        assert len(table.trajectories) == 3 * 3
        assert len(list(table.raw_rows())) == 3 * 3 * cfg.T
        assert len(list(table.aggregate_rows())) == 3 * cfg.T

    def test_reps_one_zero_std(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path, reps=1))
        stds = [row[3] for row in table.aggregate_rows()]
        assert all(s == 0.0 for s in stds)

    def test_deterministic_rerun(self, tmp_path):
        a = run_experiment(tiny_config(tmp_path))
        b = run_experiment(tiny_config(tmp_path))
        assert list(a.raw_rows()) == list(b.raw_rows())
        np.testing.assert_array_equal(a.theta_star, b.theta_star)

    def test_parallel_matches_serial(self, tmp_path):
        serial = run_experiment(tiny_config(tmp_path, jobs=1))
        parallel = run_experiment(tiny_config(tmp_path, jobs=3))
        assert list(serial.raw_rows()) == list(parallel.raw_rows())

    def test_derived_seeds_pairwise_distinct(self, tmp_path):
        cfg = tiny_config(tmp_path, reps=4)
        _, _, seeds = _episode_seeds(cfg)
        keys = {s.spawn_key for s in seeds}
        assert len(keys) == len(seeds) == 3 * 4

    def test_aggregate_recompute_identical(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path))
        rows1 = list(table.aggregate_rows())
        rows2 = list(table.aggregate_rows())
        for r1, r2 in zip(rows1, rows2):
            assert r1 == r2
        # Aggregate agrees with a recomputation from the raw rows.
        raw = list(table.raw_rows())
        for name, t, mean, std in rows1:
            vals = [r[4] for r in raw if r[0] == name and r[2] == t]
            assert abs(np.mean(vals) - mean) < 1e-12
            expected_std = np.std(vals, ddof=1) if len(vals) > 1 else 0.0
            assert abs(expected_std - std) < 1e-12


class TestCsv:
    def test_exact_columns_and_round_trip(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path, T=3, reps=1))
        raw = tmp_path / "raw.csv"
        agg_path = write_csv(table, raw)
        lines = raw.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(RAW_COLUMNS)
        assert len(lines) == 1 + 3 * 3
        agg_lines = open(agg_path, encoding="utf-8").read().splitlines()
        assert agg_lines[0] == ",".join(AGGREGATE_COLUMNS)
        parsed = load_raw_csv(raw)
        assert parsed == list(table.raw_rows())

    def test_newline_and_decimal_conventions(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path, T=2, reps=1))
        raw = tmp_path / "raw.csv"
        write_csv(table, raw)
        blob = raw.read_bytes()
        assert b"\r" not in blob
        assert b";" not in blob.splitlines()[1]
        assert blob.decode("utf-8")

    def test_empty_table_header_only(self, tmp_path):
        cfg = tiny_config(tmp_path)
        cfg.policies = []
        table = ResultsTable(config=cfg, theta_star=np.zeros(2),
                             theta0=np.zeros(2), trajectories={})
        raw = tmp_path / "empty.csv"
        agg = write_csv(table, raw)
        assert raw.read_text(encoding="utf-8") == ",".join(RAW_COLUMNS) + "\n"
        assert open(agg, encoding="utf-8").read() == ",".join(AGGREGATE_COLUMNS) + "\n"

    def test_missing_estimate_is_empty_cell(self, tmp_path):
        # Early greedy rounds have no OLS estimate: empty est_error_l2 cells.
        table = run_experiment(tiny_config(tmp_path, T=3, reps=1, d=2))
        raw = tmp_path / "raw.csv"
        write_csv(table, raw)
        first_data = raw.read_text(encoding="utf-8").splitlines()[1]
        assert ",," in first_data

    def test_io_error_mentions_path(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path, T=2, reps=1))
        with pytest.raises(OSError, match="no/such"):
            write_csv(table, tmp_path / "no" / "such" / "raw.csv")


class TestSvg:
    def test_structure_three_policies(self, tmp_path):
        table = run_experiment(tiny_config(tmp_path, T=15))
        path = tmp_path / "plot.svg"
        render_svg(table, path)
        root = ET.parse(path).getroot()  # well-formed XML
        polys = root.findall(f"{SVG_NS}polyline")
        bands = [p for p in root.findall(f"{SVG_NS}path")
                 if p.get("class") == "band"]
        assert len(polys) == 3 and len(bands) == 3
        texts = [t.text for t in root.iter(f"{SVG_NS}text")]
        assert "t" in texts and "cumulative regret" in texts
        for name in table.policy_names:
            assert name in texts

    def test_constant_zero_series_flat(self, tmp_path):
        # K=1 forces zero regret every round: the series is a flat line on
        # the axis.
        cfg = tiny_config(tmp_path, K=1, T=10, reps=2,
                          policies=default_policies(0.5, ("greedy",)))
        table = run_experiment(cfg)
        path = tmp_path / "flat.svg"
        render_svg(table, path)
        root = ET.parse(path).getroot()
        poly = root.find(f"{SVG_NS}polyline")
        ys = {pt.split(",")[1] for pt in poly.get("points").split()}
        assert len(ys) == 1


class TestOutputs:
    def test_write_outputs_bundle(self, tmp_path):
        cfg = tiny_config(tmp_path, T=10, diagnostics=False)
        paths = write_outputs(run_experiment(cfg))
        assert set(paths) == {"raw", "aggregate", "svg"}
        for p in paths.values():
            assert open(p, "rb").read()

    def test_diagnostics_sidecar(self, tmp_path):
        cfg = tiny_config(tmp_path, T=60, reps=1, diagnostics=True)
        paths = write_outputs(run_experiment(cfg))
        text = open(paths["diagnostics"], encoding="utf-8").read()
        assert "lambda_star_hat" in text and "gram growth" in text

    def test_byte_identical_rerun(self, tmp_path):
        cfg1 = tiny_config(tmp_path, output_dir=str(tmp_path / "a"))
        cfg2 = tiny_config(tmp_path, output_dir=str(tmp_path / "b"))
        p1 = write_outputs(run_experiment(cfg1))
        p2 = write_outputs(run_experiment(cfg2))
        for key in ("raw", "aggregate", "svg"):
            assert open(p1[key], "rb").read() == open(p2[key], "rb").read()


class TestPresets:
    def test_shapes(self):
        cfg = preset_config("d100-k20", "laplace", T=10, reps=1)
        assert (cfg.d, cfg.K) == (100, 20)
        cfg = preset_config("d20-k100", "gaussian", T=10, reps=1)
        assert (cfg.d, cfg.K) == (20, 100)

    def test_uniform_ball_radius_scales_with_d(self):
        cfg = preset_config("d20-k20", "uniform-ball")
        assert cfg.spec.radius == pytest.approx(math.sqrt(20))
        cfg = preset_config("d100-k20", "uniform-ball")
        assert cfg.spec.radius == pytest.approx(math.sqrt(100))

    def test_gaussian_preset_correlated(self):
        cfg = preset_config("d20-k20", "gaussian")
        assert cfg.spec.rho == 0.7
        assert cfg.spec.arm_coupling == "shared_gaussian_covariance"

    def test_unknown_names_rejected(self):
        with pytest.raises(ConfigError):
            preset_config("d10-k10", "gaussian")
        with pytest.raises(ConfigError):
            preset_config("d20-k20", "semicircle")

    def test_baselines_assume_experiment_sigma(self):
        cfg = preset_config("d20-k20", "gaussian", sigma=0.25)
        assert all(p.sigma_assumed == 0.25 for p in cfg.policies)


class TestIniConfig:
    def test_round_trip(self, tmp_path):
        cfg = preset_config("d20-k100", "trunc-cauchy", T=50, reps=2, seed=9,
                            output_dir=str(tmp_path / "o"))
        ini = tmp_path / "exp.ini"
        config_to_ini(cfg, ini)
        back = config_from_ini(ini)
        assert (back.d, back.K, back.T, back.reps, back.seed) == (20, 100, 50, 2, 9)
        assert back.spec.kind == "cauchy"
        assert back.spec.truncation == cfg.spec.truncation
        assert [p.kind for p in back.policies] == ["greedy", "linucb", "lints"]

    def test_unknown_keys_rejected(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[experiment]\nd = 2\nk = 2\nwhat = 1\n[spec]\nkind = laplace\n")
        with pytest.raises(ConfigError, match="experiment.what"):
            config_from_ini(ini)

    def test_missing_sections(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[spec]\nkind = laplace\n")
        with pytest.raises(ConfigError, match="experiment"):
            config_from_ini(ini)
        ini.write_text("[experiment]\nd = 2\nk = 2\n")
        with pytest.raises(ConfigError, match="spec"):
            config_from_ini(ini)

    def test_bad_values_name_key(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[experiment]\nd = two\nk = 2\n[spec]\nkind = laplace\n")
        with pytest.raises(ConfigError, match="experiment.d"):
            config_from_ini(ini)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            config_from_ini(tmp_path / "nope.ini")


class TestCli:
    def test_successful_run(self, tmp_path, capsys):
        out = tmp_path / "o"
        rc = cli.main(["--preset", "d20-k20", "--dist", "laplace", "--T", "10",
                       "--reps", "1", "--out", str(out), "--no-svg"])
        assert rc == 0
        assert (out / "raw.csv").exists()
        assert not (out / "regret.svg").exists()
        captured = capsys.readouterr().out
        assert "final mean cumulative regret" in captured

    def test_list_presets(self, capsys):
        assert cli.main(["--list-presets"]) == 0
        out = capsys.readouterr().out
        assert "d100-k20" in out and "trunc-cauchy" in out

    def test_invalid_config_exit_1(self, capsys):
        assert cli.main(["--T", "0"]) == 1
        assert "invalid config" in capsys.readouterr().err

    def test_flags_override_file(self, tmp_path):
        cfg = preset_config("d20-k20", "laplace", T=40, reps=2,
                            output_dir=str(tmp_path / "a"))
        ini = tmp_path / "exp.ini"
        config_to_ini(cfg, ini)
        out = tmp_path / "b"
        rc = cli.main([str(ini), "--T", "5", "--reps", "1", "--out", str(out),
                       "--no-svg"])
        assert rc == 0
        rows = load_raw_csv(out / "raw.csv")
        assert max(r[2] for r in rows) == 5
        assert max(r[1] for r in rows) == 0

    def test_algo_selection(self, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["--dist", "gaussian", "--T", "8", "--reps", "1",
                       "--algo", "greedy,linucb", "--out", str(out), "--no-svg"])
        assert rc == 0
        rows = load_raw_csv(out / "raw.csv")
        assert {r[0] for r in rows} == {"greedy", "linucb"}

    def test_shape_flags_rebuild_spec(self, tmp_path):
        # Overriding d must rebuild d-dependent preset specs.
        out = tmp_path / "o"
        rc = cli.main(["--dist", "uniform-ball", "--d", "4", "--K", "2",
                       "--T", "6", "--reps", "1", "--out", str(out), "--no-svg"])
        assert rc == 0
