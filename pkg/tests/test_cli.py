"""CLI: config resolution, dispatch, output formats, determinism."""

import json
from pathlib import Path

import pytest

import rdelab.cli as cli


def run(argv):
    return cli.dispatch(argv)


def read_tree(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestConfigLoading:
    def test_minimal_file_fills_defaults(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('rde = "mod2"\nq = 0.5\n')
        config = cli.load_config(cfg)
        assert config.rde == "mod2"
        assert config.q == 0.5
        assert config.k == 512
        assert config.depth == 8

    def test_invalid_value_names_field(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("q = 1.5\n")
        with pytest.raises(cli.ValidationError, match="'q'"):
            cli.load_config(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("qq = 0.5\n")
        with pytest.raises(cli.ValidationError, match="qq"):
            cli.load_config(cfg)

    def test_parse_error_reports_location(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("q ===== oops\n")
        with pytest.raises(cli.ValidationError, match="line"):
            cli.load_config(cfg)

    def test_experiment_table_overrides_for_its_command(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('depth = 3\n[rtp]\ndepth = 6\n')
        assert cli.load_config(cfg, command="rtp").depth == 6
        assert cli.load_config(cfg, command="coupled").depth == 3

    def test_unknown_table_rejected(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("[nonsense]\ndepth = 3\n")
        with pytest.raises(cli.ValidationError, match="nonsense"):
            cli.load_config(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(cli.ValidationError, match="not found"):
            cli.load_config(tmp_path / "absent.toml")

    def test_type_mismatch(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('depth = "deep"\n')
        with pytest.raises(cli.ValidationError, match="depth"):
            cli.load_config(cfg)


class TestDispatchErrors:
    def test_unknown_subcommand_usage_exit_1(self, capsys):
        assert run(["frobnicate"]) == 1
        err = capsys.readouterr().err
        assert "usage" in err

    def test_unknown_flag_usage_exit_1(self, capsys):
        assert run(["rtp", "--frobnicate", "3"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand_exit_1(self, capsys):
        assert run([]) == 1

    def test_validation_error_exit_1(self, tmp_path, capsys):
        assert run(["rtp", "--q", "1.5", "--rde", "mod2", "--out", str(tmp_path)]) == 1
        assert "'q'" in capsys.readouterr().err

    def test_budget_error_exit_2(self, tmp_path, capsys):
        code = run(
            ["rtp", "--rde", "frozen-perc", "--depth", "64", "--samples", "10",
             "--out", str(tmp_path)]
        )
        assert code == 2
        assert "budget" in capsys.readouterr().err

    def test_flags_alone_build_config(self, tmp_path):
        code = run(
            ["mod2-theta", "--q", "0.3", "--tol", "1e-12", "--out", str(tmp_path)]
        )
        assert code == 0


class TestMod2Theta:
    def test_prints_fixed_point_and_iterations(self, tmp_path, capsys):
        code = run(["mod2-theta", "--q", "0.3", "--tol", "1e-12", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "0.250000000000" in out
        assert "iterations=" in out
        payload = json.loads((tmp_path / "mod2_theta.json").read_text())
        assert payload["theta"] == pytest.approx(0.25, abs=1e-12)
        assert payload["command"] == "mod2-theta"
        assert payload["seed"] == 0
        assert "workers" not in payload["config"]


class TestRtp:
    def test_outputs_and_sidecar(self, tmp_path, capsys):
        code = run(
            ["rtp", "--rde", "frozen-perc", "--r", "3", "--depth", "4",
             "--samples", "500", "--seed", "7", "--out", str(tmp_path)]
        )
        assert code == 0
        roots = (tmp_path / "roots.csv").read_text().splitlines()
        assert roots[0] == "x"
        assert len(roots) == 501
        payload = json.loads((tmp_path / "roots.json").read_text())
        assert payload["config"]["seed"] == 7
        assert payload["ks_vs_target"] is not None
        assert "rtp:" in capsys.readouterr().out

    def test_quicksort_has_no_target(self, tmp_path):
        code = run(
            ["rtp", "--rde", "quicksort", "--depth", "4", "--samples", "200",
             "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "roots.json").read_text())
        assert payload["ks_vs_target"] is None


class TestCoupled:
    def test_decay_curve_schema(self, tmp_path):
        code = run(
            ["coupled", "--rde", "mod2", "--q", "0.3", "--depth", "1",
             "--depth-max", "3", "--samples", "2000", "--seed", "3",
             "--out", str(tmp_path)]
        )
        assert code == 0
        decay = (tmp_path / "decay.csv").read_text().splitlines()
        assert decay[0] == "depth,stat,baseline_q99"
        assert len(decay) == 4
        pairs = (tmp_path / "pairs.csv").read_text().splitlines()
        assert pairs[0] == "x,y"
        report = json.loads((tmp_path / "report.json").read_text())
        assert {"stat", "baseline_q99", "depth", "n", "verdict", "seed"} <= set(report)
        sidecar = json.loads((tmp_path / "pairs.json").read_text())
        assert {"rde", "depth", "seed", "n_samples", "boundary"} <= set(sidecar)
        decay_sidecar = json.loads((tmp_path / "decay.json").read_text())
        assert decay_sidecar["depths"] == [1, 2, 3]
        assert "config" in decay_sidecar and "seed" in decay_sidecar


class TestGridCommands:
    def test_grid_biv(self, tmp_path, capsys):
        code = run(
            ["grid-biv", "--r", "3", "--k", "64", "--tol", "1e-2",
             "--start", "diagonal", "--out", str(tmp_path)]
        )
        assert code == 0
        trace = (tmp_path / "trace.csv").read_text().splitlines()
        assert trace[0] == "iter,sup_h"
        assert float(trace[1].split(",")[1]) == pytest.approx(1.0, abs=2 / 64)
        header = json.loads((tmp_path / "grid_final.json").read_text())
        assert header == {"k": 64, "r": 3, "role": "F"}
        sidecar = json.loads((tmp_path / "grid_biv.json").read_text())
        assert sidecar["verdict"] == "converged-to-product"
        assert "verdict=converged-to-product" in capsys.readouterr().out

    def test_grid_biv_small_k_exit_1(self, tmp_path):
        assert run(["grid-biv", "--k", "32", "--out", str(tmp_path)]) == 1

    def test_grid_uni(self, tmp_path):
        code = run(["grid-uni", "--r", "4", "--k", "256", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "grid_uni.csv").read_text().splitlines()
        assert rows[0] == "x,target_cdf,pushed_cdf,abs_err"
        payload = json.loads((tmp_path / "grid_uni.json").read_text())
        assert payload["sup_residual"] < 5e-4

    def test_grid_uni_truncated_family(self, tmp_path):
        code = run(
            ["grid-uni", "--r", "3", "--a", "0.6", "--k", "256", "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "grid_uni.json").read_text())
        assert "nu_a" in payload["family"]

    def test_grid_uni_a_requires_r3(self, tmp_path):
        assert run(["grid-uni", "--r", "4", "--a", "0.6", "--out", str(tmp_path)]) == 1


class TestPartition:
    def test_certificate(self, tmp_path, capsys):
        code = run(["partition", "--tol", "0.333332333", "--out", str(tmp_path)])
        assert code == 0
        payload = json.loads((tmp_path / "partition.json").read_text())
        assert payload["k_min"] == 24
        assert payload["bound_at_k_min"] < 1 / 3
        assert payload["bound_below_k_min"] >= 1 / 3
        rows = (tmp_path / "partition.csv").read_text().splitlines()
        assert rows[0] == "k,max_bound"
        assert rows[1] == "1,5.0"

    def test_eps_domain_error(self, tmp_path):
        assert run(["partition", "--tol", "0.4", "--out", str(tmp_path)]) == 1


class TestProbe:
    def test_probe_outputs(self, tmp_path):
        code = run(
            ["probe", "--rde", "mod2", "--q", "0.3", "--depth", "2",
             "--samples", "1000", "--probe-random", "2", "--out", str(tmp_path)]
        )
        assert code == 0
        rows = (tmp_path / "probe.csv").read_text().splitlines()
        assert rows[0] == "assignment,distance"
        assert len(rows) == 1 + 2 + 2
        payload = json.loads((tmp_path / "probe.json").read_text())
        assert payload["sup_lower_bound"] is True

    def test_probe_quicksort_rejected(self, tmp_path):
        assert run(["probe", "--rde", "quicksort", "--out", str(tmp_path)]) == 1


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["rtp", "--rde", "frozen-perc", "--depth", "5", "--samples", "3000",
             "--seed", "11"],
            ["coupled", "--rde", "mod2", "--q", "0.3", "--depth", "2",
             "--samples", "2000", "--seed", "11"],
            ["probe", "--rde", "mod2", "--q", "0.3", "--depth", "2",
             "--samples", "500", "--seed", "11"],
        ],
    )
    def test_rerun_and_worker_count_byte_identical(self, tmp_path, argv):
        # identical config (including the out dir); only the worker count
        # and the rerun vary
        out = tmp_path / "run"
        snapshots = []
        for workers in ("1", "1", "4"):
            assert run(argv + ["--workers", workers, "--out", str(out)]) == 0
            snapshots.append(read_tree(out))
        assert snapshots[0] == snapshots[1]
        assert snapshots[0] == snapshots[2]

    def test_grid_biv_rerun_identical(self, tmp_path):
        out = tmp_path / "run"
        trees = []
        for _ in range(2):
            assert run(["grid-biv", "--k", "64", "--tol", "1e-2", "--out", str(out)]) == 0
            trees.append(read_tree(out))
        assert trees[0] == trees[1]

    def test_config_file_and_flags_equivalent(self, tmp_path):
        cfg = tmp_path / "run.toml"
        out = tmp_path / "run"
        cfg.write_text(
            f'rde = "mod2"\nq = 0.3\ndepth = 2\nsamples = 1500\nseed = 4\nout = "{out}"\n'
        )
        assert run(["coupled", "--config", str(cfg)]) == 0
        from_file = read_tree(out)
        assert run(
            ["coupled", "--rde", "mod2", "--q", "0.3", "--depth", "2",
             "--samples", "1500", "--seed", "4", "--out", str(out)]
        ) == 0
        assert from_file == read_tree(out)
