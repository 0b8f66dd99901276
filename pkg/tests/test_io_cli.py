"""File formats and the command-line interface."""

import json

import numpy as np
import pytest

from sparse_csg import CoalitionUniverse, ValueFunction, generate_theta, mask_from_agents
from sparse_csg import io as csg_io
from sparse_csg.cli import main
from sparse_csg.generation import DesignConfig, NoiseConfig, synthesize_batch


class TestFormats:
    def test_universe_round_trip(self, tmp_path):
        u = CoalitionUniverse.all_up_to_size(5, 3)
        path = tmp_path / "universe.json"
        csg_io.save_universe(u, path)
        assert csg_io.load_universe(path) == u

    def test_theta_round_trip(self, tmp_path):
        theta = np.zeros(12)
        theta[[0, 7]] = [1.25, -0.5]
        path = tmp_path / "theta.csv"
        csg_io.save_theta(theta, path)
        text = path.read_text().splitlines()
        assert text[0] == "m=12"
        assert text[1] == "index,value"
        assert np.array_equal(csg_io.load_theta(path), theta)

    def test_theta_header_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n")
        with pytest.raises(Exception):
            csg_io.load_theta(path)

    def test_batch_round_trip(self, tmp_path):
        u = CoalitionUniverse.all_up_to_size(4, 2)
        truth = generate_theta(u.m, 2, 0.5, 1.5, seed=3)
        batch = synthesize_batch(
            u, truth,
            DesignConfig(m=u.m, episodes=25, activation_probs=0.4, row_cap=4, seed=4),
            NoiseConfig(sigma=0.3, seed=5),
        )
        csg_io.save_batch(batch, tmp_path / "batch")
        back = csg_io.load_batch(tmp_path / "batch")
        assert np.array_equal(back.design, batch.design)
        assert np.array_equal(back.response, batch.response)
        assert np.array_equal(back.noise, batch.noise)
        assert back.column_normalised == batch.column_normalised
        assert back.zero_columns == batch.zero_columns

    def test_value_function_round_trip(self, tmp_path):
        u = CoalitionUniverse.from_agent_sets(4, [[1], [2], [3], [4], [1, 2], [3, 4]])
        vf = ValueFunction(universe=u, values={0: 1.0, 4: 2.5}, default_value=-0.5)
        path = tmp_path / "vf.json"
        csg_io.save_value_function(vf, path)
        back = csg_io.load_value_function(path)
        assert back.default_value == -0.5
        assert back.block_value(mask_from_agents([1, 2], 4)) == 2.5
        assert back.block_value(mask_from_agents([1], 4)) == 1.0

    def test_estimate_round_trip(self, tmp_path):
        from sparse_csg import EstimateResult

        theta = np.zeros(6)
        theta[2] = 1.5
        est = EstimateResult(theta_hat=theta, support_hat=(2,), estimator="LASSO",
                             tuning={"lambda": 0.1, "converged": True}, iterations=12)
        path = tmp_path / "est.json"
        csg_io.save_estimate(est, path)
        back = csg_io.load_estimate(path)
        assert np.array_equal(back.theta_hat, est.theta_hat)
        assert back.estimator == "LASSO"
        assert back.iterations == 12


class TestCli:
    def _generate_config(self, tmp_path):
        cfg = {
            "universe": {"rule": "all_up_to_size", "n_agents": 5, "max_size": 2},
            "truth": {"sparsity": 2, "theta_min": 1.0, "magnitude_cap": 2.0, "seed": 7},
            "design": {"episodes": 60, "activation_prob": 0.3, "row_cap": 4, "seed": 8},
            "noise": {"sigma": 0.2, "seed": 9},
        }
        path = tmp_path / "gen.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_generate_estimate_diagnose_solve(self, tmp_path):
        gen_cfg = self._generate_config(tmp_path)
        batch_dir = tmp_path / "batch"
        assert main(["generate", "--config", str(gen_cfg), "--out", str(batch_dir)]) == 0
        assert (batch_dir / "design.csv").exists()
        assert (batch_dir / "meta.json").exists()

        est_path = tmp_path / "est.json"
        est_cfg = tmp_path / "est_cfg.json"
        est_cfg.write_text(json.dumps({"k_max": 2}))
        assert main(["estimate", "--method", "bgcp", "--batch", str(batch_dir),
                     "--config", str(est_cfg), "--out", str(est_path)]) == 0
        est = json.loads(est_path.read_text())
        assert est["estimator"] == "BGCP"
        assert len(est["nonzeros"]) <= 2
        assert len(est["trace"]) == est["iterations"]

        report_path = tmp_path / "report.json"
        assert main(["diagnose", "--batch", str(batch_dir), "--out", str(report_path),
                     "--re-samples", "100", "--lambda", "0.5", "--bgcp-kmax", "2"]) == 0
        report = json.loads(report_path.read_text())
        assert 0.0 <= report["coherence"] <= 1.0
        assert "noise_event" in report
        assert "correlation_profile" in report

        # Solve over the estimated value function written by hand.
        universe = csg_io.load_universe(batch_dir / "universe.json")
        theta = csg_io.load_theta(batch_dir / "truth.csv")
        vf = ValueFunction.from_estimate(universe, theta)
        vf_path = tmp_path / "vf.json"
        csg_io.save_value_function(vf, vf_path)
        structure_path = tmp_path / "structure.json"
        assert main(["solve", "--values", str(vf_path), "--out", str(structure_path)]) == 0
        structure = json.loads(structure_path.read_text())
        flat = sorted(a for block in structure["blocks"] for a in block)
        assert flat == [1, 2, 3, 4, 5]

    def test_estimate_all_methods_run(self, tmp_path):
        gen_cfg = self._generate_config(tmp_path)
        batch_dir = tmp_path / "batch"
        main(["generate", "--config", str(gen_cfg), "--out", str(batch_dir)])
        for method in ["lasso", "epc", "l0"]:
            out = tmp_path / f"{method}.json"
            cfg = tmp_path / f"{method}_cfg.json"
            cfg.write_text(json.dumps({"lambda0": 0.1} if method == "l0" else {}))
            code = main(["estimate", "--method", method, "--batch", str(batch_dir),
                         "--config", str(cfg), "--out", str(out)])
            assert code == 0 and out.exists()

    def test_experiment_with_config_and_env_seed(self, tmp_path, monkeypatch):
        cfg = {
            "universe": {"n_agents": 5, "rule": "all_up_to_size", "max_size": 2},
            "truth": {"sparsity": 2, "theta_min": 1.0, "magnitude_cap": 2.0},
            "design": {"activation_prob": 0.3, "row_cap": 4},
            "noise": {"sigma": 0.2},
            "t_grid": [40],
            "methods": ["EPC"],
            "replications": 2,
            "master_seed": 1,
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cfg))
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        monkeypatch.setenv("SPARSE_CSG_SEED", "555")
        assert main(["experiment", "--config", str(cfg_path), "--out", str(out_a)]) == 0
        assert main(["experiment", "--config", str(cfg_path), "--out", str(out_b)]) == 0
        assert (out_a / "runs.csv").read_bytes() == (out_b / "runs.csv").read_bytes()
        manifest = json.loads((out_a / "manifest.json").read_text())
        assert manifest["config"]["master_seed"] == 555

    def test_solve_warns_on_blocks_outside_universe(self, tmp_path, caplog):
        # Universe without singletons: optimal fill uses unlisted blocks.
        vf_path = tmp_path / "vf.json"
        vf_path.write_text(json.dumps({
            "n_agents": 3,
            "default_value": 0.0,
            "entries": [[[1, 2], -1.0], [[2, 3], -2.0]],
        }))
        out = tmp_path / "structure.json"
        assert main(["solve", "--values", str(vf_path), "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["blocks_outside_universe"]

    def test_unknown_method_errors(self, tmp_path):
        gen_cfg = self._generate_config(tmp_path)
        batch_dir = tmp_path / "batch"
        main(["generate", "--config", str(gen_cfg), "--out", str(batch_dir)])
        code = main(["estimate", "--method", "dls", "--batch", str(batch_dir),
                     "--out", str(tmp_path / "x.json")])
        # T=60 >= m=15: dense least squares is well posed here.
        assert code == 0
