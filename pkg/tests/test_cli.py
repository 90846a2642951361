import json

import numpy as np
import pytest

from ndss.cli import main
from ndss.dynamics import build_consensus_benchmark


def _benchmark_scenario(tmp_path, **extra):
    model, x0 = build_consensus_benchmark()
    obj = {
        "model": {"A": model.A.tolist()},
        "x0": x0.tolist(),
        "T": 120,
        "seed": 3,
        "process_noise": {"family": "zero", "variance": 0.0},
        "obs_noise": {"family": "gaussian", "variance": 0.25},
    }
    obj.update(extra)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(obj))
    return path


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:]]
    return lines[0], header, rows


class TestValidate:
    def test_benchmark_scenario_ok(self, tmp_path, capsys):
        path = _benchmark_scenario(tmp_path)
        assert main(["validate", str(path)]) == 0
        assert "ok" in capsys.readouterr().out

    def test_nonsquare_matrix(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"A": [[1.0, 0.0]]},
                                    "x0": [0.0], "T": 5, "seed": 0}))
        assert main(["validate", str(path)]) == 2
        assert "A must be square" in capsys.readouterr().out

    def test_rho_out_of_range(self, tmp_path, capsys):
        path = _benchmark_scenario(
            tmp_path,
            defense={"theta": {"family": "zero", "variance": 0.0}, "k_max": 10,
                     "eta": {"kind": "adjacent", "alpha": 0.3, "rho": 1.2}})
        assert main(["validate", str(path)]) == 2
        assert "rho must lie in [0,1)" in capsys.readouterr().out

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.json")]) == 4


class TestSubcommands:
    def test_simulate_then_infer_state_roundtrip(self, tmp_path, capsys):
        scenario = _benchmark_scenario(tmp_path)
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(scenario), "--out", str(out)]) == 0
        capsys.readouterr()
        assert main(["infer", "state", "--config", str(scenario),
                     "--csv", str(out / "trajectory.csv")]) == 0
        report = json.loads(capsys.readouterr().out)
        _, x0 = build_consensus_benchmark()
        assert np.linalg.norm(np.array(report["x_hat"]) - x0) < 1.5
        assert report["residual_norm"] >= 0.0

    def test_infer_topology_json(self, tmp_path, capsys):
        scenario = _benchmark_scenario(
            tmp_path, T=4000,
            process_noise={"family": "gaussian", "variance": 1.0},
            obs_noise={"family": "gaussian", "variance": 1.0})
        assert main(["infer", "topology", "--config", str(scenario),
                     "--method", "causality"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["method"] == "causality"
        assert report["frobenius_error"] < 0.5

    def test_infer_sysid_and_gain(self, tmp_path, capsys):
        # hand-written CSV: scalar a=0.9, b=c=1 impulse response
        # (y(k) = 0.9^(k-1) for k >= 1), and a feedback record u = -0.3 x
        rows = ["k,u_1,y_1"]
        for k in range(8):
            u = 1.0 if k == 0 else 0.0
            yk = 0.0 if k == 0 else 0.9 ** (k - 1)
            rows.append(f"{k},{u},{yk}")
        io_csv = tmp_path / "io.csv"
        io_csv.write_text("\n".join(rows) + "\n")
        assert main(["infer", "sysid", "--csv", str(io_csv), "--order", "1"]) == 0
        report = json.loads(capsys.readouterr().out)
        eig = report["eigenvalues"][0]
        assert abs(eig[0] - 0.9) < 1e-8 and abs(eig[1]) < 1e-12

        rows = ["k,x_1,u_1"]
        rng = np.random.default_rng(0)
        for k in range(20):
            xk = float(rng.standard_normal())
            rows.append(f"{k},{xk},{-0.3 * xk}")
        gain_csv = tmp_path / "gain.csv"
        gain_csv.write_text("\n".join(rows) + "\n")
        assert main(["infer", "gain", "--csv", str(gain_csv)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert abs(report["K_hat"][0][0] - 0.3) < 1e-9

    def test_defend_reports_deviation(self, tmp_path, capsys):
        scenario = _benchmark_scenario(
            tmp_path,
            defense={"theta": {"family": "zero", "variance": 0.0}, "k_max": 300,
                     "eta": {"kind": "adjacent", "alpha": 0.3, "rho": 0.95,
                             "family": "uniform"}})
        out = tmp_path / "defended"
        assert main(["defend", "--config", str(scenario), "--out", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["deviation"] < 1e-2
        assert report["converged_value"] == pytest.approx(2.9)
        assert (out / "defended.csv").exists()

    def test_metrics_closed_form(self, capsys):
        assert main(["metrics", "disclosure", "--family", "uniform",
                     "--epsilon", "0.1"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "family,epsilon,delta,method,runs,ci_halfwidth"
        assert float(out[1].split(",")[2]) == pytest.approx(0.1 / np.sqrt(3))

    def test_metrics_cost(self, tmp_path, capsys):
        scenario = _benchmark_scenario(
            tmp_path,
            defense={"theta": {"family": "zero", "variance": 0.0}, "k_max": 80,
                     "eta": {"kind": "adjacent", "alpha": 0.3, "rho": 0.95,
                             "family": "uniform"}})
        assert main(["metrics", "cost", "--config", str(scenario),
                     "--runs", "5"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["runs"] == 5 and report["mean_cost"] > 0.0
        assert report["x_T_star"] == pytest.approx([2.9] * 5)

    def test_numerical_failure_exit_code(self, tmp_path):
        # a single observation of a 5-dim state cannot pin down x(0)
        scenario = _benchmark_scenario(tmp_path, T=1)
        bad = json.loads(scenario.read_text())
        bad["model"]["C"] = [[1.0, 0.0, 0.0, 0.0, 0.0]]
        scenario.write_text(json.dumps(bad))
        assert main(["infer", "state", "--config", str(scenario)]) == 3


class TestReproduce:
    def _cfg(self, tmp_path, kind):
        small = {
            "fig5": {"seeds": [0, 1, 2], "T_grid": [50, 200],
                     "sigma_v_sq_grid": [0.01, 1.0]},
            "fig6": {"seeds": [0], "runs": 500,
                     "epsilon_grid": [0.05, 0.1, 0.5]},
            "fig7": {"seeds": [0, 1], "T_grid": [200, 2000]},
            "fig8": {"seeds": [0], "k_max": 120},
        }[kind]
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(small))
        return path

    @pytest.mark.parametrize("kind,csv_name,header", [
        ("fig5", "state_error.csv", ["sigma_v_sq", "T", "seed", "error_norm"]),
        ("fig6", "secrecy.csv", ["family", "epsilon", "delta_mc", "delta_closed", "runs"]),
        ("fig7", "topo_error.csv", ["T", "method", "seed", "frobenius_error"]),
        ("fig8", "defense.csv", ["noise_design", "k", "node", "state",
                                 "deviation", "topo_error_at_k"]),
    ])
    def test_schema_and_determinism(self, tmp_path, kind, csv_name, header, capsys):
        cfg = self._cfg(tmp_path, kind)
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["reproduce", kind, "--out", str(out),
                         "--config", str(cfg)]) == 0
            outs.append((out / csv_name).read_bytes())
        assert outs[0] == outs[1]
        prov, got_header, rows = _read_csv(tmp_path / "a" / csv_name)
        assert got_header == header
        assert "spec-hash=" in prov and "seeds=" in prov and "version=" in prov
        assert rows

    def test_fig6_family_ordering(self, tmp_path):
        out = tmp_path / "fig6"
        assert main(["reproduce", "fig6", "--out", str(out)]) == 0
        _, header, rows = _read_csv(out / "secrecy.csv")
        mc = {}
        for row in rows:
            mc[(row[0], float(row[1]))] = float(row[2])
            assert int(row[4]) == 3000
        eps_grid = sorted({k[1] for k in mc})
        for eps in eps_grid:
            assert mc[("uniform", eps)] < mc[("gaussian", eps)] < mc[("laplace", eps)]

    def test_fig8_boundary_dominates_at_final_step(self, tmp_path):
        out = tmp_path / "fig8"
        assert main(["reproduce", "fig8", "--out", str(out)]) == 0
        _, header, rows = _read_csv(out / "defense.csv")
        final = {}
        for row in rows:
            if int(row[1]) == 500 and int(row[2]) == 1:
                final[row[0]] = float(row[5])
        assert final["boundary"] > final["gaussian"]
        assert final["boundary"] > final["uniform"]

    def test_unknown_config_key_is_schema_error(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["reproduce", "fig6", "--out", str(tmp_path / "x"),
                     "--config", str(cfg)]) == 2

    def test_custom_experiment(self, tmp_path):
        cfg = tmp_path / "custom.json"
        cfg.write_text(json.dumps({
            "seeds": [0, 1],
            "scenario": {
                "model": {"A": [[0.5, 0.5], [0.5, 0.5]]},
                "x0": [1.0, 3.0], "T": 10, "seed": 0,
                "process_noise": {"family": "gaussian", "variance": 0.1},
            }}))
        payloads = []
        for sub in ("a", "b"):
            out = tmp_path / f"custom-{sub}"
            assert main(["reproduce", "custom", "--out", str(out),
                         "--config", str(cfg)]) == 0
            payloads.append((out / "custom.csv").read_bytes())
        assert payloads[0] == payloads[1]
        _, header, rows = _read_csv(tmp_path / "custom-a" / "custom.csv")
        assert header == ["seed", "k", "node", "state"]
        assert len(rows) == 2 * 11 * 2

    def test_custom_requires_scenario(self, tmp_path):
        cfg = tmp_path / "custom.json"
        cfg.write_text(json.dumps({"seeds": [0]}))
        assert main(["reproduce", "custom", "--out", str(tmp_path / "x"),
                     "--config", str(cfg)]) == 2

    def test_thread_fanout_is_order_independent(self, tmp_path, monkeypatch):
        cfg = self._cfg(tmp_path, "fig7")
        serial = tmp_path / "serial"
        assert main(["reproduce", "fig7", "--out", str(serial),
                     "--config", str(cfg)]) == 0
        monkeypatch.setenv("NDSS_THREADS", "4")
        threaded = tmp_path / "threaded"
        assert main(["reproduce", "fig7", "--out", str(threaded),
                     "--config", str(cfg)]) == 0
        assert (serial / "topo_error.csv").read_bytes() \
            == (threaded / "topo_error.csv").read_bytes()
