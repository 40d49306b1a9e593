import json
import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rds_lab.cli.config import (
    ConfigError,
    load_experiment_config,
    parse_experiment_config,
    parse_school_spec,
)
from rds_lab.cli.experiments import run_experiment
from rds_lab.cli.main import main, resolve_threads
from rds_lab.cli.service import create_app


def base_config(**overrides):
    cfg = {
        "version": 1,
        "model": {"kind": "two_block", "p": 0.8, "q": 0.7, "trait": [1.0, 0.0]},
        "tree": {"kind": "m_tree", "m": 2, "depth": 4},
        "sampling": {"with_replacement": True, "seed": {"kind": "stationary"}},
        "estimators": ["mean", "gls"],
        "replicates": 8,
        "master_seed": 3,
    }
    cfg.update(overrides)
    return cfg


class TestConfigParsing:
    def test_minimal_config_defaults(self):
        config = parse_experiment_config(base_config())
        assert config.engine == "vertex"
        assert config.sampling.with_replacement
        assert config.estimators == ("mean", "gls")
        assert config.tree.kind == "m_tree"
        assert config.gls_lambda2 is None

    def test_unknown_keys_error_with_dotted_path(self):
        cfg = base_config()
        cfg["tree"]["bogus"] = 1
        with pytest.raises(ConfigError, match="config.tree.bogus"):
            parse_experiment_config(cfg)
        cfg2 = base_config(extra=1)
        with pytest.raises(ConfigError, match="config.extra"):
            parse_experiment_config(cfg2)

    def test_estimator_validation(self):
        with pytest.raises(ConfigError, match="estimators"):
            parse_experiment_config(base_config(estimators=["mean", "mean"]))
        with pytest.raises(ConfigError, match="expected one of"):
            parse_experiment_config(base_config(estimators=["median"]))
        with pytest.raises(ConfigError):
            parse_experiment_config(base_config(estimators=[]))

    def test_type_errors_name_the_field(self):
        cfg = base_config(replicates="many")
        with pytest.raises(ConfigError, match="config.replicates"):
            parse_experiment_config(cfg)
        cfg = base_config()
        cfg["model"]["p"] = "high"
        with pytest.raises(ConfigError, match="config.model.p"):
            parse_experiment_config(cfg)
        cfg = base_config()
        cfg["sampling"]["with_replacement"] = "yes"
        with pytest.raises(ConfigError, match="config.sampling.with_replacement"):
            parse_experiment_config(cfg)

    def test_counts_engine_requires_m_tree_with_replacement(self):
        cfg = base_config(engine="counts")
        parse_experiment_config(cfg)  # m_tree + with replacement is fine
        gw = base_config(engine="counts")
        gw["tree"] = {"kind": "galton_watson", "law": {"kind": "one_plus_binomial"}, "depth": 4}
        with pytest.raises(ConfigError, match="counts"):
            parse_experiment_config(gw)

    def test_without_replacement_needs_graph_model_and_target_size(self):
        cfg = base_config()
        cfg["sampling"] = {"with_replacement": False, "seed": {"kind": "degree_proportional"}}
        with pytest.raises(ConfigError):
            parse_experiment_config(cfg)

    def test_two_block_trait_length(self):
        cfg = base_config()
        cfg["model"]["trait"] = [1.0, 0.0, 0.5]
        with pytest.raises(ConfigError, match="trait"):
            parse_experiment_config(cfg)

    def test_expansion_fields_come_together(self):
        cfg = base_config()
        cfg["model"]["nodes_per_block"] = 5
        with pytest.raises(ConfigError):
            parse_experiment_config(cfg)

    def test_gls_lambda2_range(self):
        with pytest.raises(ConfigError, match="gls_lambda2"):
            parse_experiment_config(base_config(gls_lambda2=1.0))
        config = parse_experiment_config(base_config(gls_lambda2=0.3))
        assert config.gls_lambda2 == 0.3

    def test_custom_law_parsing(self):
        cfg = base_config()
        cfg["tree"] = {
            "kind": "galton_watson",
            "depth": 3,
            "law": {"kind": "custom", "pmf": {"1": 0.5, "3": 0.5}},
        }
        config = parse_experiment_config(cfg)
        assert config.tree.law.to_law().mean == 2.0
        cfg["tree"]["law"]["pmf"] = {"one": 1.0}
        with pytest.raises(ConfigError, match="pmf"):
            parse_experiment_config(cfg)

    def test_edge_list_model_requires_paths(self, tmp_path):
        cfg = base_config()
        cfg["model"] = {"kind": "edge_list", "path": "missing.txt", "traits_path": "missing.csv"}
        cfg["sampling"] = {"with_replacement": False, "seed": {"kind": "degree_proportional"}}
        cfg["tree"] = {
            "kind": "target_size",
            "target_n": 3,
            "law": {"kind": "deterministic", "m": 2},
        }
        with pytest.raises(ConfigError, match="path"):
            parse_experiment_config(cfg, base_dir=str(tmp_path))

    def test_load_config_resolves_paths_relative_to_file(self, tmp_path):
        (tmp_path / "edges.txt").write_text("a b 1\nb c 1\nc a 1\n")
        (tmp_path / "traits.csv").write_text("node,trait\na,1\nb,0\nc,0\n")
        cfg = base_config()
        cfg["model"] = {"kind": "edge_list", "path": "edges.txt", "traits_path": "traits.csv"}
        cfg["sampling"] = {"with_replacement": False, "seed": {"kind": "degree_proportional"}}
        cfg["tree"] = {
            "kind": "target_size",
            "target_n": 3,
            "law": {"kind": "deterministic", "m": 1},
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        config = load_experiment_config(str(path))
        assert os.path.isabs(config.model.path)

    def test_school_spec_defaults_and_bounds(self):
        spec = parse_school_spec(
            {"version": 1, "students": 100, "p_within": 0.2, "p_adjacent": 0.05, "p_far": 0.01}
        )
        assert spec.grade_count == 6
        assert spec.trait_min_grade == 3
        with pytest.raises(ConfigError):
            parse_school_spec(
                {
                    "version": 1,
                    "students": 100,
                    "p_within": 0.2,
                    "p_adjacent": 0.05,
                    "p_far": 0.01,
                    "trait_min_grade": 6,
                }
            )


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestService:
    def test_health_reports_version(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert "version" in body

    def test_spectrum_two_node_graph(self, client):
        resp = client.post("/spectrum", json={"edge_list_text": "a b 1\n"})
        assert resp.status_code == 200
        body = resp.json()
        lams = body["meta"]["eigenvalues"]
        assert abs(lams[0] - 1.0) < 1e-12 and abs(lams[1] + 1.0) < 1e-12
        assert "spectrum.csv" in body["files"]

    def test_spectrum_with_traits_and_regime(self, client):
        resp = client.post(
            "/spectrum",
            json={
                "edge_list_text": "a b 1\nb c 1\nc d 1\n",
                "traits": {"a": 1.0, "b": 1.0, "c": 0.0, "d": 0.0},
                "offspring_mean": 2.0,
            },
        )
        body = resp.json()
        assert abs(body["meta"]["lambda_tilde"] - (1 / np.sqrt(2) - 0.25)) < 1e-9
        assert body["meta"]["regime"] in ("LowVariance", "HighVariance", "Critical")

    def test_spectrum_rejects_bad_edge_list(self, client):
        resp = client.post("/spectrum", json={"edge_list_text": "a b frog\n"})
        assert resp.status_code == 400

    def test_estimate_round_trip_and_missing_degrees(self, client):
        config = parse_experiment_config(base_config())
        result = run_experiment(config, threads=1)
        sample_csv = None
        resp = client.post(
            "/experiment", json={"config": base_config(), "threads": 1}
        )
        assert resp.status_code == 200
        # rebuild one sample through the simulate endpoint
        sim = client.post("/simulate", json={"config": base_config(replicates=1)})
        assert sim.status_code == 200
        sample_csv = sim.json()["files"]["sample_0000.csv"]
        est = client.post(
            "/estimate",
            json={"sample_csv": sample_csv, "estimators": ["mean", "gls"], "lambda2": 0.5},
        )
        assert est.status_code == 200
        meta = est.json()["meta"]
        assert set(meta["estimates"]) == {"mean", "gls"}
        missing = client.post(
            "/estimate", json={"sample_csv": sample_csv, "estimators": ["vh"]}
        )
        assert missing.status_code == 400
        assert "degrees" in missing.json()["detail"]

    def test_estimate_with_degree_map(self, client):
        sim = client.post("/simulate", json={"config": base_config(replicates=1)})
        sample_csv = sim.json()["files"]["sample_0000.csv"]
        est = client.post(
            "/estimate",
            json={
                "sample_csv": sample_csv,
                "estimators": ["vh"],
                "degrees": {"0": 30.0, "1": 20.0},
            },
        )
        assert est.status_code == 200

    def test_experiment_rejects_bad_config(self, client):
        resp = client.post("/experiment", json={"config": {"version": 1}})
        assert resp.status_code == 400

    def test_restart_exhaustion_maps_to_409(self, client, tmp_path):
        (tmp_path / "edges.txt").write_text("a b 1\nb c 1\n")
        (tmp_path / "traits.csv").write_text("node,trait\na,1\nb,0\nc,0\n")
        cfg = base_config(replicates=2)
        cfg["model"] = {
            "kind": "edge_list",
            "path": str(tmp_path / "edges.txt"),
            "traits_path": str(tmp_path / "traits.csv"),
        }
        cfg["sampling"] = {"with_replacement": False, "seed": {"kind": "degree_proportional"}}
        cfg["tree"] = {
            "kind": "target_size",
            "target_n": 3,
            "law": {"kind": "custom", "pmf": {"0": 1.0}},
            "max_restarts": 2,
        }
        cfg["estimators"] = ["mean"]
        resp = client.post("/experiment", json={"config": cfg})
        assert resp.status_code == 409
        assert "attempts" in resp.json()["detail"]

    def test_synth_school_files(self, client):
        spec = {"version": 1, "students": 80, "p_within": 0.3, "p_adjacent": 0.08, "p_far": 0.02}
        resp = client.post("/synth-school", json={"spec": spec})
        assert resp.status_code == 200
        body = resp.json()
        assert set(body["files"]) == {"edges.txt", "traits.csv", "meta.json"}
        assert body["meta"]["students"] <= 80
        meta = json.loads(body["files"]["meta.json"])
        assert meta["students"] == body["meta"]["students"]


class TestCliMain:
    def test_spectrum_subcommand(self, tmp_path, capsys):
        edges = tmp_path / "g.txt"
        edges.write_text("a b 1\n")
        code = main(["spectrum", str(edges), "--out", str(tmp_path / "out")])
        assert code == 0
        out = capsys.readouterr().out
        assert "lambda2" in out
        assert (tmp_path / "out" / "spectrum.csv").exists()

    def test_experiment_writes_bundle_and_is_thread_invariant(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config()))
        assert main(["experiment", str(cfg_path), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(["experiment", str(cfg_path), "--out", str(tmp_path / "b"), "--threads", "8"]) == 0
        body_a = (tmp_path / "a" / "estimates.csv").read_text()
        body_b = (tmp_path / "b" / "estimates.csv").read_text()
        assert body_a == body_b
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert summary["replicates"] == 8
        assert summary["estimators"]["gls"]["pooled"]["count"] == 8

    def test_seed_override_changes_output(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config()))
        main(["experiment", str(cfg_path), "--out", str(tmp_path / "a"), "--seed", "99"])
        main(["experiment", str(cfg_path), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "estimates.csv").read_text() != (
            tmp_path / "b" / "estimates.csv"
        ).read_text()
        assert json.loads((tmp_path / "a" / "summary.json").read_text())["master_seed"] == 99

    def test_estimate_reproduces_in_process_values_bit_for_bit(self, tmp_path, capsys):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config(replicates=1)))
        assert main(["simulate", str(cfg_path), "--out", str(tmp_path / "sim")]) == 0
        sample_path = tmp_path / "sim" / "sample_0000.csv"
        assert sample_path.exists()
        capsys.readouterr()
        assert (
            main(
                [
                    "estimate",
                    str(sample_path),
                    "--estimators",
                    "mean,gls",
                    "--lambda2",
                    "0.5",
                    "--out",
                    str(tmp_path / "est"),
                ]
            )
            == 0
        )
        cli_body = (tmp_path / "est" / "estimates.csv").read_text()

        from rds_lab.estimators import gls_closed_form_2block, sample_mean
        from rds_lab.sampler import RdsSample

        sample = RdsSample.from_csv(sample_path.read_text())
        direct_mean = sample_mean(sample).value
        direct_gls = gls_closed_form_2block(sample, 0.5).value
        rows = {ln.split(",")[0]: ln.split(",")[1] for ln in cli_body.splitlines()[1:]}
        assert rows["mean"] == repr(direct_mean)
        assert rows["gls"] == repr(direct_gls)

    def test_atomic_overwrite_replaces_stale_files(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        stale = out / "estimates.csv"
        stale.write_text("stale\n")
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config()))
        assert main(["experiment", str(cfg_path), "--out", str(out)]) == 0
        assert stale.read_text() != "stale\n"
        leftovers = [p for p in os.listdir(out) if p.endswith(".tmp") or p.startswith("tmp")]
        assert leftovers == []

    def test_synth_school_subcommand(self, tmp_path):
        spec_path = tmp_path / "school.json"
        spec_path.write_text(
            json.dumps(
                {"version": 1, "students": 70, "p_within": 0.3, "p_adjacent": 0.08, "p_far": 0.02}
            )
        )
        assert main(["synth-school", str(spec_path), "--out", str(tmp_path / "net")]) == 0
        assert (tmp_path / "net" / "edges.txt").exists()
        assert (tmp_path / "net" / "traits.csv").exists()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"version": 1}))
        assert main(["experiment", str(cfg_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_threads_env_fallback(self, monkeypatch):
        monkeypatch.delenv("RDS_LAB_THREADS", raising=False)
        assert resolve_threads(None) == 1
        assert resolve_threads(4) == 4
        monkeypatch.setenv("RDS_LAB_THREADS", "6")
        assert resolve_threads(None) == 6
        monkeypatch.setenv("RDS_LAB_THREADS", "lots")
        with pytest.raises(Exception, match="RDS_LAB_THREADS"):
            resolve_threads(None)


class TestEngines:
    def test_counts_engine_summary_matches_vertex_shape(self):
        vertex = run_experiment(parse_experiment_config(base_config()), threads=1)
        counts = run_experiment(
            parse_experiment_config(base_config(engine="counts")), threads=1
        )
        assert counts.summary["engine"] == "counts"
        assert vertex.summary["engine"] == "vertex"
        assert set(counts.summary["estimators"]) == set(vertex.summary["estimators"])
        assert counts.summary["record_count"] == vertex.summary["record_count"]

    def test_lambda2_metadata(self):
        result = run_experiment(parse_experiment_config(base_config()), threads=1)
        assert abs(result.summary["lambda2"] - 0.5) < 1e-12
        assert result.summary["lambda2_source"] == "model"
        assert result.summary["regime"] == "LowVariance"
        override = run_experiment(
            parse_experiment_config(base_config(gls_lambda2=0.4)), threads=1
        )
        assert override.summary["gls_lambda2"] == 0.4
        assert override.summary["lambda2_source"] == "config"
