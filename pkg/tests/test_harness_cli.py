"""Experiment configuration, the chunked parallel runners, and the CLI."""

import json
import subprocess
import sys

import numpy as np
import pytest

from colonist import cli, harness
from colonist.harness import (ConfigError, ExperimentConfig,
                              sterilized_sample_par, two_sample_chi2)
from colonist.offspring import MigrationRule, OffspringLaw, model_spec


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.law == "geometric" and cfg.rule == "thinning"
        assert len(cfg.test_functions) == 6

    @pytest.mark.parametrize("kw", [
        {"law": "poisson"},
        {"rule": "teleport"},
        {"n_list": [100, 50]},
        {"replicas": 10},
    ])
    def test_invalid_values(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_from_dict_bad_value(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"replicas": "many"})

    def test_from_file_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "law": "stable", "beta": 1.5, "rule": "all_or_nothing",
            "n_list": [10, 20], "replicas": 1500, "seed": 7,
            "test_functions": [{"breakpoints": [0.5, 2.0],
                                "values": [1.0]}]}))
        cfg = ExperimentConfig.from_file(path)
        assert cfg.law == "stable" and cfg.beta == 1.5
        assert cfg.seed == 7 and len(cfg.test_functions) == 1
        assert cfg.family().law.beta == 1.5

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "law": geometric\n}\n')
        with pytest.raises(ConfigError, match="line 2"):
            ExperimentConfig.from_file(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            ExperimentConfig.from_file("/nonexistent/cfg.json")

    def test_env_seed_override(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        monkeypatch.setenv("COLONIST_SEED", "999")
        assert ExperimentConfig.from_file(path).seed == 999

    def test_shipped_default_config_loads(self):
        cfg = ExperimentConfig.from_file(cli.default_config_path())
        assert cfg.law == "geometric" and cfg.rule == "thinning"
        assert cfg.replicas >= 1000


class TestTwoSampleChi2:
    def test_same_law_passes(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 6, size=20000)
        b = rng.integers(0, 6, size=20000)
        _, _, pval = two_sample_chi2(a, b)
        assert pval > 0.01

    def test_different_law_fails(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 6, size=20000)
        b = rng.integers(0, 7, size=20000)
        _, _, pval = two_sample_chi2(a, b)
        assert pval < 1e-6

    def test_small_cells_are_pooled(self):
        a = np.array([0] * 1000 + [5])
        b = np.array([0] * 1000 + [9])
        stat, dof, pval = two_sample_chi2(a, b)
        assert dof >= 1 and 0.0 <= pval <= 1.0


class TestDeterministicParallelism:
    def test_thread_count_does_not_change_results(self, monkeypatch):
        spec = model_spec(OffspringLaw.geometric(),
                          MigrationRule.thinning(0.2))
        outs = []
        for threads in ("1", "2"):
            monkeypatch.setenv("COLONIST_THREADS", threads)
            outs.append(sterilized_sample_par(spec, 5000, 11, "par-test"))
        (C1, M1), (C2, M2) = outs
        assert (C1 == C2).all() and (M1 == M2).all()


class TestCli:
    def _cfg(self, tmp_path, **over):
        d = {"law": "geometric", "rule": "thinning", "c": 1.0, "a": 1.0,
             "n_list": [10, 20], "replicas": 1000, "seed": 5,
             "output_dir": str(tmp_path)}
        d.update(over)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(d))
        return str(path)

    def test_missing_config_is_usage_error(self, capsys):
        assert cli.main(["simulate"]) == cli.EXIT_USAGE
        assert "requires --config" in capsys.readouterr().err

    def test_bad_config_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope}")
        assert cli.main(["walk", "--config", str(bad)]) == cli.EXIT_USAGE
        assert "config error" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self):
        assert cli.main(["frobnicate"]) == cli.EXIT_USAGE

    def test_simulate_writes_partitions(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--config", self._cfg(tmp_path)])
        assert rc == cli.EXIT_OK
        lines = (tmp_path / "partitions.csv").read_text().splitlines()
        assert lines[0] == "replica_id,colony_size"
        assert len(lines) > 1000
        with open(tmp_path / "partitions.jsonl") as fh:
            first = json.loads(fh.readline())
        assert first["replica_id"] == 0
        assert first["zeta"] >= first["gamma"] >= 1
        assert "birth budget" in capsys.readouterr().out

    def test_walk_writes_pairs(self, tmp_path):
        rc = cli.main(["walk", "--config", self._cfg(tmp_path)])
        assert rc == cli.EXIT_OK
        lines = (tmp_path / "passage_pairs.csv").read_text().splitlines()
        assert lines[0] == "replica_id,tau1,migrants"
        assert len(lines) == 1001

    def test_cumulant_writes_roots(self, tmp_path, capsys):
        fns = [{"breakpoints": [0.25, 2.0], "values": [4.0]},
               {"breakpoints": [5.0, 6.0], "values": [0.0]}]
        rc = cli.main(["cumulant", "--config",
                       self._cfg(tmp_path, test_functions=fns)])
        assert rc == cli.EXIT_OK
        rows = [json.loads(line) for line in
                (tmp_path / "cumulant.jsonl").read_text().splitlines()]
        assert len(rows) == 2
        assert rows[0]["K_empirical"] > 0
        assert rows[1]["K_empirical"] == 0.0     # f vanishes: root is 0
        assert rows[0]["kappa"] > 0

    def test_limit_checks_mass_condition(self, tmp_path):
        rc = cli.main(["limit", "--config",
                       self._cfg(tmp_path, replicas=2000)])
        assert rc == cli.EXIT_OK
        lines = (tmp_path / "limit_atoms.csv").read_text().splitlines()
        assert lines[0] == "replica_id,atom_index,x1"
        results = [json.loads(line) for line in
                   (tmp_path / "limit_results.jsonl").read_text()
                   .splitlines()]
        assert {r["name"] for r in results} == \
            {"mass-condition", "migrant-subordinator-mean"}
        assert all(r["pass"] for r in results)
        assert all("runtime" not in r for r in results)

    def test_limit_rejects_cutoff_rule(self, tmp_path, capsys):
        rc = cli.main(["limit", "--config",
                       self._cfg(tmp_path, rule="cutoff")])
        assert rc == cli.EXIT_USAGE
        assert "cutoff" in capsys.readouterr().err

    def test_limit_output_independent_of_threads(self, tmp_path,
                                                 monkeypatch):
        texts = []
        for threads, sub in (("1", "t1"), ("2", "t2")):
            out = tmp_path / sub
            out.mkdir()
            monkeypatch.setenv("COLONIST_THREADS", threads)
            rc = cli.main(["limit", "--config", self._cfg(tmp_path),
                           "--out", str(out)])
            assert rc == cli.EXIT_OK
            texts.append((out / "limit_atoms.csv").read_text())
        assert texts[0] == texts[1]


class TestRunnerSmoke:
    """Small-scale runs of the experiment drivers; the full-scale runs
    live in the acceptance suite."""

    def test_conservation(self):
        res = harness.run_conservation_check(n_partitions=2000, seed=2,
                                             n_critical=50)
        assert res.passed and res.estimate == 0.0

    def test_cumulant_consistency(self):
        results = harness.run_cumulant_consistency(
            n_samples=2 * 10**4, n_replicas=4000, seed=3)
        assert all(r.passed for r in results)
        assert len(results) == 5
