"""Config parsing, override precedence, exit codes, and CLI artifacts."""

import json
import os

import pytest

from lookum.bench import RunReport
from lookum.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_OK, EXIT_USAGE, main, run
from lookum.config import (
    DEFAULTS,
    REMOTE_URL_ENV,
    apply_override,
    deep_merge,
    load_config,
    parse_config,
)
from lookum.errors import ConfigError


class TestOverrides:
    def test_dotted_path_sets_nested_value(self):
        cfg = {"a": {"b": 1}}
        apply_override(cfg, "a.b=2")
        apply_override(cfg, "a.c.d=true")
        assert cfg == {"a": {"b": 2, "c": {"d": True}}}

    def test_values_parse_as_json_else_string(self):
        cfg = {}
        apply_override(cfg, "x=3.5")
        apply_override(cfg, "y=[1,2]")
        apply_override(cfg, "z=confidence")
        assert cfg == {"x": 3.5, "y": [1, 2], "z": "confidence"}

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            apply_override({}, "novalue")


class TestPrecedence:
    def test_override_beats_file_beats_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 5, "strategy": {"selection": {"k": 3}}}))
        built_in = load_config(None, [])
        assert built_in.seed == DEFAULTS["seed"]
        assert built_in.selection.k == 2

        from_file = load_config(str(path), [])
        assert from_file.seed == 5
        assert from_file.selection.k == 3

        overridden = load_config(str(path), ["seed=9", "strategy.selection.k=4"])
        assert overridden.seed == 9
        assert overridden.selection.k == 4

    def test_defaults_mirror_canonical_setup(self):
        cfg = load_config(None, [])
        assert cfg.pool.size == 5
        assert cfg.selection.kind == "nis" and cfg.selection.k == 2
        assert cfg.selection.alpha == 0.1
        assert cfg.verifier.kind == "avg_negative_entropy"
        assert cfg.schedule.tokens_per_step == 2
        assert cfg.token_rule.kind == "argmax" and cfg.token_rule.temperature == 0.1

    def test_task_seed_defaults_to_root_seed(self):
        cfg = load_config(None, ["seed=42"])
        assert cfg.task.seed == 42
        cfg2 = load_config(None, ["seed=42", "task.seed=7"])
        assert cfg2.task.seed == 7


class TestValidation:
    def test_error_messages_carry_key_paths(self):
        with pytest.raises(ConfigError, match="strategy.selection"):
            load_config(None, ["strategy.selection.k=0"])
        with pytest.raises(ConfigError, match="task.kind"):
            load_config(None, ["task.kind=chess"])
        with pytest.raises(ConfigError, match="backend.kind"):
            load_config(None, ["backend.kind=quantum"])
        with pytest.raises(ConfigError, match="anchor_greedy"):
            load_config(None, ["strategy.pool.anchor_greedy=yes"])

    def test_snapshot_round_trips_to_equal_config(self):
        cfg = load_config(None, ["seed=3", "strategy.selection.k=5"])
        assert parse_config(cfg.snapshot) == cfg

    def test_env_var_overrides_remote_endpoint(self, monkeypatch):
        monkeypatch.setenv(REMOTE_URL_ENV, "http://env-host:9999")
        cfg = load_config(
            None, ["backend.kind=remote", "backend.endpoint=http://file-host:1"]
        )
        assert cfg.remote.endpoint == "http://env-host:9999"

    def test_remote_backend_rejected_for_bench(self, monkeypatch, tmp_path):
        monkeypatch.setenv(REMOTE_URL_ENV, "http://nowhere:1")
        code = run("bench", None, ["backend.kind=remote"], out=str(tmp_path))
        assert code == EXIT_CONFIG


BENCH_OVERRIDES = [
    "task.instance_count=6",
    "task.params.operand_lo=2",
    "task.params.operand_hi=9",
]


class TestCommands:
    def test_unknown_command_exits_64(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE
        assert main([]) == EXIT_USAGE

    def test_bad_flag_value_exits_64(self):
        assert main(["bench", "--seed", "notanint"]) == EXIT_USAGE

    def test_missing_config_file_exits_2(self, tmp_path):
        assert run("bench", str(tmp_path / "nope.json"), []) == EXIT_CONFIG

    def test_bench_writes_artifacts(self, tmp_path, capsys):
        code = run("bench", None, BENCH_OVERRIDES, out=str(tmp_path))
        assert code == EXIT_OK
        report = RunReport.load(str(tmp_path / "bench.json"))
        assert report.aggregates["instances"] == 6
        assert (tmp_path / "bench.csv").exists()
        assert (tmp_path / "dataset.jsonl").exists()
        assert "accuracy" in capsys.readouterr().out

    def test_decode_prints_completed_sequence(self, tmp_path, capsys):
        code = run(
            "decode", None,
            BENCH_OVERRIDES + ["task.instance_count=1", "task.seed=3"],
            out=str(tmp_path),
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        printed = out.splitlines()[0]
        assert "=" in printed and "_" not in printed  # complete, no masks
        trace = json.loads((tmp_path / "decode_trace.json").read_text())
        assert trace["text"] == printed
        assert trace["steps"]

    def test_sweep_and_reduction_consistency(self, tmp_path):
        code = run("sweep", None, BENCH_OVERRIDES + ["sweep.k_values=[1,2]", "seed=2"],
                   out=str(tmp_path), quiet=True)
        assert code == EXIT_OK
        table = json.loads((tmp_path / "sweep.json").read_text())
        assert table["k"] == [1, 2]
        base_dir = tmp_path / "base"
        code = run("bench", None,
                   BENCH_OVERRIDES + ["strategy.kind=baseline", "seed=2"],
                   out=str(base_dir), quiet=True)
        assert code == EXIT_OK
        base = RunReport.load(str(base_dir / "bench.json"))
        assert table["accuracy"][0] == base.aggregates["accuracy"]

    def test_remote_decode_against_stub_server(self, tmp_path, capsys, stub_server):
        from conftest import StubHandler

        StubHandler.behavior = "uniform"
        code = run(
            "decode", None,
            [f"backend.endpoint={stub_server}", "backend.kind=remote",
             "decode.length=4", "decode.prompt=[1]"],
            out=str(tmp_path),
        )
        assert code == EXIT_OK
        printed = capsys.readouterr().out.splitlines()[0]
        assert len(printed.split()) == 1  # one rendered sequence, no masks
        trace = json.loads((tmp_path / "decode_trace.json").read_text())
        assert trace["tokens"][0] == 1  # prompt prefix preserved
        assert len(trace["tokens"]) == 4

    def test_remote_decode_dead_endpoint_exits_3(self, tmp_path):
        code = run(
            "decode", None,
            ["backend.kind=remote", "backend.endpoint=http://127.0.0.1:1",
             "backend.timeout=0.2", "backend.retries=0"],
            out=str(tmp_path), quiet=True,
        )
        assert code == EXIT_BACKEND

    def test_inject_study_writes_report(self, tmp_path):
        code = run("inject-study", None, BENCH_OVERRIDES, out=str(tmp_path), quiet=True)
        assert code == EXIT_OK
        report = RunReport.load(str(tmp_path / "inject_study.json"))
        study = report.extras["injection"]
        assert study["error"]["entropy"] > study["correct"]["entropy"]

    def test_bench_determinism_same_seed(self, tmp_path):
        for sub in ("a", "b"):
            assert run("bench", None, BENCH_OVERRIDES + ["seed=11"],
                       out=str(tmp_path / sub), quiet=True) == EXIT_OK
        a = RunReport.load(str(tmp_path / "a" / "bench.json"))
        b = RunReport.load(str(tmp_path / "b" / "bench.json"))
        assert a.comparable() == b.comparable()
