"""Benchmark harness: oracle-checked metrics, the error-injection study,
path-count sweeps, and report emission.

Instances are embarrassingly parallel; every decode derives its RNG from
(config seed, instance index), so the worker count never changes results.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .config import EngineConfig, deep_merge
from .core import row_entropies
from .decoding import DecodeResult
from .errors import ConfigError, LookumError, OracleError
from .lookahead import decode_lookum
from .models import (
    ModelBackend,
    OracleBackend,
    OracleSupport,
    RemoteBackend,
    noise_wrap,
    temperature_wrap,
)
from .strategies import decode_baseline
from .tasks import TaskInstance, generate_task


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def local_error_counts(
    result: DecodeResult, support: OracleSupport
) -> tuple[int, int]:
    """(error commits, total commits) for a trace against a valid-answer set.

    A committed token is a local error when, at commit time, no support
    sequence is consistent with all observed tokens including it.  The check
    is monotone: once the consistent set empties, every later commit counts.
    """
    consistent = np.ones(support.size, dtype=bool)
    errors = 0
    commits = 0
    alive = True
    for record in result.steps:
        for pos, tok in record.committed:
            if pos >= support.length:
                raise OracleError(
                    f"trace commits position {pos} beyond support length"
                )
            commits += 1
            if alive:
                consistent &= support.sequences[:, pos] == tok
                alive = bool(consistent.any())
            if not alive:
                errors += 1
    return errors, commits


def local_error_rate(result: DecodeResult, support: OracleSupport) -> float:
    errors, commits = local_error_counts(result, support)
    return errors / commits if commits else 0.0


def sign_test_greater(diffs: Sequence[float], tie_eps: float = 0.0) -> float:
    """One-sided exact sign test that the paired differences are positive.

    Robust to zero-variance pairs, which exact oracles produce routinely.
    """
    pos = sum(1 for d in diffs if d > tie_eps)
    neg = sum(1 for d in diffs if d < -tie_eps)
    n = pos + neg
    if n == 0:
        return 1.0
    return float(binomtest(pos, n, 0.5, alternative="greater").pvalue)


# ---------------------------------------------------------------------------
# decode wiring (module level so process pools can pickle it)
# ---------------------------------------------------------------------------


def build_backend(cfg: EngineConfig, instance: TaskInstance) -> ModelBackend:
    if cfg.backend_kind == "remote":
        backend: ModelBackend = RemoteBackend(cfg.remote)
    else:
        backend = OracleBackend(instance.vocab, instance.model_support)
    for kind, value in cfg.wrappers:
        backend = (
            temperature_wrap(backend, value)
            if kind == "temperature"
            else noise_wrap(backend, value)
        )
    return backend


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, index)))


def decode_instance(
    cfg: EngineConfig, instance: TaskInstance, index: int
) -> DecodeResult:
    backend = build_backend(cfg, instance)
    rng = instance_rng(cfg.seed, index)
    if cfg.strategy == "baseline":
        return decode_baseline(
            backend,
            instance.prompt_state,
            cfg.schedule,
            kind=cfg.measure,
            token_rule=cfg.token_rule,
            rng=rng,
        )
    return decode_lookum(
        backend,
        instance.prompt_state,
        cfg.schedule,
        policy=cfg.pool,
        vkind=cfg.verifier,
        scheme=cfg.selection,
        token_rule=cfg.token_rule,
        rng=rng,
    )


def _instance_record(args: tuple[EngineConfig, TaskInstance, int]) -> dict:
    cfg, instance, index = args
    result = decode_instance(cfg, instance, index)
    errors, commits = local_error_counts(result, instance.support)
    return {
        "instance": index,
        "output": list(result.tokens),
        "text": instance.vocab.render(result.tokens),
        "exact_match": bool(instance.is_valid(result.tokens)),
        "local_errors": errors,
        "commits": commits,
        "steps": len(result.steps),
        "backend_calls": result.backend_calls,
        "trace": [
            {
                "step": s.step,
                "unmask": list(s.unmask_set),
                "committed": [[pos, tok] for pos, tok in s.committed],
            }
            for s in result.steps
        ],
    }


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def compute_aggregates(records: list[dict]) -> dict:
    n = len(records)
    matches = sum(1 for r in records if r["exact_match"])
    errors = sum(r["local_errors"] for r in records)
    commits = sum(r["commits"] for r in records)
    calls = sum(r["backend_calls"] for r in records)
    return {
        "instances": n,
        "exact_matches": matches,
        "accuracy": matches / n if n else 0.0,
        "local_errors": errors,
        "commits": commits,
        "local_error_rate": errors / commits if commits else 0.0,
        "backend_calls": calls,
    }


@dataclass
class RunReport:
    """Config snapshot, per-instance records, and recomputable aggregates."""

    command: str
    config: dict
    records: list[dict]
    aggregates: dict
    extras: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "records": self.records,
            "aggregates": self.aggregates,
            "extras": self.extras,
            "timing": self.timing,
        }

    def comparable(self) -> dict:
        """Everything but wall-clock; identical runs match on this exactly."""
        out = self.to_dict()
        out.pop("timing")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for key in sorted(self.aggregates):
                writer.writerow([key, self.aggregates[key]])

    @staticmethod
    def from_dict(data: dict) -> "RunReport":
        report = RunReport(
            command=data["command"],
            config=data["config"],
            records=data["records"],
            aggregates=data["aggregates"],
            extras=data.get("extras", {}),
            timing=data.get("timing", {}),
        )
        if report.records or "accuracy" in report.aggregates:
            recomputed = compute_aggregates(report.records)
            if recomputed != report.aggregates:
                raise LookumError("report aggregates do not match its records")
        return report

    @staticmethod
    def load(path: str) -> "RunReport":
        with open(path, "r", encoding="utf-8") as fh:
            return RunReport.from_dict(json.load(fh))


def write_dataset(instances: Sequence[TaskInstance], path: str) -> None:
    """JSON-lines dataset dump, one instance per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), sort_keys=True))
            fh.write("\n")


def _timing(started: float) -> dict:
    return {
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_clock_s": time.time() - started,
    }


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run_bench(
    cfg: EngineConfig,
    instances: Sequence[TaskInstance] | None = None,
    command: str = "bench",
) -> RunReport:
    if cfg.backend_kind != "oracle":
        raise ConfigError("bench commands require the oracle backend")
    started = time.time()
    if instances is None:
        instances = generate_task(cfg.task)
    jobs = [(cfg, inst, i) for i, inst in enumerate(instances)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_instance_record, jobs, chunksize=8))
    else:
        records = [_instance_record(job) for job in jobs]
    return RunReport(
        command=command,
        config=cfg.snapshot,
        records=records,
        aggregates=compute_aggregates(records),
        timing=_timing(started),
    )


def sweep_paths(
    cfg: EngineConfig,
    k_values: Sequence[int] | None = None,
    instances: Sequence[TaskInstance] | None = None,
) -> list[RunReport]:
    """One bench report per path count, same instances and per-instance seeds."""
    k_values = list(k_values if k_values is not None else cfg.sweep_k)
    if sorted(k_values) != k_values:
        raise ConfigError("sweep.k_values: must be sorted ascending")
    if instances is None:
        instances = generate_task(cfg.task)
    reports = []
    for k in k_values:
        snapshot_k = deep_merge(
            cfg.snapshot,
            {"strategy": {"kind": "lookum", "selection": {"k": k}}},
        )
        cfg_k = replace(
            cfg,
            strategy="lookum",
            selection=replace(cfg.selection, k=k),
            snapshot=snapshot_k,
        )
        report = run_bench(cfg_k, instances=instances, command="sweep")
        report.extras["k"] = k
        reports.append(report)
    return reports


def sweep_table(reports: Sequence[RunReport]) -> dict:
    return {
        "k": [r.extras["k"] for r in reports],
        "accuracy": [r.aggregates["accuracy"] for r in reports],
        "local_error_rate": [r.aggregates["local_error_rate"] for r in reports],
    }


def injection_study(
    instances: Sequence[TaskInstance],
    positions_per_instance: int,
    seed: int,
    backend_builder: Callable[[TaskInstance], ModelBackend] | None = None,
) -> dict:
    """Measure downstream uncertainty after a correct vs. an injected-wrong commit.

    For each sampled answer position, condition "correct" commits the true
    token and condition "error" a uniformly drawn same-alphabet wrong token;
    both then average entropy and confidence of the backend's predictions over
    the remaining masked positions.  Positions with no same-alphabet
    alternative (or nothing left to predict) are skipped and counted.
    """
    if backend_builder is None:
        backend_builder = lambda inst: OracleBackend(inst.vocab, inst.model_support)
    rng = np.random.default_rng(seed)
    pairs: list[dict] = []
    skipped = 0
    for inst in instances:
        backend = backend_builder(inst)
        take = min(positions_per_instance, len(inst.answer_positions))
        chosen = rng.choice(len(inst.answer_positions), size=take, replace=False)
        for j in sorted(int(c) for c in chosen):
            pos = inst.answer_positions[j]
            correct = inst.truth[pos]
            alternatives = [t for t in inst.alphabets[j] if t != correct]
            remaining = [p for p in inst.answer_positions if p != pos]
            if not alternatives or not remaining:
                skipped += 1
                continue
            wrong = int(alternatives[int(rng.integers(len(alternatives)))])
            pair = {"operator": inst.meta.get("operator", "")}
            for label, token in (("correct", correct), ("error", wrong)):
                state = inst.prompt_state.assign({pos: int(token)}, step=0)
                rows = backend.predict(state).rows[np.asarray(remaining)]
                pair[f"entropy_{label}"] = float(row_entropies(rows).mean())
                pair[f"confidence_{label}"] = float(rows.max(axis=1).mean())
            pairs.append(pair)
    if not pairs:
        raise LookumError("injection study produced no usable position pairs")

    def mean(key: str) -> float:
        return float(np.mean([p[key] for p in pairs]))

    summary = {
        "pairs": len(pairs),
        "skipped": skipped,
        "correct": {"entropy": mean("entropy_correct"), "confidence": mean("confidence_correct")},
        "error": {"entropy": mean("entropy_error"), "confidence": mean("confidence_error")},
        "p_entropy_increase": sign_test_greater(
            [p["entropy_error"] - p["entropy_correct"] for p in pairs]
        ),
        "p_confidence_drop": sign_test_greater(
            [p["confidence_correct"] - p["confidence_error"] for p in pairs]
        ),
        "by_operator": {},
    }
    operators = sorted({p["operator"] for p in pairs if p["operator"]})
    for op in operators:
        sub = [p for p in pairs if p["operator"] == op]
        summary["by_operator"][op] = {
            "pairs": len(sub),
            "entropy_correct": float(np.mean([p["entropy_correct"] for p in sub])),
            "entropy_error": float(np.mean([p["entropy_error"] for p in sub])),
            "confidence_correct": float(np.mean([p["confidence_correct"] for p in sub])),
            "confidence_error": float(np.mean([p["confidence_error"] for p in sub])),
        }
    return summary


def run_injection(cfg: EngineConfig) -> RunReport:
    if cfg.backend_kind != "oracle":
        raise ConfigError("inject-study requires the oracle backend")
    started = time.time()
    instances = generate_task(cfg.task)
    summary = injection_study(
        instances,
        cfg.injection_positions,
        cfg.seed,
        backend_builder=lambda inst: build_backend(cfg, inst),
    )
    return RunReport(
        command="inject-study",
        config=cfg.snapshot,
        records=[],
        aggregates={},
        extras={"injection": summary},
        timing=_timing(started),
    )
