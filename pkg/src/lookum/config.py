"""Run configuration: JSON schema, defaults, overrides, and validation.

Built-in defaults mirror the canonical decoding setup: pool of 5, two paths,
average negative entropy verifier, per-step importance sampling, two tokens
per step, sampling temperature 0.1.  Precedence is command-line overrides
over file values over these defaults.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any

from .core import ScoreKind
from .decoding import TokenRule
from .errors import ConfigError
from .lookahead import PoolPolicy, SelectionScheme, VerifierKind
from .models import RemoteModelConfig
from .strategies import RANDOM, BudgetSchedule
from .tasks import TaskSpec

REMOTE_URL_ENV = "LOOKUM_REMOTE_URL"

DEFAULTS: dict = {
    "seed": 0,
    "workers": 1,
    "out_dir": "out",
    "backend": {
        "kind": "oracle",
        "endpoint": "",
        "timeout": 10.0,
        "retries": 2,
        "batch_size": 4,
        "wrappers": [],
    },
    "task": {
        "kind": "arithmetic",
        "instance_count": 500,
        "seed": None,  # defaults to the root seed
        "params": {},
    },
    "schedule": {"kind": "constant", "tokens_per_step": 2, "total_steps": None},
    "strategy": {
        "kind": "lookum",
        "measure": "confidence",
        "pool": {
            "kind": "n_best",
            "size": 5,
            "threshold": 0.9,
            "measure": "confidence",
            "anchor_greedy": True,
        },
        "verifier": {"kind": "avg_negative_entropy", "scope": "all_positions"},
        "selection": {"kind": "nis", "alpha": 0.1, "k": 2},
    },
    "token_rule": {"kind": "argmax", "temperature": 0.1},
    "sweep": {"k_values": [1, 2, 4, 8, 16]},
    "injection": {"positions_per_instance": 2},
    # remote decodes have no oracle task to define the sequence: decode a
    # fresh sequence of this length, optionally seeded with a prompt prefix
    "decode": {"length": 8, "prompt": None},
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(config: dict, assignment: str) -> None:
    """Set ``a.b.c=value`` into the config dict; value parsed as JSON if possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    path, _, raw = assignment.partition("=")
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"--set has an empty key path in {dotted!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    for key in keys[:-1]:
        nxt = node.get(key)
        if not isinstance(nxt, dict):
            nxt = {}
            node[key] = nxt
        node = nxt
    node[keys[-1]] = value


class _Section:
    """Dict view that raises ConfigError with the full key path."""

    def __init__(self, data: dict, path: str) -> None:
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path

    def child(self, key: str) -> "_Section":
        return _Section(self.data.get(key, {}), f"{self.path}.{key}")

    def get(self, key: str, kind: type, *, required: bool = False) -> Any:
        full = f"{self.path}.{key}" if self.path else key
        value = self.data.get(key)
        if value is None:
            if required:
                raise ConfigError(f"{full}: required value is missing")
            return None
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, bool):
            raise ConfigError(f"{full}: expected {kind.__name__}, got bool")
        if not isinstance(value, kind):
            raise ConfigError(
                f"{full}: expected {kind.__name__}, got {type(value).__name__}"
            )
        return value


@dataclass(frozen=True, eq=False)
class EngineConfig:
    """Validated run configuration; ``snapshot`` is the merged raw dict."""

    seed: int
    workers: int
    out_dir: str
    backend_kind: str  # "oracle" | "remote"
    wrappers: tuple[tuple[str, float], ...]
    remote: RemoteModelConfig | None
    task: TaskSpec
    schedule: BudgetSchedule
    strategy: str  # "baseline" | "lookum"
    measure: str  # ScoreKind value or "random" (baseline ranking)
    pool: PoolPolicy
    verifier: VerifierKind
    selection: SelectionScheme
    token_rule: TokenRule
    sweep_k: tuple[int, ...]
    injection_positions: int
    decode_length: int
    decode_prompt: tuple[int, ...] | None
    snapshot: dict = field(repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EngineConfig):
            return NotImplemented
        mine = {k: v for k, v in self.__dict__.items() if k != "snapshot"}
        theirs = {k: v for k, v in other.__dict__.items() if k != "snapshot"}
        return mine == theirs


def _wrap_or_config_error(path: str, fn, *args):
    try:
        return fn(*args)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _or(value: Any, fallback: Any) -> Any:
    """Fallback only for absent values; present falsy values stay validated."""
    return fallback if value is None else value


def parse_config(merged: dict) -> EngineConfig:
    root = _Section(merged, "")
    seed = root.get("seed", int)
    if seed is None:
        seed = 0
    workers = _or(root.get("workers", int), 1)
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    out_dir = _or(root.get("out_dir", str), "out")

    backend = root.child("backend")
    backend_kind = _or(backend.get("kind", str), "oracle")
    if backend_kind not in ("oracle", "remote"):
        raise ConfigError(f"backend.kind: unknown backend {backend_kind!r}")
    wrappers = []
    raw_wrappers = backend.data.get("wrappers", [])
    if not isinstance(raw_wrappers, list):
        raise ConfigError("backend.wrappers: expected a list")
    for i, item in enumerate(raw_wrappers):
        sec = _Section(item, f"backend.wrappers[{i}]")
        kind = sec.get("kind", str, required=True)
        if kind == "temperature":
            wrappers.append(("temperature", sec.get("tau", float, required=True)))
        elif kind == "noise":
            wrappers.append(("noise", sec.get("eps", float, required=True)))
        else:
            raise ConfigError(f"backend.wrappers[{i}].kind: unknown wrapper {kind!r}")
    remote = None
    if backend_kind == "remote":
        endpoint = os.environ.get(REMOTE_URL_ENV) or backend.get(
            "endpoint", str, required=True
        )
        remote = _wrap_or_config_error(
            "backend",
            RemoteModelConfig,
            endpoint,
            _or(backend.get("timeout", float), 10.0),
            _or(backend.get("retries", int), 2),
            _or(backend.get("batch_size", int), 4),
        )

    task_sec = root.child("task")
    task_seed = task_sec.get("seed", int)
    task = _wrap_or_config_error(
        "task",
        TaskSpec,
        _or(task_sec.get("kind", str), "arithmetic"),
        _or(task_sec.get("instance_count", int), 500),
        seed if task_seed is None else task_seed,
        _or(task_sec.get("params", dict), {}),
    )

    sched = root.child("schedule")
    schedule = _wrap_or_config_error(
        "schedule",
        BudgetSchedule,
        _or(sched.get("kind", str), "constant"),
        _or(sched.get("tokens_per_step", int), 2),
        sched.get("total_steps", int),
    )

    strat = root.child("strategy")
    strategy = _or(strat.get("kind", str), "lookum")
    if strategy not in ("baseline", "lookum"):
        raise ConfigError(f"strategy.kind: unknown strategy {strategy!r}")
    measure = _or(strat.get("measure", str), "confidence")
    if measure != RANDOM:
        _wrap_or_config_error("strategy.measure", ScoreKind, measure)
    pool_sec = strat.child("pool")
    anchor = pool_sec.data.get("anchor_greedy", True)
    if not isinstance(anchor, bool):
        raise ConfigError("strategy.pool.anchor_greedy: expected true or false")
    pool = _wrap_or_config_error(
        "strategy.pool",
        PoolPolicy,
        _or(pool_sec.get("kind", str), "n_best"),
        _or(pool_sec.get("size", int), 5),
        _or(pool_sec.get("threshold", float), 0.9),
        _or(pool_sec.get("measure", str), "confidence"),
        anchor,
    )
    ver_sec = strat.child("verifier")
    verifier = _wrap_or_config_error(
        "strategy.verifier",
        VerifierKind,
        _or(ver_sec.get("kind", str), "avg_negative_entropy"),
        _or(ver_sec.get("scope", str), "all_positions"),
    )
    sel_sec = strat.child("selection")
    alpha = sel_sec.get("alpha", float)
    selection = _wrap_or_config_error(
        "strategy.selection",
        SelectionScheme,
        _or(sel_sec.get("kind", str), "nis"),
        _or(alpha, 0.1),
        _or(sel_sec.get("k", int), 2),
    )

    rule_sec = root.child("token_rule")
    token_rule = _wrap_or_config_error(
        "token_rule",
        TokenRule,
        _or(rule_sec.get("kind", str), "argmax"),
        _or(rule_sec.get("temperature", float), 0.1),
    )

    sweep_sec = root.child("sweep")
    k_values = sweep_sec.data.get("k_values", DEFAULTS["sweep"]["k_values"])
    if not isinstance(k_values, list) or not all(
        isinstance(k, int) and k >= 1 for k in k_values
    ):
        raise ConfigError("sweep.k_values: expected a list of integers >= 1")
    if sorted(k_values) != list(k_values):
        raise ConfigError("sweep.k_values: must be sorted ascending")

    inj = root.child("injection")
    positions = _or(inj.get("positions_per_instance", int), 2)
    if positions < 1:
        raise ConfigError("injection.positions_per_instance: must be >= 1")

    dec = root.child("decode")
    decode_length = _or(dec.get("length", int), 8)
    if decode_length < 1:
        raise ConfigError("decode.length: must be >= 1")
    raw_prompt = dec.data.get("prompt")
    decode_prompt = None
    if raw_prompt is not None:
        if not isinstance(raw_prompt, list) or not all(
            isinstance(t, int) and t >= 0 for t in raw_prompt
        ):
            raise ConfigError("decode.prompt: expected a list of token ids >= 0")
        if len(raw_prompt) > decode_length:
            raise ConfigError("decode.prompt: longer than decode.length")
        decode_prompt = tuple(raw_prompt)

    return EngineConfig(
        seed=seed,
        workers=workers,
        out_dir=out_dir,
        backend_kind=backend_kind,
        wrappers=tuple(wrappers),
        remote=remote,
        task=task,
        schedule=schedule,
        strategy=strategy,
        measure=measure,
        pool=pool,
        verifier=verifier,
        selection=selection,
        token_rule=token_rule,
        sweep_k=tuple(k_values),
        injection_positions=positions,
        decode_length=decode_length,
        decode_prompt=decode_prompt,
        snapshot=merged,
    )


def load_config(
    path: str | None, overrides: list[str] | None = None
) -> EngineConfig:
    """defaults <- file <- --set overrides, then validate."""
    merged = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        merged = deep_merge(merged, file_cfg)
    for item in overrides or []:
        apply_override(merged, item)
    return parse_config(merged)
