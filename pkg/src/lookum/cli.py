"""Command-line entry point: decode, bench, inject-study, and sweep.

Exit codes: 0 success, 2 configuration error, 3 backend/transport error,
64 usage error (unknown command or malformed flags).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import (
    RunReport,
    decode_instance,
    run_bench,
    run_injection,
    sweep_paths,
    sweep_table,
    write_dataset,
)
from .config import EngineConfig, load_config
from .core import SequenceState
from .errors import ConfigError, LookumError, ProtocolError, TransportError
from .lookahead import decode_lookum
from .models import RemoteBackend, noise_wrap, temperature_wrap
from .strategies import decode_baseline
from .tasks import generate_task

COMMANDS = ("decode", "bench", "inject-study", "sweep")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # keep control of the exit code
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lookum", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value by dotted path (repeatable)",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
    return parser


def _emit(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _out_dir(cfg: EngineConfig, override: str | None) -> str:
    out = override or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_report(report: RunReport, out: str, stem: str, quiet: bool) -> None:
    json_path = os.path.join(out, f"{stem}.json")
    report.write(json_path)
    report.write_csv(os.path.join(out, f"{stem}.csv"))
    _emit(quiet, f"wrote {json_path}")


def run(
    command: str,
    config_path: str | None,
    overrides: list[str],
    out: str | None = None,
    quiet: bool = False,
) -> int:
    """Programmatic equivalent of the CLI; returns the exit code."""
    if command not in COMMANDS:
        print(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        return EXIT_USAGE
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out_dir = _out_dir(cfg, out)
        if command == "decode":
            _cmd_decode(cfg, out_dir, quiet)
        elif command == "bench":
            report = run_bench(cfg)
            write_dataset(generate_task(cfg.task), os.path.join(out_dir, "dataset.jsonl"))
            _write_report(report, out_dir, "bench", quiet)
            _emit(quiet, f"accuracy={report.aggregates['accuracy']:.4f} "
                         f"local_error_rate={report.aggregates['local_error_rate']:.4f}")
        elif command == "inject-study":
            report = run_injection(cfg)
            _write_report(report, out_dir, "inject_study", quiet)
            study = report.extras["injection"]
            _emit(quiet, f"entropy correct={study['correct']['entropy']:.4f} "
                         f"error={study['error']['entropy']:.4f}")
        else:
            reports = sweep_paths(cfg)
            table = sweep_table(reports)
            for report in reports:
                _write_report(report, out_dir, f"sweep_k{report.extras['k']}", quiet)
            with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
                json.dump(table, fh, sort_keys=True, indent=2)
            with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
                fh.write("k,accuracy,local_error_rate\n")
                for k, acc, err in zip(
                    table["k"], table["accuracy"], table["local_error_rate"]
                ):
                    fh.write(f"{k},{acc},{err}\n")
            _emit(quiet, "accuracy by k: " + ", ".join(
                f"{k}:{a:.4f}" for k, a in zip(table["k"], table["accuracy"])
            ))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except LookumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def _cmd_decode(cfg: EngineConfig, out_dir: str, quiet: bool) -> None:
    if cfg.backend_kind == "remote":
        result, vocab = _decode_remote(cfg)
    else:
        instance = generate_task(cfg.task)[0]
        result = decode_instance(cfg, instance, 0)
        vocab = instance.vocab
    rendered = vocab.render(result.tokens)
    print(rendered)
    trace = {
        "tokens": list(result.tokens),
        "text": rendered,
        "backend_calls": result.backend_calls,
        "steps": [
            {
                "step": s.step,
                "masked_before": s.masked_before,
                "unmask_set": list(s.unmask_set),
                "committed": [list(c) for c in s.committed],
                "scores": list(s.scores),
                "weights": list(s.weights),
                "chosen": s.chosen,
            }
            for s in result.steps
        ],
    }
    path = os.path.join(out_dir, "decode_trace.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace, fh, sort_keys=True, indent=2)
    _emit(quiet, f"wrote {path}")


def _decode_remote(cfg: EngineConfig):
    backend = RemoteBackend(cfg.remote)
    for kind, value in cfg.wrappers:
        backend = (
            temperature_wrap(backend, value)
            if kind == "temperature"
            else noise_wrap(backend, value)
        )
    prompt = cfg.decode_prompt or ()
    tokens = tuple(prompt) + (backend.vocab.mask_id,) * (cfg.decode_length - len(prompt))
    initial = SequenceState(tokens)
    rng = np.random.default_rng(cfg.seed)
    if cfg.strategy == "baseline":
        result = decode_baseline(
            backend, initial, cfg.schedule, kind=cfg.measure,
            token_rule=cfg.token_rule, rng=rng,
        )
    else:
        result = decode_lookum(
            backend, initial, cfg.schedule, policy=cfg.pool, vkind=cfg.verifier,
            scheme=cfg.selection, token_rule=cfg.token_rule, rng=rng,
        )
    return result, backend.vocab


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    return run(args.command, args.config, overrides, out=args.out, quiet=args.quiet)


if __name__ == "__main__":
    raise SystemExit(main())
