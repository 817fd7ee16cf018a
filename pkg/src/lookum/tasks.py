"""Desk-scale task generators with exactly enumerable answer sets.

Every instance carries two supports: ``support`` is the set of completions
counted as correct, and ``model_support`` is what the decoding oracle
believes.  They coincide except for the adversarial arithmetic family, whose
model support adds two weighted wrong-digit branches engineered so that
confidence-greedy unmasking provably commits to a wrong branch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SequenceState, Vocabulary
from .errors import ConfigError, LookumError
from .models import OracleSupport

# Shared symbol vocabulary for arithmetic and countdown: digits then operators.
DIGITS = tuple(range(10))
OP_IDS = {"+": 10, "-": 11, "*": 12, "/": 13}
EQ_ID = 14
SYMBOL_NAMES = {i: str(i) for i in range(10)}
SYMBOL_NAMES.update({10: "+", 11: "-", 12: "*", 13: "/", 14: "="})
SYMBOL_VOCAB = Vocabulary(size=15, names=SYMBOL_NAMES)

SUDOKU_VOCAB = Vocabulary(size=4, names={i: str(i + 1) for i in range(4)})


@dataclass(frozen=True)
class TaskSpec:
    """Which task family to generate, its knobs, and the generation seed."""

    kind: str  # "arithmetic" | "mini_sudoku" | "countdown"
    instance_count: int = 500
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("arithmetic", "mini_sudoku", "countdown"):
            raise ConfigError(f"task.kind: unknown task kind {self.kind!r}")
        if self.instance_count < 1:
            raise ConfigError("task.instance_count: must be >= 1")


@dataclass(frozen=True)
class TaskInstance:
    """One decodable problem with its exact answer set.

    ``truth`` is a designated correct completion (used by the error-injection
    study); ``alphabets`` lists, per answer position, the token ids a wrong
    injection may draw from.
    """

    vocab: Vocabulary
    prompt_tokens: tuple[int, ...]
    answer_positions: tuple[int, ...]
    support: OracleSupport
    model_support: OracleSupport
    truth: tuple[int, ...]
    alphabets: tuple[tuple[int, ...], ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_valid", frozenset(self.support.as_tuples()))

    @property
    def prompt_state(self) -> SequenceState:
        return SequenceState(self.prompt_tokens)

    @property
    def length(self) -> int:
        return len(self.prompt_tokens)

    def is_valid(self, tokens: Sequence[int]) -> bool:
        return tuple(int(t) for t in tokens) in self._valid

    def to_record(self) -> dict:
        return {
            "prompt": list(self.prompt_tokens),
            "length": self.length,
            "support_size": self.support.size,
            "task": self.meta.get("task", ""),
        }


def _digits(value: int, width: int) -> list[int]:
    text = str(value).rjust(width, "0")
    if len(text) > width:
        raise LookumError(f"value {value} does not fit in width {width}")
    return [int(c) for c in text]


def _answer_width(operators: Sequence[str], hi: int) -> int:
    widths = {"+": len(str(2 * hi)), "-": len(str(hi)), "*": len(str(hi * hi))}
    return max(widths[op] for op in operators)


def _apply(op: str, a: int, b: int) -> int | None:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0 or a % b != 0:
        return None
    return a // b


def generate_task(spec: TaskSpec) -> list[TaskInstance]:
    """Deterministically generate the instance list for a task spec."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "arithmetic":
        gen = _arithmetic_instance
    elif spec.kind == "mini_sudoku":
        gen = _sudoku_instance
    else:
        gen = _countdown_instance
    out = []
    for _ in range(spec.instance_count):
        for attempt in range(200):
            inst = gen(spec.params, rng)
            if inst is not None:
                out.append(inst)
                break
        else:
            raise LookumError(f"could not generate a satisfiable {spec.kind} instance")
    return out


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def _arithmetic_params(params: dict) -> dict:
    known = {
        "operand_lo": 10,
        "operand_hi": 99,
        "operators": ("+", "-", "*"),
        "adversarial": False,
    }
    for key in params:
        if key not in known:
            raise ConfigError(f"task.params.{key}: unknown arithmetic parameter")
    known.update(params)
    if known["operand_lo"] < 0 or known["operand_hi"] < known["operand_lo"]:
        raise ConfigError("task.params.operand_lo/operand_hi: need 0 <= lo <= hi")
    for op in known["operators"]:
        if op not in ("+", "-", "*"):
            raise ConfigError(f"task.params.operators: unsupported operator {op!r}")
    return known


def _arithmetic_instance(params: dict, rng: np.random.Generator) -> TaskInstance:
    p = _arithmetic_params(params)
    lo, hi = p["operand_lo"], p["operand_hi"]
    op = str(rng.choice(list(p["operators"])))
    a = int(rng.integers(lo, hi + 1))
    b = int(rng.integers(lo, hi + 1))
    if op == "-" and b > a:
        a, b = b, a
    operand_width = len(str(hi))
    answer_width = _answer_width(p["operators"], hi)
    if p["adversarial"]:
        answer_width = max(answer_width, 2)
    answer = _apply(op, a, b)
    tokens = (
        _digits(a, operand_width)
        + [OP_IDS[op]]
        + _digits(b, operand_width)
        + [EQ_ID]
        + _digits(answer, answer_width)
    )
    truth = tuple(tokens)
    offset = 2 * operand_width + 2
    answer_positions = tuple(range(offset, offset + answer_width))
    prompt = truth[:offset] + (SYMBOL_VOCAB.mask_id,) * answer_width
    meta = {"task": "arithmetic", "operator": op, "a": a, "b": b, "answer": answer}
    valid = OracleSupport([truth])
    if not p["adversarial"]:
        return TaskInstance(
            vocab=SYMBOL_VOCAB,
            prompt_tokens=prompt,
            answer_positions=answer_positions,
            support=valid,
            model_support=valid,
            truth=truth,
            alphabets=tuple(DIGITS for _ in answer_positions),
            meta=meta,
        )
    model_support = _adversarial_support(truth, answer_positions, rng, meta)
    return TaskInstance(
        vocab=SYMBOL_VOCAB,
        prompt_tokens=prompt,
        answer_positions=answer_positions,
        support=valid,
        model_support=model_support,
        truth=truth,
        alphabets=tuple(DIGITS for _ in answer_positions),
        meta=meta,
    )


def _bernoulli_entropy(q: float) -> float:
    return float(-(q * np.log(q) + (1 - q) * np.log(1 - q)))


def _adversarial_support(
    truth: tuple[int, ...],
    answer_positions: tuple[int, ...],
    rng: np.random.Generator,
    meta: dict,
) -> OracleSupport:
    """Three-branch model belief that provably traps confidence-greedy decoding.

    Besides the correct completion A (weight wa) the model believes in branch
    B wrong at the pivot position (weight wb > wa) and branch C wrong at the
    bait position (weight wc < wa).  The bait then carries the highest
    marginal confidence and gets committed first, after which the conditional
    at the pivot flips to the wrong digit.  Committing the pivot first instead
    resolves the ambiguity correctly, and its lookahead state has strictly
    lower entropy, which is what the verifier can exploit.
    """
    pivot, bait = (int(i) for i in rng.permutation(list(answer_positions))[:2])
    wa = float(rng.uniform(0.38, 0.44))
    wb = wa + float(rng.uniform(0.02, 0.05))
    wc = 1.0 - wa - wb
    # Trap conditions: bait confidence wa+wb beats pivot confidence wa+wc,
    # the pivot marginal still favors the truth (wa+wc > wb), and the
    # post-bait conditional flips (wb > wa).
    assert wb > wa and wb < 0.5 and wb > wc and wa > wc
    assert _bernoulli_entropy(wa / (wa + wc)) < _bernoulli_entropy(wa / (wa + wb))
    wrong_pivot = int(rng.choice([d for d in DIGITS if d != truth[pivot]]))
    wrong_bait = int(rng.choice([d for d in DIGITS if d != truth[bait]]))
    branch_b = list(truth)
    branch_b[pivot] = wrong_pivot
    branch_c = list(truth)
    branch_c[bait] = wrong_bait
    meta.update(
        {"pivot": pivot, "bait": bait, "weights": [wa, wb, wc], "adversarial": True}
    )
    return OracleSupport([truth, tuple(branch_b), tuple(branch_c)], [wa, wb, wc])


# ---------------------------------------------------------------------------
# mini sudoku (4x4)
# ---------------------------------------------------------------------------

_SUDOKU_GRIDS: list[tuple[int, ...]] | None = None


def _enumerate_sudoku_grids() -> list[tuple[int, ...]]:
    """All complete 4x4 grids (values 0..3) via backtracking."""
    grids: list[tuple[int, ...]] = []
    grid = [-1] * 16

    def ok(cell: int, val: int) -> bool:
        r, c = divmod(cell, 4)
        for j in range(4):
            if grid[r * 4 + j] == val or grid[j * 4 + c] == val:
                return False
        br, bc = (r // 2) * 2, (c // 2) * 2
        for dr in range(2):
            for dc in range(2):
                if grid[(br + dr) * 4 + (bc + dc)] == val:
                    return False
        return True

    def fill(cell: int) -> None:
        if cell == 16:
            grids.append(tuple(grid))
            return
        for val in range(4):
            if ok(cell, val):
                grid[cell] = val
                fill(cell + 1)
                grid[cell] = -1

    fill(0)
    return grids


def sudoku_grids() -> list[tuple[int, ...]]:
    global _SUDOKU_GRIDS
    if _SUDOKU_GRIDS is None:
        _SUDOKU_GRIDS = _enumerate_sudoku_grids()
    return _SUDOKU_GRIDS


def _sudoku_params(params: dict) -> dict:
    known = {"givens_lo": 6, "givens_hi": 10}
    for key in params:
        if key not in known:
            raise ConfigError(f"task.params.{key}: unknown mini_sudoku parameter")
    known.update(params)
    if not 0 <= known["givens_lo"] <= known["givens_hi"] <= 16:
        raise ConfigError("task.params.givens_lo/hi: need 0 <= lo <= hi <= 16")
    return known


def _sudoku_instance(params: dict, rng: np.random.Generator) -> TaskInstance:
    p = _sudoku_params(params)
    grids = sudoku_grids()
    truth = grids[int(rng.integers(len(grids)))]
    givens = int(rng.integers(p["givens_lo"], p["givens_hi"] + 1))
    given_cells = set(int(c) for c in rng.choice(16, size=givens, replace=False))
    answer_positions = tuple(i for i in range(16) if i not in given_cells)
    prompt = tuple(
        truth[i] if i in given_cells else SUDOKU_VOCAB.mask_id for i in range(16)
    )
    consistent = [g for g in grids if all(g[i] == truth[i] for i in given_cells)]
    support = OracleSupport(consistent)
    return TaskInstance(
        vocab=SUDOKU_VOCAB,
        prompt_tokens=prompt,
        answer_positions=answer_positions,
        support=support,
        model_support=support,
        truth=truth,
        alphabets=tuple(tuple(range(4)) for _ in answer_positions),
        meta={"task": "mini_sudoku", "givens": givens},
    )


# ---------------------------------------------------------------------------
# countdown
# ---------------------------------------------------------------------------


def _countdown_params(params: dict) -> dict:
    known = {
        "operand_count": 3,
        "operand_lo": 1,
        "operand_hi": 9,
        "operators": ("+", "-", "*", "/"),
        "target_hi": 99,
    }
    for key in params:
        if key not in known:
            raise ConfigError(f"task.params.{key}: unknown countdown parameter")
    known.update(params)
    if known["operand_count"] < 2 or known["operand_count"] > 4:
        raise ConfigError("task.params.operand_count: supported range is 2..4")
    if not 1 <= known["operand_lo"] <= known["operand_hi"] <= 9:
        raise ConfigError("task.params.operand_lo/hi: need 1 <= lo <= hi <= 9")
    if not 1 <= known["target_hi"] <= 99:  # targets render as two digits
        raise ConfigError("task.params.target_hi: need 1 <= target_hi <= 99")
    for op in known["operators"]:
        if op not in OP_IDS:
            raise ConfigError(f"task.params.operators: unsupported operator {op!r}")
    return known


def _countdown_expressions(
    operands: Sequence[int], operators: Sequence[str], target_hi: int
) -> dict[int, list[tuple[int, ...]]]:
    """All expression token sequences by value, left-to-right evaluation.

    Every intermediate must be a non-negative integer; division must be
    exact.  Expressions use each given operand exactly once.
    """
    n = len(operands)
    by_value: dict[int, list[tuple[int, ...]]] = {}
    for perm in itertools.permutations(range(n)):
        values = [operands[i] for i in perm]
        for ops in itertools.product(operators, repeat=n - 1):
            acc = values[0]
            good = True
            for op, nxt in zip(ops, values[1:]):
                acc = _apply(op, acc, nxt)
                if acc is None or acc < 0 or acc > 999:
                    good = False
                    break
            if not good or acc > target_hi:
                continue
            expr: list[int] = [values[0]]
            for op, nxt in zip(ops, values[1:]):
                expr.extend([OP_IDS[op], nxt])
            by_value.setdefault(acc, []).append(tuple(expr))
    return by_value


def _countdown_instance(params: dict, rng: np.random.Generator) -> TaskInstance | None:
    p = _countdown_params(params)
    n = p["operand_count"]
    operands = [int(v) for v in rng.integers(p["operand_lo"], p["operand_hi"] + 1, n)]
    by_value = _countdown_expressions(operands, p["operators"], p["target_hi"])
    if not by_value:
        return None
    targets = sorted(by_value)
    target = int(targets[int(rng.integers(len(targets)))])
    expressions = by_value[target]
    prefix = tuple(operands) + tuple(_digits(target, 2)) + (EQ_ID,)
    expr_len = 2 * n - 1
    answer_positions = tuple(range(len(prefix), len(prefix) + expr_len))
    prompt = prefix + (SYMBOL_VOCAB.mask_id,) * expr_len
    full = [prefix + expr for expr in expressions]
    support = OracleSupport(full)
    truth = full[int(rng.integers(len(full)))]
    op_alphabet = tuple(OP_IDS[o] for o in p["operators"])
    alphabets = tuple(
        DIGITS if j % 2 == 0 else op_alphabet for j in range(expr_len)
    )
    return TaskInstance(
        vocab=SYMBOL_VOCAB,
        prompt_tokens=prompt,
        answer_positions=answer_positions,
        support=support,
        model_support=support,
        truth=truth,
        alphabets=alphabets,
        meta={"task": "countdown", "operands": operands, "target": target},
    )
