"""Baseline decoders: greedy score-ranked and random unmasking, plus schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PredictiveField, ScoreKind, SequenceState, masked_indices, rank_masked
from .decoding import ARGMAX, DecodeResult, StepRecord, TokenRule, as_rng
from .models import CountingBackend, ModelBackend

RANDOM = "random"  # baseline kind drawing unmask indices uniformly


@dataclass(frozen=True)
class BudgetSchedule:
    """Per-step unmasking budgets B_t.

    constant: ``tokens_per_step`` per step, the final step absorbing the
    remainder.  linear: the initial masked count split as evenly as possible
    over ``total_steps`` steps, earlier steps taking the extra token.  Either
    way the budgets sum to the initial masked count and every budget is >= 1.
    """

    kind: str = "constant"  # "constant" | "linear"
    tokens_per_step: int = 2
    total_steps: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and self.tokens_per_step < 1:
            raise ValueError("tokens_per_step must be >= 1")
        if self.kind == "linear" and (self.total_steps is None or self.total_steps < 1):
            raise ValueError("linear schedule requires total_steps >= 1")

    def budgets(self, masked_count: int) -> tuple[int, ...]:
        if masked_count == 0:
            return ()
        if self.kind == "constant":
            b = self.tokens_per_step
            steps = math.ceil(masked_count / b)
            out = [b] * (steps - 1)
            out.append(masked_count - b * (steps - 1))
            return tuple(out)
        steps = min(self.total_steps, masked_count)
        base, rem = divmod(masked_count, steps)
        return tuple(base + 1 for _ in range(rem)) + tuple(
            base for _ in range(steps - rem)
        )


def greedy_unmask_set(
    field: PredictiveField, masked: tuple[int, ...], budget: int, kind: ScoreKind
) -> tuple[int, ...]:
    """Top-``budget`` masked indices under the score ranking (budget clamped)."""
    if budget <= 0:
        return ()
    return tuple(rank_masked(field, masked, kind)[: min(budget, len(masked))])


def decode_baseline(
    backend: ModelBackend,
    initial: SequenceState,
    schedule: BudgetSchedule,
    kind: ScoreKind | str = ScoreKind.CONFIDENCE,
    token_rule: TokenRule = ARGMAX,
    rng: int | np.random.Generator | None = None,
) -> DecodeResult:
    """Iteratively unmask per the greedy ranking (or uniformly for ``random``).

    The prompt region (observed tokens of ``initial``) is never touched; each
    step commits exactly the scheduled budget, so the masked set shrinks to
    empty and the result is a complete sequence.
    """
    rng = as_rng(rng)
    counting = CountingBackend(backend)
    mask_id = backend.vocab.mask_id
    budgets = schedule.budgets(len(masked_indices(initial.tokens, mask_id)))
    state = initial.with_step(len(budgets))
    records: list[StepRecord] = []
    for budget in budgets:
        masked = masked_indices(state.tokens, mask_id)
        field = counting.predict(state)
        if kind == RANDOM:
            take = min(budget, len(masked))
            picks = rng.choice(len(masked), size=take, replace=False)
            unmask = tuple(masked[int(j)] for j in picks)
        else:
            unmask = greedy_unmask_set(field, masked, budget, ScoreKind(kind))
        committed = tuple(
            (pos, token_rule.draw(field.rows[pos], rng)) for pos in sorted(unmask)
        )
        records.append(
            StepRecord(
                step=state.step,
                masked_before=len(masked),
                unmask_set=unmask,
                committed=committed,
            )
        )
        state = state.assign(dict(committed))
    if masked_indices(state.tokens, mask_id):
        raise RuntimeError("schedule exhausted with masked positions remaining")
    return DecodeResult(state=state, steps=records, backend_calls=counting.calls)
