"""Shared decode plumbing: token commitment rules, step records, and results."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import SequenceState


@dataclass(frozen=True)
class TokenRule:
    """How a committed position receives its token value.

    argmax is deterministic (ties break to the lowest token id); sample draws
    from the row sharpened at ``temperature`` (1.0 means the row as-is).
    """

    kind: str = "argmax"  # "argmax" | "sample"
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("argmax", "sample"):
            raise ValueError(f"unknown token rule {self.kind!r}")
        if self.kind == "sample" and self.temperature <= 0:
            raise ValueError("sampling temperature must be positive")

    def draw(self, row: np.ndarray, rng: np.random.Generator) -> int:
        if self.kind == "argmax":
            return int(np.argmax(row))
        p = row
        if self.temperature != 1.0:
            with np.errstate(divide="ignore"):
                logp = np.log(row)
            logp = (logp - logp.max()) / self.temperature
            p = np.exp(logp)
            p = p / p.sum()
        return int(rng.choice(len(p), p=p))


ARGMAX = TokenRule("argmax")


@dataclass(frozen=True)
class StepRecord:
    """What one denoising step committed, plus candidate-level diagnostics.

    ``scores`` / ``weights`` hold the per-path verifier scores and normalized
    selection weights (empty for baselines); ``chosen`` is the selected path
    index under NIS and None under SMC, where selection is by resampling.
    """

    step: int
    masked_before: int
    unmask_set: tuple[int, ...]
    committed: tuple[tuple[int, int], ...]  # (position, token), ascending position
    scores: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    chosen: int | None = None


@dataclass
class DecodeResult:
    """Completed sequence plus the per-step trace a benchmark consumes."""

    state: SequenceState
    steps: list[StepRecord]
    backend_calls: int
    final_particles: list[Any] | None = None  # SMC population after the last step

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.state.tokens

    @property
    def num_commits(self) -> int:
        return sum(len(s.committed) for s in self.steps)


def as_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Normalize seed-ish inputs to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
