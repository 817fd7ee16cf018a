"""Vocabulary, sequence state, predictive distributions, and certainty scores.

Everything here is an immutable value object or a pure function, so the types
are safe to share freely across concurrent decodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import InvalidDistributionError

# Tolerance for accepting a probability row as normalized.
PROB_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Vocabulary:
    """Token id space: content ids are 0..size-1 and the mask symbol is id size.

    ``size`` counts content (non-mask) tokens only.  Predictive rows carry one
    probability per content id and zero mass on the mask, which is why the mask
    id is pinned to ``size``: row index and token id then coincide.
    """

    size: int
    mask_id: int = -1  # normalized to ``size`` in __post_init__
    names: Mapping[int, str] | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"vocabulary size must be >= 1, got {self.size}")
        if self.mask_id == -1:
            object.__setattr__(self, "mask_id", self.size)
        elif self.mask_id != self.size:
            raise ValueError(
                f"mask_id must equal size ({self.size}); content ids are 0..size-1"
            )

    def is_mask(self, token: int) -> bool:
        return token == self.mask_id

    def is_content(self, token: int) -> bool:
        return 0 <= token < self.size

    def token_name(self, token: int) -> str:
        if token == self.mask_id:
            return "_"
        if self.names and token in self.names:
            return self.names[token]
        return f"<{token}>"

    def render(self, tokens: Iterable[int]) -> str:
        return "".join(self.token_name(t) for t in tokens)


@dataclass(frozen=True)
class SequenceState:
    """Fixed-length token array at denoising step ``step``.

    The sequence length never changes during decoding; unmasking only replaces
    mask ids with content ids, so the masked index set shrinks monotonically
    as ``step`` counts down to 0.
    """

    tokens: tuple[int, ...]
    step: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def assign(self, values: Mapping[int, int], step: int | None = None) -> "SequenceState":
        """Return a copy with ``values`` (position -> token) committed."""
        toks = list(self.tokens)
        for pos, tok in values.items():
            toks[pos] = int(tok)
        return SequenceState(tuple(toks), self.step - 1 if step is None else step)

    def with_step(self, step: int) -> "SequenceState":
        return replace(self, step=step)


def masked_indices(tokens: Sequence[int], mask_id: int) -> tuple[int, ...]:
    """Positions currently holding the mask symbol, ascending."""
    return tuple(i for i, t in enumerate(tokens) if t == mask_id)


class ScoreKind(str, enum.Enum):
    """Per-position certainty measures; larger always means more certain."""

    CONFIDENCE = "confidence"
    MARGIN = "margin"
    NEGATIVE_ENTROPY = "negative_entropy"


def _validate_rows(rows: np.ndarray) -> np.ndarray:
    if rows.ndim != 2:
        raise InvalidDistributionError(f"expected 2-d rows, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise InvalidDistributionError("non-finite probability entries")
    if rows.min(initial=0.0) < -1e-9:
        raise InvalidDistributionError("negative probability entries")
    sums = rows.sum(axis=1)
    bad = np.abs(sums - 1.0) > PROB_TOLERANCE
    if bad.any():
        i = int(np.argmax(bad))
        raise InvalidDistributionError(
            f"row {i} sums to {sums[i]:.8f}, outside tolerance {PROB_TOLERANCE}"
        )
    if (rows < 0).any():
        rows = np.where(rows < 0, 0.0, rows)  # clip float noise in [-1e-9, 0)
    return rows


@dataclass(frozen=True, eq=False)
class PredictiveField:
    """One categorical distribution per position over the content vocabulary.

    Rows exist for every position: masked rows carry the model's prediction,
    observed rows a point mass on the observed token.  ``off_support`` marks a
    field produced by an oracle whose support had no sequence consistent with
    the observed tokens (see models.oracle_predict).
    """

    rows: np.ndarray  # (L, vocab_size) float64, each row a distribution
    off_support: bool = False

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        rows = _validate_rows(rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[1]

    def row(self, position: int) -> np.ndarray:
        return self.rows[position]


def row_entropies(rows: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each row; 0*log(0) contributes 0."""
    return -xlogy(rows, rows).sum(axis=1)


def entropy(row: Sequence[float]) -> float:
    """Shannon entropy in nats of a single categorical distribution."""
    arr = _validate_rows(np.asarray(row, dtype=np.float64)[None, :])
    return float(row_entropies(arr)[0])


def score_rows(rows: np.ndarray, kind: ScoreKind) -> np.ndarray:
    """Vectorized certainty score of each (already validated) row."""
    kind = ScoreKind(kind)
    if kind is ScoreKind.CONFIDENCE:
        return rows.max(axis=1)
    if kind is ScoreKind.MARGIN:
        if rows.shape[1] < 2:
            return rows[:, 0].copy()  # second-best mass is 0
        part = np.partition(rows, rows.shape[1] - 2, axis=1)
        return part[:, -1] - part[:, -2]
    return -row_entropies(rows)


def score(row: Sequence[float], kind: ScoreKind) -> float:
    """Certainty score of one categorical distribution."""
    arr = _validate_rows(np.asarray(row, dtype=np.float64)[None, :])
    return float(score_rows(arr, kind)[0])


def rank_masked(
    field: PredictiveField, masked: Sequence[int], kind: ScoreKind
) -> list[int]:
    """Masked indices sorted by descending score; ties broken by ascending index."""
    masked = list(masked)
    if not masked:
        return []
    idx = np.asarray(masked, dtype=np.intp)
    scores = score_rows(field.rows[idx], kind)
    order = np.lexsort((idx, -scores))
    return [int(idx[j]) for j in order]
