"""Lookahead unmasking: candidate path pools, sequence-level verifiers, and
importance-sampling path selection (per-step NIS or particle SMC).

The decode loop per step: predict once on the current state, build a
high-certainty pool, propose k candidate unmask sets, sample their token
values, verify each hypothetical next state with a one-step-ahead predict,
then select by softmax importance weights (NIS) or propagate and resample a
particle population (SMC).  Verifier and pool work read the already-computed
fields, so the only model cost is the k verification predicts per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import (
    PredictiveField,
    ScoreKind,
    SequenceState,
    masked_indices,
    rank_masked,
    row_entropies,
)
from .decoding import ARGMAX, DecodeResult, StepRecord, TokenRule, as_rng
from .errors import LookumError
from .models import CountingBackend, ModelBackend
from .strategies import BudgetSchedule


@dataclass(frozen=True)
class PoolPolicy:
    """How the high-certainty candidate pool is built each step.

    n_best keeps the top ``size`` masked positions under ``measure``;
    certainty_filter keeps positions whose top probability exceeds
    ``threshold`` and falls back to the top positions by confidence when the
    filter empties.  ``anchor_greedy`` keeps proposal 0 pinned to the
    deterministic top-budget set (all-stochastic mode when False).
    """

    kind: str = "n_best"  # "n_best" | "certainty_filter"
    size: int = 5
    threshold: float = 0.9
    measure: ScoreKind = ScoreKind.CONFIDENCE
    anchor_greedy: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("n_best", "certainty_filter"):
            raise ValueError(f"unknown pool kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("pool size must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("certainty threshold must lie in (0, 1)")
        object.__setattr__(self, "measure", ScoreKind(self.measure))


@dataclass(frozen=True)
class VerifierKind:
    """Sequence-level certainty score of a hypothetical next state.

    avg_negative_entropy: minus the mean Shannon entropy of the predictive
    rows; avg_confidence: the mean top probability.  ``scope`` selects whether
    the mean runs over all positions or only the still-masked ones.
    """

    kind: str = "avg_negative_entropy"  # "avg_negative_entropy" | "avg_confidence"
    scope: str = "all_positions"  # "all_positions" | "masked_only"

    def __post_init__(self) -> None:
        if self.kind not in ("avg_negative_entropy", "avg_confidence"):
            raise ValueError(f"unknown verifier kind {self.kind!r}")
        if self.scope not in ("all_positions", "masked_only"):
            raise ValueError(f"unknown verifier scope {self.scope!r}")


@dataclass(frozen=True)
class SelectionScheme:
    """Path selection: per-step importance sampling or particle SMC.

    ``alpha`` is the KL temperature of the exp(score/alpha) weights; alpha=0
    is the documented greedy-argmax limit (NIS only).  ``k`` is the number of
    candidate paths (NIS) or particles (SMC); SMC resamples systematically at
    every step.
    """

    kind: str = "nis"  # "nis" | "smc"
    alpha: float = 0.1
    k: int = 2
    resample: str = "every_step"

    def __post_init__(self) -> None:
        if self.kind not in ("nis", "smc"):
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.kind == "smc" and self.alpha == 0:
            raise ValueError("SMC requires alpha > 0; alpha=0 is the NIS greedy limit")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.resample != "every_step":
            raise ValueError("only every_step resampling is supported")


class RewardLike(Protocol):
    """Anything exposing a deterministic state score (see rewards module)."""

    def evaluate(self, state: SequenceState) -> float:
        ...


@dataclass(frozen=True)
class PathProposal:
    """One candidate unmask set with its committed token values."""

    unmask_set: tuple[int, ...]
    token_values: tuple[tuple[int, int], ...]  # (position, token), ascending
    resulting_state: SequenceState


@dataclass(frozen=True)
class Particle:
    """SMC particle: a state carried across steps with weight bookkeeping.

    ``history`` accumulates (step, masked_before, unmask_set, committed)
    tuples so the returned answer's commit lineage survives resampling.
    """

    state: SequenceState
    log_weight: float = 0.0
    prev_score: float = 0.0
    history: tuple = ()


def build_pool(
    field: PredictiveField,
    masked: Sequence[int],
    policy: PoolPolicy,
    budget: int,
) -> tuple[int, ...]:
    """High-certainty masked positions eligible for stochastic proposals.

    The certainty filter can reject every position; it then falls back to the
    top-``budget`` positions by confidence so the step stays decodable.
    """
    masked = list(masked)
    if not masked:
        return ()
    if policy.kind == "n_best":
        return tuple(rank_masked(field, masked, policy.measure)[: policy.size])
    maxima = field.rows[np.asarray(masked, dtype=np.intp)].max(axis=1)
    kept = [i for i, m in zip(masked, maxima) if m > policy.threshold]
    if kept:
        return tuple(kept)
    return tuple(rank_masked(field, masked, ScoreKind.CONFIDENCE)[: max(budget, 1)])


def _commit(
    state: SequenceState,
    field: PredictiveField,
    unmask: Sequence[int],
    token_rule: TokenRule,
    rng: np.random.Generator,
) -> PathProposal:
    committed = tuple(
        (pos, token_rule.draw(field.rows[pos], rng)) for pos in sorted(unmask)
    )
    return PathProposal(
        unmask_set=tuple(unmask),
        token_values=committed,
        resulting_state=state.assign(dict(committed)),
    )


def _single_proposal(
    field: PredictiveField,
    masked: Sequence[int],
    budget: int,
    policy: PoolPolicy,
    token_rule: TokenRule,
    rng: np.random.Generator,
    state: SequenceState,
    greedy: bool,
) -> PathProposal:
    b = min(budget, len(masked))
    if greedy:
        unmask = rank_masked(field, masked, policy.measure)[:b]
        return _commit(state, field, unmask, token_rule, rng)
    pool = list(build_pool(field, masked, policy, b))
    if len(pool) < b:
        # pad with the best remaining positions so a draw of size b exists
        extra = [i for i in rank_masked(field, masked, policy.measure) if i not in pool]
        pool.extend(extra[: b - len(pool)])
    picks = rng.choice(len(pool), size=b, replace=False)
    unmask = [pool[int(j)] for j in picks]
    return _commit(state, field, unmask, token_rule, rng)


def propose_paths(
    field: PredictiveField,
    masked: Sequence[int],
    budget: int,
    policy: PoolPolicy,
    k: int,
    token_rule: TokenRule,
    rng: np.random.Generator,
    state: SequenceState,
) -> list[PathProposal]:
    """Generate k candidate paths for one step.

    Proposal 0 is the deterministic greedy top-budget set (unless the policy
    disables anchoring); the rest draw ``budget`` indices uniformly without
    replacement from the pool.  Duplicates across paths are permitted.  Each
    path consumes its own child RNG stream, so concurrent and serial
    evaluation commit identical tokens.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    children = rng.spawn(k)
    out = []
    for i in range(k):
        greedy = policy.anchor_greedy and i == 0
        out.append(
            _single_proposal(
                field, masked, budget, policy, token_rule, children[i], state, greedy
            )
        )
    return out


def verify_state(
    backend: ModelBackend, state: SequenceState, vkind: VerifierKind
) -> float:
    """Sequence-level certainty of ``state`` under one lookahead predict."""
    field = backend.predict(state)
    if vkind.scope == "masked_only":
        positions = masked_indices(state.tokens, backend.vocab.mask_id)
        if not positions:
            return 0.0 if vkind.kind == "avg_negative_entropy" else 1.0
        rows = field.rows[np.asarray(positions, dtype=np.intp)]
    else:
        rows = field.rows
    if vkind.kind == "avg_negative_entropy":
        return float(-row_entropies(rows).mean())
    return float(rows.max(axis=1).mean())


def verify(
    backend: ModelBackend, proposal: PathProposal, vkind: VerifierKind
) -> float:
    """Verifier score of a proposal's hypothetical next state."""
    return verify_state(backend, proposal.resulting_state, vkind)


def nis_weights(scores: Sequence[float], alpha: float) -> np.ndarray:
    """Normalized exp(score/alpha) weights; alpha=0 yields the argmax one-hot.

    Non-finite scores get zero weight; all-zero weights are an error.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ValueError("scores must be a non-empty vector")
    finite = np.isfinite(s)
    if not finite.any():
        raise LookumError("all candidate scores are non-finite")
    if alpha == 0.0:
        w = np.zeros(len(s))
        masked = np.where(finite, s, -np.inf)
        w[int(np.argmax(masked))] = 1.0  # argmax; ties break to the lowest index
        return w
    shifted = (s - s[finite].max()) / alpha
    w = np.where(finite, np.exp(np.where(finite, shifted, 0.0)), 0.0)
    total = w.sum()
    if total <= 0.0:
        raise LookumError("all importance weights are zero")
    return w / total


def nis_select(
    scores: Sequence[float], alpha: float, rng: np.random.Generator
) -> int:
    """Sample a path index with probability proportional to exp(score/alpha)."""
    w = nis_weights(scores, alpha)
    if alpha == 0.0:
        return int(np.argmax(w))
    return int(rng.choice(len(w), p=w))


def smc_increment(prev_score: float, new_score: float, alpha: float) -> float:
    """Incremental particle weight exp((r(x_new) - r(x_prev)) / alpha)."""
    return float(np.exp((new_score - prev_score) / alpha))


def smc_weights(
    particles: Sequence[Particle], scores: Sequence[float], alpha: float
) -> np.ndarray:
    """Normalized particle weights after the incremental reweighting."""
    logw = np.array(
        [p.log_weight + (s - p.prev_score) / alpha for p, s in zip(particles, scores)]
    )
    finite = np.isfinite(logw)
    if not finite.any():
        raise LookumError("degenerate particle weights (all -inf)")
    shifted = np.where(finite, logw - logw[finite].max(), -np.inf)
    w = np.exp(shifted)
    return w / w.sum()


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling indices: one uniform offset, k evenly spaced hits."""
    k = len(weights)
    positions = (np.arange(k) + rng.uniform()) / k
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard float round-off at the top
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), k - 1)


def smc_step(
    particles: Sequence[Particle],
    proposals: Sequence[PathProposal],
    scores: Sequence[float],
    alpha: float,
    rng: np.random.Generator,
) -> list[Particle]:
    """Propagate each particle to its proposal, reweight, and resample.

    Incremental log-weight is (score - prev_score)/alpha; the population is
    resampled systematically every step, leaving equal weights afterwards.
    """
    if not (len(particles) == len(proposals) == len(scores)):
        raise ValueError("particles, proposals, and scores must align")
    w = smc_weights(particles, scores, alpha)
    indices = systematic_resample(w, rng)
    out = []
    for j in indices:
        j = int(j)
        src = particles[j]
        prop = proposals[j]
        out.append(
            Particle(
                state=prop.resulting_state,
                log_weight=0.0,
                prev_score=float(scores[j]),
                history=src.history + ((prop.unmask_set, prop.token_values),),
            )
        )
    return out


def decode_lookum(
    backend: ModelBackend,
    initial: SequenceState,
    schedule: BudgetSchedule,
    policy: PoolPolicy = PoolPolicy(),
    vkind: VerifierKind = VerifierKind(),
    scheme: SelectionScheme = SelectionScheme(),
    token_rule: TokenRule = ARGMAX,
    rng: int | np.random.Generator | None = None,
    reward: RewardLike | None = None,
) -> DecodeResult:
    """Full lookahead-unmasking decode loop.

    Per step: predict, build the pool, propose k paths, verify each proposal
    (or score it with ``reward`` when a custom reward hook is supplied), then
    select via NIS or propagate/resample the SMC population.  With k=1 and an
    argmax token rule this reduces bit-exactly to the greedy baseline.  The
    SMC answer is the highest-weight particle after the final step, ties
    resolved to the lowest particle index; the final population is returned
    for distribution-level analysis.
    """
    rng = as_rng(rng)
    counting = CountingBackend(backend)
    mask_id = backend.vocab.mask_id
    if reward is None:
        score_state: Callable[[SequenceState], float] = lambda s: verify_state(
            counting, s, vkind
        )
    else:
        score_state = reward.evaluate
    budgets = schedule.budgets(len(masked_indices(initial.tokens, mask_id)))
    if scheme.kind == "nis":
        return _decode_nis(
            counting, initial, budgets, policy, scheme, token_rule, rng, score_state, mask_id
        )
    return _decode_smc(
        counting, initial, budgets, policy, scheme, token_rule, rng, score_state, mask_id
    )


def _decode_nis(
    counting: CountingBackend,
    initial: SequenceState,
    budgets: tuple[int, ...],
    policy: PoolPolicy,
    scheme: SelectionScheme,
    token_rule: TokenRule,
    rng: np.random.Generator,
    score_state: Callable[[SequenceState], float],
    mask_id: int,
) -> DecodeResult:
    state = initial.with_step(len(budgets))
    records: list[StepRecord] = []
    for budget in budgets:
        masked = masked_indices(state.tokens, mask_id)
        field = counting.predict(state)
        proposals = propose_paths(
            field, masked, budget, policy, scheme.k, token_rule, rng, state
        )
        scores = [score_state(p.resulting_state) for p in proposals]
        weights = nis_weights(scores, scheme.alpha)
        if scheme.alpha == 0.0:
            chosen = int(np.argmax(weights))
        else:
            chosen = int(rng.choice(len(weights), p=weights))
        pick = proposals[chosen]
        records.append(
            StepRecord(
                step=state.step,
                masked_before=len(masked),
                unmask_set=pick.unmask_set,
                committed=pick.token_values,
                scores=tuple(float(s) for s in scores),
                weights=tuple(float(w) for w in weights),
                chosen=chosen,
            )
        )
        state = pick.resulting_state
    if masked_indices(state.tokens, mask_id):
        raise RuntimeError("schedule exhausted with masked positions remaining")
    return DecodeResult(state=state, steps=records, backend_calls=counting.calls)


def _decode_smc(
    counting: CountingBackend,
    initial: SequenceState,
    budgets: tuple[int, ...],
    policy: PoolPolicy,
    scheme: SelectionScheme,
    token_rule: TokenRule,
    rng: np.random.Generator,
    score_state: Callable[[SequenceState], float],
    mask_id: int,
) -> DecodeResult:
    # The shared fully-masked start makes the initial prev_score an additive
    # constant across particles, so it cancels in the first normalization and
    # can be set to 0 without touching the resampling distribution.
    start = initial.with_step(len(budgets))
    particles = [Particle(state=start) for _ in range(scheme.k)]
    diagnostics: list[tuple[int, int, tuple, tuple]] = []
    for budget in budgets:
        path_rngs = rng.spawn(scheme.k)
        proposals: list[PathProposal] = []
        scores: list[float] = []
        for j, particle in enumerate(particles):
            masked = masked_indices(particle.state.tokens, mask_id)
            field = counting.predict(particle.state)
            prop = _single_proposal(
                field,
                masked,
                budget,
                policy,
                token_rule,
                path_rngs[j],
                particle.state,
                greedy=policy.anchor_greedy and j == 0,
            )
            proposals.append(prop)
            scores.append(score_state(prop.resulting_state))
        weights = smc_weights(particles, scores, scheme.alpha)
        diagnostics.append(
            (
                particles[0].state.step,
                len(masked_indices(particles[0].state.tokens, mask_id)),
                tuple(float(s) for s in scores),
                tuple(float(w) for w in weights),
            )
        )
        particles = smc_step(particles, proposals, scores, scheme.alpha, rng)
    best = max(range(len(particles)), key=lambda i: (particles[i].log_weight, -i))
    answer = particles[best]
    if masked_indices(answer.state.tokens, mask_id):
        raise RuntimeError("schedule exhausted with masked positions remaining")
    records = [
        StepRecord(
            step=step,
            masked_before=masked_before,
            unmask_set=unmask,
            committed=committed,
            scores=scores,
            weights=weights,
            chosen=None,
        )
        for (step, masked_before, scores, weights), (unmask, committed) in zip(
            diagnostics, answer.history
        )
    ]
    return DecodeResult(
        state=answer.state,
        steps=records,
        backend_calls=counting.calls,
        final_particles=particles,
    )
