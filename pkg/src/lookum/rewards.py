"""Reward-alignment surface: verifiers as surrogate rewards, pluggable reward
functions, and the brute-force target distribution used by unbiasedness tests.

All sampling against these targets is self-normalized (the normalizing
constant of w(x) * exp(r(x)/alpha) is unknown in general), which carries the
usual O(1/n) estimator bias in the sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SequenceState
from .errors import OracleError
from .lookahead import VerifierKind, verify_state
from .models import ModelBackend, OracleSupport

ENUMERATION_GUARD = 100_000


@dataclass
class CallableReward:
    """Deterministic state reward with memoization keyed by the token tuple.

    SMC re-scores repeated states after resampling, so caching pays for
    itself; partition one instance per decode when running decodes in
    parallel threads.
    """

    fn: Callable[[SequenceState], float]
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, state: SequenceState) -> float:
        key = state.tokens
        value = self._cache.get(key)
        if value is None:
            value = float(self.fn(state))
            self._cache[key] = value
        return value


def verifier_as_reward(backend: ModelBackend, vkind: VerifierKind) -> CallableReward:
    """r(x) := the verifier score of x itself (one predict, no extra lookahead)."""
    return CallableReward(lambda state: verify_state(backend, state, vkind))


def brute_force_target(
    support: OracleSupport,
    reward: CallableReward,
    alpha: float,
    guard: int = ENUMERATION_GUARD,
) -> dict[tuple[int, ...], float]:
    """Exact reward-tilted distribution over complete sequences.

    Returns the normalized w(x) * exp(r(x)/alpha) over the support, the
    ground truth the SMC/NIS statistical tests compare against.  alpha=inf
    leaves the base distribution unchanged.
    """
    if support.size > guard:
        raise OracleError(
            f"support size {support.size} exceeds enumeration guard {guard}"
        )
    if not alpha > 0:
        raise ValueError("alpha must be positive (may be inf)")
    sequences = support.as_tuples()
    rewards = np.array(
        [reward.evaluate(SequenceState(seq)) for seq in sequences], dtype=np.float64
    )
    if math.isinf(alpha):
        logits = np.log(support.weights)
    else:
        logits = np.log(support.weights) + rewards / alpha
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return {seq: float(p) for seq, p in zip(sequences, probs)}
