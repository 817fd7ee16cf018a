"""Reward hooks, brute-force targets, and importance-sampling properties."""

import math

import numpy as np
import pytest

from lookum.core import SequenceState, Vocabulary
from lookum.errors import OracleError
from lookum.lookahead import VerifierKind
from lookum.models import OracleBackend, OracleSupport
from lookum.rewards import CallableReward, brute_force_target, verifier_as_reward

from naive_oracle import naive_predict

TOL = 1e-9


class TestVerifierAsReward:
    def test_fully_unmasked_confidence_is_one(self):
        vocab = Vocabulary(4)
        backend = OracleBackend(vocab, OracleSupport([[0, 1, 2]]))
        reward = verifier_as_reward(backend, VerifierKind("avg_confidence"))
        assert reward.evaluate(SequenceState((0, 1, 2))) == pytest.approx(1.0, abs=TOL)

    def test_fully_masked_uniform_oracle(self):
        vocab = Vocabulary(4)
        backend = OracleBackend(vocab, OracleSupport([[v] for v in range(4)]))
        reward = verifier_as_reward(backend, VerifierKind("avg_negative_entropy"))
        value = reward.evaluate(SequenceState((vocab.mask_id,)))
        assert value == pytest.approx(-math.log(4), abs=TOL)

    def test_mixed_state_matches_hand_enumeration(self):
        vocab = Vocabulary(4)
        seqs = [(0, 1, 2), (0, 3, 2)]
        weights = [2.0, 1.0]
        backend = OracleBackend(vocab, OracleSupport(seqs, weights))
        state = SequenceState((0, vocab.mask_id, vocab.mask_id))
        rows, _ = naive_predict(seqs, weights, state.tokens, vocab.mask_id, 4)
        expected = -np.mean(
            [-sum(p * math.log(p) for p in row if p > 0) for row in rows]
        )
        reward = verifier_as_reward(backend, VerifierKind("avg_negative_entropy"))
        assert reward.evaluate(state) == pytest.approx(expected, abs=TOL)

    def test_cache_avoids_repeat_backend_calls(self):
        vocab = Vocabulary(3)
        backend = OracleBackend(vocab, OracleSupport([[0, 1]]))
        calls = []
        reward = CallableReward(lambda s: calls.append(1) or 0.5)
        state = SequenceState((0, 1))
        reward.evaluate(state)
        reward.evaluate(state)
        assert len(calls) == 1


class TestBruteForceTarget:
    def test_constant_reward_returns_base(self):
        support = OracleSupport([[0], [1]], [3.0, 1.0])
        reward = CallableReward(lambda s: 0.7)
        target = brute_force_target(support, reward, alpha=0.5)
        assert target[(0,)] == pytest.approx(0.75, abs=TOL)
        assert target[(1,)] == pytest.approx(0.25, abs=TOL)

    def test_infinite_alpha_returns_base(self):
        support = OracleSupport([[0], [1]], [1.0, 1.0])
        reward = CallableReward(lambda s: float(s.tokens[0]))
        target = brute_force_target(support, reward, alpha=float("inf"))
        assert target[(0,)] == pytest.approx(0.5, abs=TOL)

    def test_two_sequence_closed_form(self):
        support = OracleSupport([[0], [1]], [0.5, 0.5])
        reward = CallableReward(lambda s: 1.0 if s.tokens[0] == 0 else 0.0)
        target = brute_force_target(support, reward, alpha=1.0)
        e = math.e
        assert target[(0,)] == pytest.approx(e / (e + 1), abs=TOL)
        assert target[(1,)] == pytest.approx(1 / (e + 1), abs=TOL)

    def test_guard_rejects_huge_supports(self):
        support = OracleSupport([[0], [1]])
        with pytest.raises(OracleError):
            brute_force_target(support, CallableReward(lambda s: 0.0), 1.0, guard=1)


class TestImportanceSampling:
    def test_self_normalized_estimate_within_three_se(self):
        # proposal = base support distribution, target = reward-tilted;
        # the SNIS estimate of E_target[f] must sit within 3 standard errors
        rng = np.random.default_rng(17)
        vocab = Vocabulary(3)
        seqs = [(a, b) for a in range(3) for b in range(3)]
        weights = rng.integers(1, 9, size=len(seqs)).astype(float)
        support = OracleSupport(seqs, weights)
        alpha = 0.8
        reward = CallableReward(lambda s: 1.0 if s.tokens[0] == s.tokens[1] else 0.2)
        target = brute_force_target(support, reward, alpha)
        f = lambda seq: float(seq[0] + seq[1] * 2)
        exact = sum(target[seq] * f(seq) for seq in target)

        n = 100_000
        base_p = support.weights / support.total_weight
        draws = rng.choice(len(seqs), size=n, p=base_p)
        fs = np.array([f(seqs[i]) for i in draws])
        ws = np.array(
            [math.exp(reward.evaluate(SequenceState(seqs[i])) / alpha) for i in draws]
        )
        wt = ws / ws.sum()
        estimate = float((wt * fs).sum())
        se = float(np.sqrt((wt**2 * (fs - estimate) ** 2).sum()))
        assert abs(estimate - exact) <= 3 * se

    def test_argmax_selection_invariant_to_reward_shift(self):
        scores = [0.3, 0.9, 0.5]
        shifted = [s + 12.5 for s in scores]
        from lookum.lookahead import nis_weights

        assert int(np.argmax(nis_weights(scores, 0.0))) == int(
            np.argmax(nis_weights(shifted, 0.0))
        )
        # at alpha > 0 the normalized weights are shift-invariant exactly
        np.testing.assert_allclose(
            nis_weights(scores, 0.25), nis_weights(shifted, 0.25), atol=TOL
        )
