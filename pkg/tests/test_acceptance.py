"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Criterion 4 (the SMC
target-distribution test) dominates the runtime at roughly two minutes; all
other criteria finish in seconds.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import chisquare

from lookum.bench import (
    RunReport,
    local_error_counts,
    run_bench,
    sign_test_greater,
    sweep_paths,
)
from lookum.cli import EXIT_OK, run
from lookum.config import DEFAULTS, deep_merge, parse_config
from lookum.core import ScoreKind, SequenceState, Vocabulary, entropy, score
from lookum.decoding import TokenRule
from lookum.lookahead import (
    PoolPolicy,
    SelectionScheme,
    decode_lookum,
    nis_select,
    nis_weights,
    smc_increment,
)
from lookum.models import (
    OracleBackend,
    OracleSupport,
    noise_wrap,
    oracle_predict,
    temperature_wrap,
)
from lookum.rewards import CallableReward, brute_force_target
from lookum.strategies import BudgetSchedule, decode_baseline
from lookum.tasks import TaskSpec, generate_task

from naive_oracle import naive_predict

ATOL = 1e-9


def _report(number, description, check):
    try:
        check()
    except BaseException:
        print(f"[criterion {number:02d}] FAIL  {description}")
        raise
    print(f"[criterion {number:02d}] PASS  {description}")


def _config(extra):
    return parse_config(deep_merge(DEFAULTS, extra))


ADVERSARIAL = {
    "task": {
        "kind": "arithmetic",
        "instance_count": 500,
        "params": {"operand_lo": 2, "operand_hi": 9, "adversarial": True},
    },
    "schedule": {"kind": "constant", "tokens_per_step": 1},
    "seed": 2025,
}


def test_criterion_01_oracle_equivalence():
    def check():
        rng = np.random.default_rng(20240811)
        start = time.time()
        for case in range(1000):
            if case < 2:
                n = int(rng.integers(5000, 10_001))
            elif case < 12:
                n = int(rng.integers(300, 2000))
            else:
                n = int(rng.integers(1, 300))
            length = int(rng.integers(2, 8))
            vocab = Vocabulary(int(rng.integers(2, 7)))
            seqs = rng.integers(0, vocab.size, size=(n, length))
            weights = rng.integers(1, 10, size=n).astype(float)
            support = OracleSupport(seqs, weights)
            tokens = tuple(
                vocab.mask_id if rng.random() < 0.5 else int(rng.integers(vocab.size))
                for _ in range(length)
            )
            # integer weights keep both summation orders exact in float64,
            # so the comparison can demand bit equality
            rows, off = naive_predict(
                [tuple(int(t) for t in row) for row in seqs],
                [float(w) for w in weights],
                tokens,
                vocab.mask_id,
                vocab.size,
            )
            field = oracle_predict(support, SequenceState(tokens), vocab)
            assert field.off_support == off
            assert np.array_equal(field.rows, np.asarray(rows))
        assert time.time() - start < 60.0

    _report(1, "oracle_predict equals naive enumeration on 1000 cases", check)


def test_criterion_02_reduction_identity():
    def check():
        kinds = {
            "arithmetic": TaskSpec("arithmetic", 100, seed=21),
            "mini_sudoku": TaskSpec("mini_sudoku", 100, seed=22),
            "countdown": TaskSpec("countdown", 100, seed=23),
        }
        schedule = BudgetSchedule("constant", 2)
        measures = list(ScoreKind)
        for spec in kinds.values():
            for i, inst in enumerate(generate_task(spec)):
                measure = measures[i % 3]
                backend = OracleBackend(inst.vocab, inst.model_support)
                base = decode_baseline(
                    backend, inst.prompt_state, schedule, kind=measure, rng=i
                )
                for scheme_kind in ("nis", "smc"):
                    got = decode_lookum(
                        backend,
                        inst.prompt_state,
                        schedule,
                        policy=PoolPolicy(measure=measure),
                        scheme=SelectionScheme(scheme_kind, alpha=0.1, k=1),
                        rng=i,
                    )
                    assert got.tokens == base.tokens
                    assert [s.committed for s in got.steps] == [
                        s.committed for s in base.steps
                    ]

    _report(2, "k=1 lookahead is bit-identical to the greedy baseline", check)


def test_criterion_03_score_function_unit_suite():
    def check():
        # entropy
        assert abs(entropy([0.25] * 4) - math.log(4)) < ATOL
        assert abs(entropy([1.0, 0.0, 0.0])) < ATOL
        assert abs(entropy([0.5, 0.5, 0.0, 0.0]) - math.log(2)) < ATOL
        # scores
        assert abs(score([0.7, 0.2, 0.1], ScoreKind.CONFIDENCE) - 0.7) < ATOL
        assert abs(score([0.7, 0.2, 0.1], ScoreKind.MARGIN) - 0.5) < ATOL
        assert abs(score([0.0, 1.0], ScoreKind.NEGATIVE_ENTROPY)) < ATOL
        # softmax selection weights
        w = nis_weights([0.2, 0.1], 0.1)
        expect = np.exp([2.0, 1.0])
        expect /= expect.sum()
        assert np.abs(w - expect).max() < ATOL
        assert np.abs(nis_weights([0.4, 0.4], 1.0) - 0.5).max() < ATOL
        # SMC increment
        assert abs(smc_increment(0.5, 0.7, 0.1) - math.exp(2.0)) < ATOL
        # wrapper closed forms
        vocab = Vocabulary(2)
        sharp = temperature_wrap(
            OracleBackend(vocab, OracleSupport([[0], [1]], [0.8, 0.2])), 0.5
        )
        row = sharp.predict(SequenceState((vocab.mask_id,))).rows[0]
        assert np.abs(row - np.array([0.64, 0.04]) / 0.68).max() < ATOL
        noisy = noise_wrap(OracleBackend(vocab, OracleSupport([[0]])), 0.5)
        row = noisy.predict(SequenceState((vocab.mask_id,))).rows[0]
        assert np.abs(row - [0.75, 0.25]).max() < ATOL

    _report(3, "score/weight unit examples pass at 1e-9", check)


def test_criterion_04_smc_target_distribution():
    def check():
        start = time.time()
        vocab = Vocabulary(3)
        rng = np.random.default_rng(2024)
        seqs = [(a, b, c) for a in range(3) for b in range(3) for c in range(3)]
        weights = rng.integers(1, 9, size=len(seqs)).astype(float)
        support = OracleSupport(seqs, weights)
        mask = vocab.mask_id

        def reward_fn(state):
            a, b, _ = state.tokens
            if a == mask or b == mask:
                return 0.5
            return 1.0 if a == b else 0.0

        alpha = 1.0
        reward = CallableReward(reward_fn)
        target = brute_force_target(support, reward, alpha)
        base = {
            s: w / support.total_weight
            for s, w in zip(support.as_tuples(), support.weights)
        }
        # the tilt must be material, otherwise the test has no power
        assert 0.5 * sum(abs(target[s] - base[s]) for s in target) > 0.1

        backend = OracleBackend(vocab, support)
        initial = SequenceState((mask,) * 3)
        schedule = BudgetSchedule("constant", 1)
        scheme = SelectionScheme("smc", alpha=alpha, k=64)
        rule = TokenRule("sample", temperature=1.0)
        runs = 10_000
        draw_rng = np.random.default_rng(1)
        counts = {s: 0 for s in seqs}
        for r in range(runs):
            result = decode_lookum(
                backend,
                initial,
                schedule,
                policy=PoolPolicy(size=3),
                scheme=scheme,
                token_rule=rule,
                rng=100_000 + r,
                reward=reward,
            )
            # systematic resampling leaves E[count_j] = k * w_j, so a uniform
            # slot draw from the final population is a fair weighted draw
            pick = result.final_particles[int(draw_rng.integers(scheme.k))]
            counts[pick.state.tokens] += 1
        observed = np.array([counts[s] for s in seqs])
        expected = np.array([target[s] * runs for s in seqs])
        outcome = chisquare(observed, expected)
        assert outcome.pvalue > 0.01
        # power check: the same draws must reject the untilted base
        base_expected = np.array([base[s] * runs for s in seqs])
        assert chisquare(observed, base_expected).pvalue < 1e-6
        assert time.time() - start < 300.0

    _report(4, "SMC empirical distribution matches the brute-force target", check)


def test_criterion_05_nis_alpha_limit():
    def check():
        rng = np.random.default_rng(55)
        grid = np.arange(1000) / 1000.0
        agreements = 0
        for _ in range(10_000):
            # a 1e-3 grid without replacement leaves no ties within 1e-9,
            # so no vectors are excluded
            scores = rng.choice(grid, size=6, replace=False)
            assert np.diff(np.sort(scores)).min() > 1e-9
            tiny = nis_select(scores, 1e-6, rng)
            zero = nis_select(scores, 0.0, rng)
            agreements += tiny == zero
        assert agreements == 10_000

    _report(5, "selection at alpha=1e-6 equals the alpha=0 argmax on 1e4 vectors", check)


def test_criterion_06_injection_direction():
    def check():
        from lookum.bench import injection_study

        spec = TaskSpec("arithmetic", 500, seed=61)
        study = injection_study(generate_task(spec), 2, seed=62)
        assert study["pairs"] >= 500
        assert study["error"]["entropy"] > study["correct"]["entropy"]
        assert study["error"]["confidence"] < study["correct"]["confidence"]
        assert study["p_entropy_increase"] < 1e-3
        assert study["p_confidence_drop"] < 1e-3
        # per-operation direction (reference direction: errors raise entropy
        # and lower confidence for subtraction, addition, multiplication)
        for stats in study["by_operator"].values():
            assert stats["entropy_error"] > stats["entropy_correct"]
            assert stats["confidence_error"] < stats["confidence_correct"]

    _report(6, "injected errors raise entropy and lower confidence (p<0.001)", check)


def test_criterion_07_local_error_reduction():
    def check():
        cfg = _config(ADVERSARIAL)
        greedy = run_bench(replace(cfg, strategy="baseline"))
        lookum = run_bench(cfg)
        assert (
            lookum.aggregates["local_error_rate"]
            < greedy.aggregates["local_error_rate"]
        )
        diffs = [
            g["local_errors"] - l["local_errors"]
            for g, l in zip(greedy.records, lookum.records)
        ]
        assert sign_test_greater(diffs) < 0.05

    _report(7, "default lookahead beats greedy confidence on local errors", check)


def test_criterion_08_scaling_shape():
    def check():
        cfg = _config(ADVERSARIAL)
        reports = sweep_paths(cfg, [1, 2, 4, 8, 16])
        acc = {r.extras["k"]: r.aggregates["accuracy"] for r in reports}
        assert acc[1] <= acc[2] <= acc[4]
        assert acc[2] > acc[1]  # the climb is real, not flat
        # no statistically significant drop from k=4 to k=16
        by_k = {r.extras["k"]: r.records for r in reports}
        drops = [
            int(a["exact_match"]) - int(b["exact_match"])
            for a, b in zip(by_k[4], by_k[16])
        ]
        assert sign_test_greater(drops) >= 0.05

    _report(8, "accuracy is monotone up to k=4 with no significant drop at k=16", check)


def test_criterion_09_backend_call_complexity():
    def check():
        spec = TaskSpec("mini_sudoku", 10, seed=91)
        for i, inst in enumerate(generate_task(spec)):
            backend = OracleBackend(inst.vocab, inst.model_support)
            for k in (1, 2, 3, 5):
                result = decode_lookum(
                    backend,
                    inst.prompt_state,
                    BudgetSchedule("constant", 2),
                    scheme=SelectionScheme("nis", alpha=0.1, k=k),
                    rng=i,
                )
                assert result.backend_calls == len(result.steps) * (k + 1)

    _report(9, "backend calls per decode equal steps * (k + 1 initial predict)", check)


def test_criterion_10_bench_determinism(tmp_path):
    def check():
        overrides = [
            "task.instance_count=40",
            "task.params.operand_lo=2",
            "task.params.operand_hi=9",
            "task.params.adversarial=true",
            "schedule.tokens_per_step=1",
            "seed=101",
        ]
        outcomes = {}
        for label, extra in {
            "w1": ["workers=1"],
            "w2": ["workers=2"],
            "w1_repeat": ["workers=1"],
        }.items():
            out = tmp_path / label
            assert run("bench", None, overrides + extra, out=str(out), quiet=True) == EXIT_OK
            report = RunReport.load(str(out / "bench.json"))
            outcomes[label] = report.comparable()
            del outcomes[label]["config"]["workers"]
        assert outcomes["w1"] == outcomes["w2"] == outcomes["w1_repeat"]

    _report(10, "bench reports are identical across repeats and worker counts", check)
