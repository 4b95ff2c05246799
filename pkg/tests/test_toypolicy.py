import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainrank.exceptions import InvalidInputError, NonFiniteLossError
from chainrank.rankloss import LossConfig, Objective
from chainrank.toypolicy import (
    AdamW,
    ChainRanker,
    LossTrace,
    SynthExample,
    ToyPolicy,
    TrainConfig,
    load_dataset,
    load_policy,
    make_synth_dataset,
    rank_chain,
    save_dataset,
    save_policy,
    score_gradient,
    score_sequence,
    split_dataset,
    train,
)
from chainrank.toypolicy.policy import batch_forward

from oracles import central_fd, rel_err, sequence_logprob_loop


def small_policy(V=6, d=3, seed=0, scale=0.8):
    return ToyPolicy.random(V, d, np.random.default_rng(seed), scale)


class TestScoreSequence:
    def test_zero_policy_is_uniform(self):
        p = ToyPolicy.zeros(7, 3)
        total, per = score_sequence(p, np.ones(3), [1, 2, 3, 4])
        assert total == pytest.approx(-4 * math.log(7), abs=1e-12)
        assert per.sum() == pytest.approx(total, abs=1e-12)

    def test_two_token_vocab(self):
        p = ToyPolicy(2, 1, np.zeros((2, 1)), np.zeros((2, 2)), np.array([0.0, math.log(3)]))
        assert score_sequence(p, [0.0], [0])[0] == pytest.approx(math.log(0.25), abs=1e-12)
        assert score_sequence(p, [0.0], [1])[0] == pytest.approx(math.log(0.75), abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        p = small_policy()
        for _ in range(20):
            ctx, toks = rng.normal(size=3), rng.integers(6, size=rng.integers(1, 9))
            total, per = score_sequence(p, ctx, toks)
            o_total, o_per = sequence_logprob_loop(p, ctx, toks)
            assert total == pytest.approx(o_total, abs=1e-12)
            np.testing.assert_allclose(per, o_per, atol=1e-12)

    def test_probabilities_normalize(self):
        p = small_policy()
        ctx = np.array([0.3, -1.0, 2.0])
        for prev in range(6):
            logits = p.step_logits(ctx, prev)
            assert abs(np.exp(logits - logits.max()).sum() / np.exp(logits - logits.max()).sum() - 1) < 1e-12
            lp = [score_sequence(p, ctx, [prev, t])[1][1] for t in range(6)]
            assert abs(np.exp(lp).sum() - 1.0) < 1e-9

    def test_batch_membership_invariance(self):
        p = small_policy()
        rng = np.random.default_rng(2)
        ctx = rng.normal(size=(4, 3))
        toks = rng.integers(6, size=(4, 3, 5))
        tlp, _ = batch_forward(p, ctx, toks)
        for b in range(4):
            for k in range(3):
                alone = score_sequence(p, ctx[b], toks[b, k])[0]
                assert abs(alone - tlp[b, k].sum()) < 1e-12

    @pytest.mark.parametrize("tokens", [[0, 6], [-1], []])
    def test_bad_tokens(self, tokens):
        with pytest.raises(InvalidInputError):
            score_sequence(small_policy(), np.zeros(3), tokens)

    def test_bad_context(self):
        with pytest.raises(InvalidInputError):
            score_sequence(small_policy(), np.zeros(4), [1])


class TestScoreGradient:
    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            V, d, L = int(rng.integers(2, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
            p = small_policy(V, d, seed=int(rng.integers(1000)))
            ctx, toks = rng.normal(size=d), rng.integers(V, size=L)
            analytic = score_gradient(p, ctx, toks).flat()
            numeric = central_fd(lambda flat: score_sequence(p.with_flat_params(flat), ctx, toks)[0], p.flat_params())
            assert np.max(rel_err(analytic, numeric)) < 1e-5

    def test_bias_gradient_is_onehot_minus_softmax(self):
        p = small_policy()
        ctx = np.array([0.1, 0.2, -0.5])
        toks = [3, 1]
        expected = np.zeros(6)
        prev = 0
        for t in toks:
            logits = p.step_logits(ctx, prev)
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            expected += np.eye(6)[t] - probs
            prev = t
        np.testing.assert_allclose(score_gradient(p, ctx, toks).bias, expected, atol=1e-12)

    def test_saturated_policy_has_vanishing_gradient(self):
        V = 4
        bigram = np.full((V, V), -60.0)
        bigram[0, 2] = bigram[2, 3] = 60.0
        p = ToyPolicy(V, 1, np.zeros((V, 1)), bigram, np.zeros(V))
        g = score_gradient(p, [0.0], [2, 3])
        assert np.max(np.abs(g.flat())) < 1e-40


class TestRankChain:
    def test_identical_sequences(self):
        assert rank_chain(small_policy(), np.zeros(3), [[1, 2]] * 4) == [0, 1, 2, 3]

    def test_uniform_policy_identity(self):
        assert rank_chain(ToyPolicy.zeros(6, 3), np.ones(3), [[1, 2], [3, 4], [5, 0]]) == [0, 1, 2]

    def test_higher_first(self):
        p = ToyPolicy(3, 1, np.zeros((3, 1)), np.zeros((3, 3)), np.array([0.0, 0.0, 5.0]))
        assert rank_chain(p, [0.0], [[1], [2]]) == [1, 0]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 10**6))
    def test_is_permutation(self, n, seed):
        rng = np.random.default_rng(seed)
        p = small_policy(seed=seed % 7)
        chain = rng.integers(6, size=(n, 4))
        assert sorted(rank_chain(p, rng.normal(size=3), chain)) == list(range(n))

    def test_needs_two(self):
        with pytest.raises(InvalidInputError):
            rank_chain(small_policy(), np.zeros(3), [[1]])


class TestSynthData:
    def test_arity_and_counts(self):
        data = make_synth_dataset(5, chain_len=3, seed=1)
        for ex in data:
            assert ex.chain_size == 4
            assert ex.corruption_counts == [0, 1, 2, 3]

    def test_corruption_invariants(self):
        for ex in make_synth_dataset(30, chain_len=4, seed=2):
            clean = ex.chain_tokens[0]
            prev = set()
            for k, seq in enumerate(ex.chain_tokens):
                diff = set(np.flatnonzero(seq != clean).tolist())
                assert len(diff) == ex.corruption_counts[k] == k
                assert diff == set(ex.corrupted_positions[k])
                assert prev <= diff
                prev = diff
                assert len(seq) == len(clean)

    def test_independent_single_errors(self):
        for ex in make_synth_dataset(20, chain_len=4, seed=2, structure="single"):
            assert ex.corruption_counts == [0, 1, 1, 1, 1]
            for seq in ex.chain_tokens[1:]:
                assert np.count_nonzero(seq != ex.chain_tokens[0]) == 1

    def test_fresh_positions(self):
        for ex in make_synth_dataset(20, chain_len=4, seed=2, structure="fresh"):
            for k, seq in enumerate(ex.chain_tokens):
                assert np.count_nonzero(seq != ex.chain_tokens[0]) == k

    def test_deterministic(self, tmp_path):
        a = make_synth_dataset(10, seed=7)
        b = make_synth_dataset(10, seed=7)
        save_dataset(tmp_path / "a.jsonl", a)
        save_dataset(tmp_path / "b.jsonl", b)
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_round_trip(self, tmp_path):
        a = make_synth_dataset(6, seed=9)
        save_dataset(tmp_path / "d.jsonl", a)
        b = load_dataset(tmp_path / "d.jsonl")
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.context, y.context)
            for s, t in zip(x.chain_tokens, y.chain_tokens):
                np.testing.assert_array_equal(s, t)
            assert x.corruption_counts == y.corruption_counts

    def test_chain_longer_than_sequence(self):
        with pytest.raises(InvalidInputError):
            make_synth_dataset(1, seq_len=3, chain_len=4)

    def test_split(self):
        tr, ho = split_dataset(list(range(10)), 0.2)
        assert tr == list(range(8)) and ho == [8, 9]

    def test_truncate(self):
        ex = make_synth_dataset(1, chain_len=4, seed=0)[0]
        t = ex.truncated(3)
        assert t.chain_size == 3 and t.corruption_counts == [0, 1, 2]
        with pytest.raises(InvalidInputError):
            ex.truncated(6)


class TestAdamW:
    def test_matches_reference_formula(self):
        p = {"w": np.array([1.0, -2.0])}
        opt = AdamW(p, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01)
        g = np.array([0.5, -0.25])
        opt.step({"w": g})
        # first step: m_hat = g, v_hat = g^2, so the update is sign(g) up to eps
        expected = np.array([1.0, -2.0]) - 0.1 * (g / (np.abs(g) + 1e-8) + 0.01 * np.array([1.0, -2.0]))
        np.testing.assert_allclose(p["w"], expected, rtol=1e-12)

    def test_zero_lr_no_change(self):
        p = {"w": np.array([1.0, 2.0])}
        AdamW(p, lr=0.0).step({"w": np.array([3.0, 4.0])})
        np.testing.assert_array_equal(p["w"], [1.0, 2.0])


@pytest.fixture(scope="module")
def tiny_data():
    return make_synth_dataset(40, vocab_size=12, ctx_dim=4, seq_len=8, chain_len=3, seed=5)


class TestTrain:
    def test_step0_is_log_factorial(self, tiny_data):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        _, trace = train(p, tiny_data, LossConfig(Objective.PL_DPO, 0.3, 0.1), TrainConfig(steps=3))
        assert trace.chain_loss[0] == pytest.approx(math.log(24), abs=1e-9)

    def test_zero_lr_is_flat(self, tiny_data):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        trained, trace = train(p, tiny_data, LossConfig(), TrainConfig(learning_rate=0.0, steps=5, batch_size=40))
        np.testing.assert_array_equal(trained.flat_params(), p.flat_params())
        assert np.ptp(trace.total) < 1e-12

    def test_deterministic(self, tiny_data, tmp_path):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        runs = [train(p, tiny_data, LossConfig(), TrainConfig(steps=20, seed=3)) for _ in range(2)]
        np.testing.assert_array_equal(runs[0][0].flat_params(), runs[1][0].flat_params())
        runs[0][1].to_csv(tmp_path / "a.csv")
        runs[1][1].to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_does_not_mutate_input_policy(self, tiny_data):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        before = p.flat_params().copy()
        train(p, tiny_data, LossConfig(), TrainConfig(steps=5))
        np.testing.assert_array_equal(p.flat_params(), before)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_aborts(self, tiny_data):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        with pytest.raises(NonFiniteLossError) as info:
            train(p, tiny_data, LossConfig(), TrainConfig(learning_rate=1e308, steps=5))
        assert info.value.step is not None

    @pytest.mark.parametrize("objective", list(Objective))
    def test_every_objective_lowers_the_loss(self, tiny_data, objective):
        p = ToyPolicy.random(12, 4, np.random.default_rng(0), 0.01)
        _, trace = train(p, tiny_data, LossConfig(objective, 0.3, 0.0), TrainConfig(steps=150, batch_size=40))
        assert trace.chain_loss[-1] < trace.chain_loss[0]

    def test_trace_csv_round_trip(self, tmp_path):
        t = LossTrace()
        t.append(0, 1.5, 0.25, 1.525)
        t.append(1, 0.1 + 0.2, 1e-17, 3.0)
        t.to_csv(tmp_path / "t.csv")
        back = LossTrace.from_csv(tmp_path / "t.csv")
        assert back.chain_loss == t.chain_loss and back.total == t.total

    @pytest.mark.parametrize("kw", [{"steps": 0}, {"batch_size": 0}, {"learning_rate": -1.0}])
    def test_config_validation(self, kw):
        with pytest.raises(InvalidInputError):
            TrainConfig(**kw)


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path):
        p = small_policy(seed=3)
        save_policy(tmp_path / "p.ckpt", p, {"note": "x"})
        q = load_policy(tmp_path / "p.ckpt")
        np.testing.assert_array_equal(p.flat_params(), q.flat_params())
        assert (q.vocab_size, q.ctx_dim) == (6, 3)

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x").write_text("hello\n{}")
        with pytest.raises(InvalidInputError):
            load_policy(tmp_path / "x")


class TestChainRanker:
    def test_get_params_round_trip(self):
        r = ChainRanker(objective="MPO", beta=0.5)
        assert r.get_params()["objective"] == "MPO"
        assert ChainRanker(**r.get_params()).get_params() == r.get_params()

    def test_fit_predict_score(self, tiny_data):
        r = ChainRanker(steps=60, ntp_weight=0.0, random_state=1).fit(tiny_data[:30])
        orders = r.predict(tiny_data[30:])
        assert all(sorted(o) == [0, 1, 2, 3] for o in orders)
        assert 0.0 <= r.score(tiny_data[30:]) <= 1.0
        assert r.n_features_in_ == 4
        assert r.score(tiny_data[30:]) > ChainRanker(steps=1, learning_rate=0.0).fit(tiny_data[:30]).score(tiny_data[30:])

    def test_unfitted(self, tiny_data):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            ChainRanker().predict(tiny_data)

    def test_rejects_non_examples(self):
        with pytest.raises(InvalidInputError):
            ChainRanker().fit([1, 2, 3])
        with pytest.raises(InvalidInputError):
            ChainRanker().fit([])

    def test_single_example_rejected(self, tiny_data):
        with pytest.raises(InvalidInputError):
            ChainRanker().fit(tiny_data[0])

    def test_ragged_chain_scores(self):
        from chainrank.toypolicy import chain_scores

        p = small_policy()
        ex = SynthExample(np.zeros(3), [np.array([1, 2, 3]), np.array([1, 2])], [0, 1])
        s = chain_scores(p, [ex])[0]
        assert s[1] == pytest.approx(score_sequence(p, np.zeros(3), [1, 2])[0], abs=1e-12)


class TestMarginGrowth:
    def test_margin_non_decreasing_over_window(self):
        # rank-0 minus rank-last log-prob margin, averaged over the training set,
        # compared at the start and end of a 200-step window for 10 seeds
        ok = 0
        for seed in range(10):
            data = make_synth_dataset(80, vocab_size=12, ctx_dim=4, seq_len=8, chain_len=3, seed=seed)
            p = ToyPolicy.random(12, 4, np.random.default_rng(seed + 1000), 0.01)
            margins = {}

            def record(step, policy):
                if step in (0, 200):
                    tlp, _ = batch_forward(
                        policy,
                        np.stack([e.context for e in data]),
                        np.stack([np.stack(e.chain_tokens) for e in data]),
                    )
                    seq = tlp.sum(-1)
                    margins[step] = float(np.mean(seq[:, 0] - seq[:, -1]))

            train(p, data, LossConfig(Objective.PL_DPO, 0.3, 0.1), TrainConfig(steps=200, seed=seed), callback=record)
            ok += margins[200] >= margins[0]
        assert ok >= 9
