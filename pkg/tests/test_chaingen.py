import json
from collections import Counter

import numpy as np
import pytest

from chainrank.chaingen import (
    CaptionChain,
    CaptionSource,
    ErrorType,
    GenerationConfig,
    Mutation,
    Rejection,
    SeedRecord,
    Step,
    applicable_errors,
    audit_chain,
    chain_rng,
    default_taxonomy,
    generate_chain,
    generate_chains,
    generate_independent_negatives,
    load_taxonomy,
    mutate_caption,
    read_chains,
    recaption_seed,
    sample_error,
    save_taxonomy,
    write_chains,
)
from chainrank.exceptions import InvalidInputError, NoApplicableErrorError, ParseError, TransportError
from chainrank.llmgateway import BackendConfig, LLMClient, mock_script
from chainrank.llmgateway.mock import Fail

SEED = "A snowmobile on a winter day navigates harsh winter environments, then two riders stop near a red cabin."


def client(*behaviors, **cfg):
    return LLMClient(BackendConfig(**cfg), mock_script(behaviors or ["faithful"]), sleep=lambda s: None)


def tax(id_):
    return next(t for t in default_taxonomy() if t.id == id_)


class TestTaxonomy:
    def test_default(self):
        ids = [t.id for t in default_taxonomy()]
        assert len(ids) == 8 and len(set(ids)) == 8
        assert "attribute_change" in ids

    def test_simple_caption(self):
        ids = {t.id for t in applicable_errors("A dog runs.")}
        assert "count_change" not in ids and "temporal_order_swap" not in ids

    def test_rich_caption(self):
        ids = {t.id for t in applicable_errors("Two cats sit on the mat, then one leaves.")}
        assert {"count_change", "spatial_relation_change", "temporal_order_swap"} <= ids

    def test_two_sentences_are_temporal(self):
        assert "temporal_order_swap" in {t.id for t in applicable_errors("A dog barks. A cat flees.")}

    def test_subset_of_taxonomy(self):
        full = default_taxonomy()
        for cap in ["x", SEED, "Three men walk behind a bus while it rains."]:
            assert set(applicable_errors(cap, full)) <= set(full)

    def test_empty_caption(self):
        with pytest.raises(InvalidInputError):
            applicable_errors("   ")

    def test_unknown_rule(self):
        with pytest.raises(InvalidInputError):
            ErrorType("x", "d", ["has_magic"])

    def test_file_round_trip(self, tmp_path):
        save_taxonomy(tmp_path / "t.json", default_taxonomy())
        assert load_taxonomy(tmp_path / "t.json") == default_taxonomy()

    def test_duplicate_ids_rejected(self, tmp_path):
        (tmp_path / "t.json").write_text(json.dumps([{"id": "a"}, {"id": "a"}]))
        with pytest.raises(InvalidInputError):
            load_taxonomy(tmp_path / "t.json")


class TestSampleError:
    def test_singleton(self):
        t = tax("action_change")
        assert sample_error([t], np.random.default_rng(0)) is t

    def test_uniform_frequencies(self):
        types = default_taxonomy()[:4]
        rng = np.random.default_rng(123)
        counts = Counter(sample_error(types, rng).id for _ in range(10_000))
        for t in types:
            assert abs(counts[t.id] / 10_000 - 0.25) < 0.05

    def test_zero_weight_never_drawn(self):
        types = default_taxonomy()[:3]
        rng = np.random.default_rng(0)
        drawn = {sample_error(types, rng, {types[0].id: 0.0}).id for _ in range(500)}
        assert types[0].id not in drawn

    def test_empty(self):
        with pytest.raises(NoApplicableErrorError):
            sample_error([], np.random.default_rng(0))

    def test_deterministic(self):
        types = default_taxonomy()
        a = [sample_error(types, np.random.default_rng(9)).id for _ in range(3)]
        b = [sample_error(types, np.random.default_rng(9)).id for _ in range(3)]
        assert a == b


class TestMutateCaption:
    def test_winter_to_sunny(self):
        res = mutate_caption(CaptionChain("v", ["X on a winter day"]), tax("attribute_change"), None, client("mutate"))
        assert isinstance(res, Mutation)
        assert res.caption == "X on a sunny day"

    def test_reject_leaves_chain_alone(self):
        chain = CaptionChain("v", [SEED])
        res = mutate_caption(chain, tax("attribute_change"), None, client("reject"))
        assert isinstance(res, Rejection)
        assert chain.captions == [SEED] and chain.steps == []

    def test_output_differs(self):
        res = mutate_caption(CaptionChain("v", [SEED]), tax("subject_swap"), None, client())
        assert res.caption != SEED

    def test_unchanged_output_is_a_rejection(self):
        reply = json.dumps({"status": "ok", "caption": SEED, "summary": "x"})
        res = mutate_caption(CaptionChain("v", [SEED]), tax("subject_swap"), None, client(reply))
        assert isinstance(res, Rejection) and res.reason == "no-op mutation"

    @pytest.mark.parametrize("reply", ["not json", '{"status": "maybe"}', '{"status": "ok"}', "[1, 2]"])
    def test_malformed(self, reply):
        with pytest.raises(ParseError):
            mutate_caption(CaptionChain("v", [SEED]), tax("subject_swap"), None, client(reply))

    def test_missing_summary_is_derived(self):
        reply = json.dumps({"status": "ok", "caption": "X on a rainy day"})
        res = mutate_caption(CaptionChain("v", ["X on a winter day"]), tax("attribute_change"), None, client(reply))
        assert res.summary == "'winter' -> 'rainy'"

    def test_transport_failure(self):
        with pytest.raises(TransportError):
            mutate_caption(CaptionChain("v", [SEED]), tax("subject_swap"), None, client(Fail(503), max_retries=1))

    def test_prompt_carries_prior_summaries(self):
        c = client()
        chain = generate_chain(SEED, {"title": "t"}, 2, client=c, rng=np.random.default_rng(0))
        last = c.backend.calls[-1]
        assert chain.steps[0].summary in last.bindings["prior_changes"]
        assert last.bindings["video_meta"] == '{"title": "t"}'


class TestGenerateChain:
    @pytest.mark.parametrize("n", [3, 7])
    def test_length(self, n):
        chain = generate_chain(SEED, None, n, client=client(), rng=np.random.default_rng(1))
        assert len(chain.captions) == n + 1 and len(chain.steps) == n
        assert not chain.truncated

    def test_always_reject_truncates(self):
        c = client("reject")
        chain = generate_chain(SEED, None, 3, client=c, rng=np.random.default_rng(0))
        assert chain.captions == [SEED] and chain.truncated
        # first attempt plus 3 fresh resamples
        assert len(c.backend.calls) == 4
        assert sum(f.startswith("rejected:") for f in chain.flags) == 4

    def test_reject_then_mutate(self):
        c = client("reject", "mutate")
        chain = generate_chain(SEED, None, 2, client=c, rng=np.random.default_rng(0))
        assert len(chain.steps) == 2
        # steps + rejected attempts == backend calls
        rejected = [f for f in chain.flags if f.startswith("rejected:")]
        assert len(c.backend.calls) == len(chain.steps) + len(rejected)
        assert len(rejected) == 2

    def test_resample_uses_fresh_types(self):
        c = client("reject")
        chain = generate_chain(SEED, None, 1, client=c, rng=np.random.default_rng(0))
        tried = [f.split(":")[1].split("@")[0] for f in chain.flags if f.startswith("rejected:")]
        assert len(tried) == len(set(tried))

    def test_deterministic(self):
        a = generate_chain(SEED, None, 5, client=client(), rng=np.random.default_rng(3))
        b = generate_chain(SEED, None, 5, client=client(), rng=np.random.default_rng(3))
        assert a == b

    def test_steps_were_applicable(self):
        for seed in range(20):
            chain = generate_chain(SEED, None, 6, client=client(), rng=np.random.default_rng(seed))
            for k, step in enumerate(chain.steps):
                assert step.error_type in {t.id for t in applicable_errors(chain.captions[k])}

    def test_preconditions(self):
        with pytest.raises(InvalidInputError):
            generate_chain(SEED, None, 0, client=client())
        with pytest.raises(InvalidInputError):
            generate_chain("", None, 2, client=client())


class TestIndependentNegatives:
    def test_count(self):
        rec = generate_independent_negatives(SEED, None, 4, client=client(), rng=np.random.default_rng(0))
        assert rec.captions[0] == SEED
        assert len(rec.captions) == 5 and rec.independent
        assert all(c != SEED for c in rec.captions[1:])

    def test_each_has_a_single_edit(self):
        rec = generate_independent_negatives(SEED, None, 6, client=client(), rng=np.random.default_rng(2))
        for cap in rec.captions[1:]:
            diff = sum(a != b for a, b in zip(cap.split(), SEED.split()))
            assert diff == 1

    def test_prompts_have_no_prior_changes(self):
        c = client()
        generate_independent_negatives(SEED, None, 3, client=c, rng=np.random.default_rng(0))
        assert all(call.bindings["caption"] == SEED and call.bindings["prior_changes"] == "(none)" for call in c.backend.calls)


class TestRecaption:
    def test_concatenation(self):
        out = recaption_seed(["a man walks", "he waves."], None, client())
        assert out.text == "A man walks. He waves." and out.source is CaptionSource.RECAPTIONED

    def test_passthrough(self):
        long = "A woman in a red coat walks her dog through a snowy park at dusk."
        out = recaption_seed([long], None, client("never used"), passthrough=True, min_words=8)
        assert out.text == long and out.source is CaptionSource.GROUND_TRUTH

    def test_short_caption_is_recaptioned(self):
        out = recaption_seed(["a dog"], None, client(), passthrough=True, min_words=8)
        assert out.source is CaptionSource.RECAPTIONED

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            recaption_seed([], None, client())


class TestAudit:
    def test_generated_chain_passes(self):
        c = client()
        chain = generate_chain(SEED, None, 6, client=c, rng=np.random.default_rng(4))
        rep = audit_chain(chain, judge=c)
        assert rep.structural_pass and rep.order_pass and rep.reasons == []

    def test_no_op(self):
        chain = CaptionChain("v", ["A dog runs.", "A dog runs."], [Step("action_change", "'runs' -> 'runs'")])
        rep = audit_chain(chain)
        assert not rep.structural_pass and "no-op mutation" in rep.reasons
        assert rep.order_pass is None

    def test_inapplicable_step(self):
        chain = CaptionChain("v", ["A dog runs.", "Two dogs run."], [Step("count_change", "'A' -> 'Two'")])
        assert not audit_chain(chain).structural_pass

    def test_lost_edit(self):
        chain = CaptionChain(
            "v",
            ["A red car drives.", "A blue car drives.", "A red bus drives."],
            [Step("attribute_change", "'red' -> 'blue'"), Step("object_substitution", "'car' -> 'bus'")],
        )
        rep = audit_chain(chain)
        assert not rep.structural_pass
        assert any("lost" in r for r in rep.reasons)

    def test_judge_failure_is_unknown(self):
        chain = generate_chain(SEED, None, 2, client=client(), rng=np.random.default_rng(0))
        rep = audit_chain(chain, judge=client(Fail(500), max_retries=0))
        assert rep.structural_pass and rep.order_pass is None
        assert any("unavailable" in r for r in rep.reasons)

    def test_judge_says_no(self):
        chain = generate_chain(SEED, None, 2, client=client(), rng=np.random.default_rng(0))
        assert audit_chain(chain, judge=client("no")).order_pass is False

    def test_independent_record(self):
        c = client()
        rec = generate_independent_negatives(SEED, None, 4, client=c, rng=np.random.default_rng(0))
        rep = audit_chain(rec, judge=c)
        assert rep.structural_pass and rep.order_pass


class TestCaptionChain:
    def test_length_invariant(self):
        with pytest.raises(InvalidInputError):
            CaptionChain("v", ["a", "b"], [])
        with pytest.raises(InvalidInputError):
            CaptionChain("v", [])

    def test_cumulative_errors(self):
        chain = generate_chain(SEED, None, 4, client=client(), rng=np.random.default_rng(0))
        for k in range(len(chain.captions)):
            assert Counter(chain.errors_of(k)) == Counter(s.error_type for s in chain.steps[:k])

    def test_jsonl_round_trip(self, tmp_path):
        chains = [generate_chain(SEED, {"m": 1}, 3, client=client(), rng=np.random.default_rng(s), video_id=f"v{s}") for s in range(4)]
        write_chains(tmp_path / "c.jsonl", chains)
        assert read_chains(tmp_path / "c.jsonl") == chains
        rec = json.loads((tmp_path / "c.jsonl").read_text().splitlines()[0])
        assert set(rec) == {"video_id", "source", "captions", "steps", "flags"}

    def test_malformed_record(self, tmp_path):
        (tmp_path / "c.jsonl").write_text('{"captions": ["a"]}\n')
        with pytest.raises(InvalidInputError):
            read_chains(tmp_path / "c.jsonl")


class TestGenerateChains:
    def seeds(self, n=12):
        return [SeedRecord(f"vid{i}", (SEED if i % 2 else "A man walks a dog in the park near a red car.",), {"i": i}) for i in range(n)]

    def test_concurrency_does_not_change_output(self):
        a, _ = generate_chains(self.seeds(), 4, client(), seed=5, concurrency=1)
        b, _ = generate_chains(self.seeds(), 4, client(), seed=5, concurrency=6)
        assert a == b

    def test_per_chain_rng_ignores_order(self):
        seeds = self.seeds()
        a, _ = generate_chains(seeds, 3, client(), seed=5)
        b, _ = generate_chains(seeds[::-1], 3, client(), seed=5)
        assert a == b[::-1]

    def test_report_counts(self):
        chains, rep = generate_chains(self.seeds(), 3, client(), seed=1)
        r = rep.to_record()
        assert r["attempted"] == 12 and r["completed"] == 12
        assert r["total_steps"] == sum(len(c.steps) for c in chains) == 36

    def test_chain_rng_differs_by_video(self):
        assert chain_rng(0, "a").integers(1 << 30) != chain_rng(0, "b").integers(1 << 30)

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            GenerationConfig(max_resamples=-1)
