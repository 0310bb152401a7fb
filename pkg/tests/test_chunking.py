import random

import pytest

from convclean.chunking import (
    Hit,
    TokenLabel,
    TurnTooLong,
    UncoveredToken,
    chunk_conversation,
    hit_from_obj,
    hit_to_obj,
    merged_removals,
    reassemble,
)
from convclean.model import Category, PipelineConfig, build_conversation

CFG = PipelineConfig()


def uniform_conv(n_turns, tokens_per_turn, conv_id="c"):
    return build_conversation(
        conv_id,
        [
            ("A" if i % 2 == 0 else "B", [[f"w{i}_{j}" for j in range(tokens_per_turn)]])
            for i in range(n_turns)
        ],
    )


def random_conv(rng, conv_id="c", max_tokens=5000):
    total = rng.randint(10, max_tokens)
    turns = []
    i = 0
    while total > 0:
        size = min(rng.randint(1, 40), total)
        turns.append(("AB"[i % 2], [[f"t{i}_{j}" for j in range(size)]]))
        total -= size
        i += 1
    return build_conversation(conv_id, turns)


class TestChunkConversation:
    def test_reference_layout(self):
        conv = uniform_conv(60, 10)
        hits = chunk_conversation(conv, CFG)
        assert [(h.turn_start, h.turn_end) for h in hits] == [(0, 30), (15, 45), (30, 60)]
        assert all(h.token_count == 300 for h in hits)

    def test_short_conversation_single_chunk(self):
        conv = uniform_conv(12, 10)
        hits = chunk_conversation(conv, CFG)
        assert len(hits) == 1
        assert hits[0].token_count == 120
        assert (hits[0].turn_start, hits[0].turn_end) == (0, 12)

    def test_turn_too_long(self):
        conv = build_conversation("c", [("A", [[f"w{j}" for j in range(301)]])])
        with pytest.raises(TurnTooLong):
            chunk_conversation(conv, CFG)

    def test_chunk_index_dense(self):
        conv = uniform_conv(100, 7)
        hits = chunk_conversation(conv, CFG)
        assert [h.chunk_index for h in hits] == list(range(len(hits)))

    def test_determinism(self):
        conv = random_conv(random.Random(3))
        assert chunk_conversation(conv, CFG) == chunk_conversation(conv, CFG)

    def test_overlap_ranges_consistent(self):
        conv = uniform_conv(60, 10)
        hits = chunk_conversation(conv, CFG)
        assert hits[0].overlap_right == (hits[1].token_start, hits[0].token_end)
        assert hits[1].overlap_left == (hits[1].token_start, hits[0].token_end)

    def test_coverage_random(self):
        rng = random.Random(11)
        for _ in range(25):
            conv = random_conv(rng, max_tokens=2000)
            hits = chunk_conversation(conv, CFG)
            covered = set()
            for h in hits:
                covered.update(range(h.token_start, h.token_end))
            assert covered == set(range(conv.token_count))

    def test_fit_within_mode_respects_budget(self):
        rng = random.Random(12)
        for _ in range(20):
            conv = random_conv(rng, max_tokens=1500)
            hits = chunk_conversation(conv, CFG, target=128, fit_within=True)
            assert all(h.token_count <= 128 for h in hits)
            covered = set()
            for h in hits:
                covered.update(range(h.token_start, h.token_end))
            assert covered == set(range(conv.token_count))

    def test_round_trip_manifest(self):
        conv = uniform_conv(60, 10)
        for hit in chunk_conversation(conv, CFG):
            assert hit_from_obj(hit_to_obj(hit)) == hit


class TestReassemble:
    def make(self):
        conv = uniform_conv(60, 10)
        hits = chunk_conversation(conv, CFG)
        return conv, hits

    def test_or_merge_truth_table(self):
        conv, hits = self.make()
        ids = conv.token_ids()
        # token covered by chunks 0 and 1
        shared = ids[hits[1].token_start]
        for a, b, expect in [(False, False, False), (True, False, True), (False, True, True), (True, True, True)]:
            labels = {
                hits[0].hit_id: {shared: TokenLabel(a)},
                hits[1].hit_id: {shared: TokenLabel(b)},
                hits[2].hit_id: {},
            }
            merged = reassemble(conv, hits, labels)
            assert merged[shared].removed is expect

    def test_category_tie_goes_to_earlier_chunk(self):
        conv, hits = self.make()
        shared = conv.token_ids()[hits[1].token_start]
        labels = {
            hits[0].hit_id: {shared: TokenLabel(True, Category.REPETITION_PARAPHRASE)},
            hits[1].hit_id: {shared: TokenLabel(True, Category.THINK_ALOUD)},
            hits[2].hit_id: {},
        }
        merged = reassemble(conv, hits, labels)
        assert merged[shared].category is Category.REPETITION_PARAPHRASE

    def test_gold_per_chunk_reassembles_to_gold(self):
        rng = random.Random(21)
        for _ in range(10):
            conv = random_conv(rng, max_tokens=1200)
            hits = chunk_conversation(conv, CFG)
            ids = conv.token_ids()
            gold = {tid for tid in ids if rng.random() < 0.2}
            per_hit = {}
            for h in hits:
                per_hit[h.hit_id] = {
                    tid: TokenLabel(tid in gold, Category.OTHERS if tid in gold else None)
                    for tid in h.token_ids(conv)
                }
            merged = reassemble(conv, hits, per_hit)
            assert {tid for tid, lbl in merged.items() if lbl.removed} == gold

    def test_gap_raises_uncovered(self):
        conv, hits = self.make()
        with pytest.raises(UncoveredToken):
            reassemble(conv, hits[:1], {hits[0].hit_id: {}})

    def test_merged_removals_helper(self):
        conv, hits = self.make()
        tid = conv.token_ids()[0]
        per_hit = {h.hit_id: {} for h in hits}
        per_hit[hits[0].hit_id] = {tid: TokenLabel(True, Category.OTHERS)}
        merged = reassemble(conv, hits, per_hit)
        assert merged_removals(merged) == {tid: Category.OTHERS}
