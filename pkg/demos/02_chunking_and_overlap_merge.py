"""Walkthrough: turn-aligned chunking with 50% overlap, and merging the
per-chunk labels back into one conversation-level answer.

Annotators (and bounded-context models) cannot look at a whole
conversation at once, so it is cut into ~300-token chunks that always
break on turn boundaries and overlap by half. Any token labeled removed
in *any* covering chunk stays removed after the merge.
"""

from convclean.chunking import TokenLabel, chunk_conversation, reassemble
from convclean.model import Category, PipelineConfig, build_conversation


def main() -> None:
    cfg = PipelineConfig()  # 300-token target, 50% overlap
    conv = build_conversation(
        "demo",
        [("AB"[i % 2], [[f"w{i}_{j}" for j in range(10)]]) for i in range(60)],
    )
    hits = chunk_conversation(conv, cfg)

    print(f"conversation: {len(conv.turns)} turns, {conv.token_count} tokens")
    print(f"chunked into {len(hits)} HITs:")
    for h in hits:
        print(
            f"  {h.hit_id}: turns [{h.turn_start}, {h.turn_end}) "
            f"tokens [{h.token_start}, {h.token_end})"
        )

    # two chunks disagree about a token in their shared overlap
    shared = conv.token_ids()[hits[1].token_start]
    per_hit = {h.hit_id: {} for h in hits}
    per_hit[hits[0].hit_id] = {shared: TokenLabel(True, Category.REPETITION_PARAPHRASE)}
    per_hit[hits[1].hit_id] = {shared: TokenLabel(False)}
    merged = reassemble(conv, hits, per_hit)
    print(f"\ntoken {shared}: chunk 0 says remove, chunk 1 says keep")
    print(f"OR-merge verdict: removed={merged[shared].removed} "
          f"category={merged[shared].category}")

    # inference mode: chunks that must *fit within* a model's budget
    small = chunk_conversation(conv, cfg, target=128, fit_within=True)
    print(f"\nfit-within-128 chunking for a bounded model: {len(small)} chunks, "
          f"largest {max(h.token_count for h in small)} tokens")


if __name__ == "__main__":
    main()
