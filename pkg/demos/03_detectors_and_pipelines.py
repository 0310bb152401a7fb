"""Walkthrough: detectors and the two cleanup pipelines.

A detector maps a chunk of tokens to one keep/remove label per token.
The pipelines compose detectors two ways: a two-stage flow (single-turn
detection, redact, then multi-turn detection over what survives) and a
combined single pass. This demo runs both with heuristics and with a
gold-replaying oracle on a small conversation.
"""

from convclean.detectors import NegativeDetector, OracleDetector, default_heuristic_bundle
from convclean.model import Category, LabelSet, PipelineConfig, build_conversation
from convclean.pipeline import evaluate, render_cleaned, run_combined, run_two_stage


def main() -> None:
    cfg = PipelineConfig()
    conv = build_conversation(
        "demo",
        [
            ("A", [["I", "think", "we", "should", "paint", "it", "blue"]]),
            ("B", [["Exactly."]]),
            ("A", [["I", "think", "we", "should", "start", "this", "weekend"]]),
            ("B", [["sounds", "good", "to", "me"]]),
        ],
    )
    gold = LabelSet(
        "demo",
        "gold",
        {
            "demo:1:0": Category.ACKNOWLEDGMENT_CONFIRMATION,  # "Exactly."
            "demo:2:0": Category.REPETITION_PARAPHRASE,  # "I think we should"
            "demo:2:1": Category.REPETITION_PARAPHRASE,
            "demo:2:2": Category.REPETITION_PARAPHRASE,
            "demo:2:3": Category.REPETITION_PARAPHRASE,
        },
    )
    universe = set(conv.token_ids())

    print("== heuristic bundle, combined pass ==")
    pred = run_combined(conv, default_heuristic_bundle(), cfg)
    for tid, cat in sorted(pred.removals.items()):
        print(f"  remove {tid} ({cat.value})")
    r = evaluate(pred, gold, universe)
    print(f"  P={r.precision:.2f} R={r.recall:.2f} F1={r.f1:.2f}")
    print("  cleaned text:")
    for line in render_cleaned(conv, pred).splitlines():
        print(f"    {line}")

    print("\n== oracle, two-stage vs combined ==")
    oracle = OracleDetector({"demo": gold})
    std_oracle = OracleDetector({"demo": gold}, scope="single_turn", max_seq=cfg.std_max_seq)
    two = run_two_stage(conv, std_oracle, oracle, cfg)
    one = run_combined(conv, oracle, cfg)
    print(f"  two-stage F1: {evaluate(two, gold, universe).f1:.2f}")
    print(f"  combined  F1: {evaluate(one, gold, universe).f1:.2f}")
    print(f"  identical label sets: {one.removed_ids() == two.removed_ids()}")

    print("\n== degenerate baseline ==")
    nothing = run_combined(conv, NegativeDetector(), cfg)
    r = evaluate(nothing, gold, universe)
    print(f"  all-keep detector: P={r.precision:.2f} R={r.recall:.2f} F1={r.f1:.2f}")


if __name__ == "__main__":
    main()
