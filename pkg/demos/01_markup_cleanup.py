"""Walkthrough: parsing transcriber markup and removing disfluencies.

Raw transcripts mark self-repairs as ``[ reparandum + {filler} repair ]``
plus an assortment of noise, prosody, and uncertainty markers. This demo
parses a few slash units, shows the tree the parser builds, and cleans
them down to plain speech.
"""

from convclean.markup import (
    clean_slash_unit,
    parse_markup,
    preprocess_conversation,
    RawConversation,
    RawTurn,
    UnbalancedBracket,
)

EXAMPLES = [
    "[ it's + { uh } it's ] almost",
    "[ I just + I ] enjoy working",
    "[ was it, + { I mean, } did you ] put",
    "[ By + ] it was attached",
    "<<laughter>> well {breathing} that's # fine /",
    "they had [ the, + the ] liquid ((medicine))",
    "[ [ a + b ] + c ] d",
]


def main() -> None:
    print("== parse tree for one self-repair ==")
    for node in parse_markup(EXAMPLES[0]):
        print(f"  {node!r}")

    print("\n== cleanup ==")
    for raw in EXAMPLES:
        tokens, trace = clean_slash_unit(raw)
        print(f"  {raw!r}")
        print(f"    -> {' '.join(tokens)!r}   ({len(trace.removed)} tokens/markers removed)")

    print("\n== whole-conversation preprocessing ==")
    raw_conv = RawConversation(
        "demo",
        (
            RawTurn("A", ("{F uh }",)),  # melts away entirely
            RawTurn("B", ("[ I just + I ] enjoy working", "really")),
        ),
    )
    conv, traces = preprocess_conversation(raw_conv)
    print(f"  {len(raw_conv.turns)} raw turns -> {len(conv.turns)} cleaned turns")
    for turn in conv.turns:
        print(f"  {turn.speaker}: {' '.join(t.text for t in turn.tokens())}")

    print("\n== errors carry positions ==")
    try:
        parse_markup("[ oops, no closer")
    except UnbalancedBracket as e:
        print(f"  UnbalancedBracket at char {e.position}: {e}")


if __name__ == "__main__":
    main()
