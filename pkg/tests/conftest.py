"""Shared fixtures: the published conversation-instance example, a random
markup generator, and the string-rewrite oracle the parser is checked
against. The oracle deliberately knows nothing about the parser: it works
by innermost rewriting of the raw token list."""

from __future__ import annotations

import random

import pytest

from convclean.model import Category, Conversation, LabelSet, build_conversation

CURLY_OPENERS = ("{", "{D", "{E", "{F")

# --- acceptance criterion reporting ------------------------------------------

# One PASS/FAIL line per acceptance criterion, echoed in the terminal
# summary (output capture would otherwise swallow mid-test prints).
ACCEPTANCE_LINES: list[str] = []


def acceptance_report(name: str, ok: bool) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}: {name}")
    assert ok, name


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- string-rewrite oracle ---------------------------------------------------


def oracle_clean(raw: str) -> list[str]:
    """Independent reference for disfluency removal: drop every curly group,
    then repeatedly rewrite the innermost '[ x + y ]' to 'y'."""
    toks = raw.split()
    while True:
        closer = next((j for j, t in enumerate(toks) if t == "}"), None)
        if closer is None:
            break
        opener = max(k for k in range(closer) if toks[k] in CURLY_OPENERS)
        toks = toks[:opener] + toks[closer + 1 :]
    while "]" in toks:
        closer = toks.index("]")
        opener = max(k for k in range(closer) if toks[k] == "[")
        seg = toks[opener + 1 : closer]
        plus = seg.index("+")
        toks = toks[:opener] + seg[plus + 1 :] + toks[closer + 1 :]
    return toks


# --- random markup generator -------------------------------------------------

VOCAB = ["i", "you", "we", "well", "right", "think", "said", "uh", "going", "to",
         "the", "a", "dog", "house", "really", "yes", "no", "maybe", "talk", "it's"]


def gen_markup(rng: random.Random, depth: int = 4, length: int = 8) -> str:
    return " ".join(_gen_seq(rng, depth, length))


def _gen_seq(rng: random.Random, depth: int, length: int) -> list[str]:
    out: list[str] = []
    for _ in range(rng.randint(1, length)):
        roll = rng.random()
        if roll < 0.55 or depth == 0:
            out.append(rng.choice(VOCAB))
        elif roll < 0.85:
            out.extend(_gen_edited(rng, depth - 1))
        else:
            out.extend(_gen_curly(rng, depth - 1))
    return out


def _gen_edited(rng: random.Random, depth: int) -> list[str]:
    rep = _gen_seq(rng, depth, 3) if rng.random() < 0.9 else []
    out = ["[", *rep, "+"]
    for _ in range(rng.randint(0, 2)):
        out.extend(_gen_curly(rng, depth))
    if rng.random() < 0.85:
        out.extend(_gen_seq(rng, depth, 3))
    out.append("]")
    return out


def _gen_curly(rng: random.Random, depth: int) -> list[str]:
    opener = rng.choice(CURLY_OPENERS)
    if depth > 0 and rng.random() < 0.15:
        inner = _gen_edited(rng, depth - 1)
    else:
        inner = [rng.choice(VOCAB) for _ in range(rng.randint(1, 3))]
    return [opener, *inner, "}"]


# --- published conversation-instance fixture ---------------------------------

_TABLE_TURNS = [
    ("A", [["I", "guess", "both", "of", "us", "are", "very", "much", "aware", "of",
            "the", "equality."],
           ["it", "seems", "like", "women", "are,", "just", "starting", "to", "get",
            "kind", "of", "equality", "in", "jobs", "and", "the", "home", "where",
            "husbands", "are", "starting", "to", "doing", "dishes,", "or", "some"]]),
    ("B", [["I", "think", "that's", "changed", "just", "in", "the", "last",
            "generation."]]),
    ("A", [["Exactly."]]),
    ("B", [["Just", "in", "the", "last", "little", "while."],
           ["Because", "I", "know", "my", "father-in-law", "doesn't", "do", "that",
            "much,"]]),
    ("A", [["Exactly."]]),
    ("B", [["of", "dishes,", "taking", "care", "of", "kids,", "or", "what", "else,",
            "you", "know,", "that", "kind", "of", "stuff", "but", "my", "husband",
            "is", "wonderful."]]),
    ("A", [["that's", "the", "way", "my", "husband", "is", "too."],
           ["it", "doesn't", "bother", "him", "to", "do", "the", "dishes,", "it",
            "doesn't", "bother", "him", "to", "do", "the", "laundry", "verses,",
            "men", "from", "way", "back,", "there", "is", "that,", "if", "you",
            "did", "that", "you", "were", "henpecked."]]),
]

# highlighted spans: (turn, first position, word count, category)
_TABLE_SPANS = [
    (0, 36, 2, Category.INCOMPLETE_SENTENCES),          # "or some"
    (2, 0, 1, Category.ACKNOWLEDGMENT_CONFIRMATION),    # "Exactly."
    (3, 0, 6, Category.REPETITION_PARAPHRASE),          # "Just in the last little while."
    (4, 0, 1, Category.ACKNOWLEDGMENT_CONFIRMATION),    # "Exactly."
    (5, 6, 5, Category.THINK_ALOUD),                    # "or what else, you know,"
    (6, 15, 6, Category.REPETITION_PARAPHRASE),         # second "it doesn't bother him to do"
    (6, 28, 3, Category.OTHERS),                        # "there is that,"
]


def make_instance_conversation(conv_id: str = "instance") -> Conversation:
    return build_conversation(conv_id, _TABLE_TURNS)


def make_instance_gold(conv_id: str = "instance") -> LabelSet:
    conv = make_instance_conversation(conv_id)
    by_pos = {(t.turn_index, t.position): t.id for t in conv.tokens()}
    removals = {}
    for turn, start, count, cat in _TABLE_SPANS:
        for p in range(start, start + count):
            removals[by_pos[(turn, p)]] = cat
    return LabelSet(conv_id, "gold", removals)


@pytest.fixture
def instance_conversation() -> Conversation:
    return make_instance_conversation()


@pytest.fixture
def instance_gold() -> LabelSet:
    return make_instance_gold()
