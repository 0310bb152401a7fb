"""Core data model: tokens, turns, conversations, cleanup labels, and config.

All values here are immutable after construction and safe to share across
threads. Token identity is positional: ``conv_id:turn_index:position``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence, TextIO


class Category(Enum):
    """The five discontinuity categories. Every removal carries exactly one."""

    ACKNOWLEDGMENT_CONFIRMATION = "AcknowledgmentConfirmation"
    REPETITION_PARAPHRASE = "RepetitionParaphrase"
    THINK_ALOUD = "ThinkAloud"
    INCOMPLETE_SENTENCES = "IncompleteSentences"
    OTHERS = "Others"

    @property
    def code(self) -> str:
        """Single-letter code used in the external detector protocol."""
        return _CATEGORY_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "Category":
        try:
            return _CODES_TO_CATEGORY[code]
        except KeyError:
            raise ValueError(f"unknown category code: {code!r}") from None


_CATEGORY_CODES = {
    Category.ACKNOWLEDGMENT_CONFIRMATION: "A",
    Category.REPETITION_PARAPHRASE: "R",
    Category.THINK_ALOUD: "T",
    Category.INCOMPLETE_SENTENCES: "I",
    Category.OTHERS: "O",
}
_CODES_TO_CATEGORY = {v: k for k, v in _CATEGORY_CODES.items()}

SPLITS = ("train", "dev", "test", "unsplit")


class ModelError(Exception):
    """Base error for data-model violations."""


class DanglingLabelError(ModelError):
    """A label references a conversation or token that does not exist."""

    def __init__(self, conv_id: str, detail: str = ""):
        self.conv_id = conv_id
        msg = f"label references unknown conversation {conv_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


def token_id(conv_id: str, turn_index: int, position: int) -> str:
    return f"{conv_id}:{turn_index}:{position}"


def parse_token_id(tid: str) -> tuple[str, int, int]:
    conv_id, turn, pos = tid.rsplit(":", 2)
    return conv_id, int(turn), int(pos)


@dataclass(frozen=True)
class Token:
    """One word of a transcript. ``position`` is dense within the turn."""

    id: str
    text: str
    turn_index: int
    position: int

    def __post_init__(self):
        if not self.text or any(c.isspace() for c in self.text):
            raise ModelError(f"token text must be non-empty, no whitespace: {self.text!r}")


@dataclass(frozen=True)
class Turn:
    """A speaker turn: ordered slash units, each an ordered tuple of tokens."""

    speaker: str
    slash_units: tuple[tuple[Token, ...], ...]

    def __post_init__(self):
        if not self.slash_units or any(not su for su in self.slash_units):
            raise ModelError("every turn needs >= 1 slash unit, each with >= 1 token")

    def tokens(self) -> Iterator[Token]:
        for su in self.slash_units:
            yield from su

    @property
    def token_count(self) -> int:
        return sum(len(su) for su in self.slash_units)


@dataclass(frozen=True)
class Conversation:
    conv_id: str
    turns: tuple[Turn, ...]
    split: str = "unsplit"

    def __post_init__(self):
        if not self.conv_id:
            raise ModelError("conv_id must be non-empty")
        if self.split not in SPLITS:
            raise ModelError(f"split must be one of {SPLITS}, got {self.split!r}")
        seen: set[str] = set()
        for ti, turn in enumerate(self.turns):
            pos = 0
            for tok in turn.tokens():
                if tok.turn_index != ti or tok.position != pos:
                    raise ModelError(
                        f"token {tok.id} at turn {ti} pos {pos} carries "
                        f"({tok.turn_index}, {tok.position}); positions must be dense"
                    )
                if tok.id in seen:
                    raise ModelError(f"duplicate token id {tok.id}")
                seen.add(tok.id)
                pos += 1

    def tokens(self) -> Iterator[Token]:
        for turn in self.turns:
            yield from turn.tokens()

    @property
    def token_count(self) -> int:
        return sum(t.token_count for t in self.turns)

    def token_ids(self) -> list[str]:
        return [t.id for t in self.tokens()]


def build_conversation(
    conv_id: str,
    turns: Sequence[tuple[str, Sequence[Sequence[str]]]],
    split: str = "unsplit",
) -> Conversation:
    """Assemble a Conversation from (speaker, [[word, ...], ...]) turns,
    assigning positional token ids."""
    built = []
    for ti, (speaker, slash_units) in enumerate(turns):
        pos = 0
        sus = []
        for su in slash_units:
            toks = []
            for word in su:
                toks.append(Token(token_id(conv_id, ti, pos), word, ti, pos))
                pos += 1
            sus.append(tuple(toks))
        built.append(Turn(speaker, tuple(sus)))
    return Conversation(conv_id, tuple(built), split)


@dataclass(frozen=True)
class LabelSet:
    """Per-token removal labels for one conversation.

    ``source`` is "gold", "worker:<id>", or "prediction:<id>".
    """

    conv_id: str
    source: str
    removals: Mapping[str, Category]

    def __post_init__(self):
        object.__setattr__(self, "removals", dict(self.removals))

    def validate_against(self, conv: Conversation) -> None:
        if conv.conv_id != self.conv_id:
            raise DanglingLabelError(self.conv_id, f"conversation is {conv.conv_id!r}")
        known = set(conv.token_ids())
        missing = set(self.removals) - known
        if missing:
            raise DanglingLabelError(
                self.conv_id, f"unknown token ids: {sorted(missing)[:5]}"
            )

    def removed_ids(self) -> set[str]:
        return set(self.removals)


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable constants shared across chunking, quality gating, and inference."""

    chunk_target_tokens: int = 300
    chunk_overlap_fraction: float = 0.5
    qualification_threshold: float = 0.3
    std_max_seq: int = 64
    mtd_max_seq: int = 512
    min_annotations_per_hit: int = 2
    turn_aligned_chunks: bool = True
    keep_uncertain_words: bool = False

    def __post_init__(self):
        if self.chunk_target_tokens <= 0 or self.std_max_seq <= 0 or self.mtd_max_seq <= 0:
            raise ModelError("token counts must be positive")
        if self.min_annotations_per_hit <= 0:
            raise ModelError("min_annotations_per_hit must be positive")
        if not (0.0 < self.chunk_overlap_fraction < 1.0):
            raise ModelError("chunk_overlap_fraction must lie in (0, 1)")
        if not (0.0 <= self.qualification_threshold <= 1.0):
            raise ModelError("qualification_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class StatsReport:
    """Corpus statistics in the shape of the dataset summary tables."""

    conversations: int
    turns: int
    tokens: int
    cleanup_tokens: int
    category_counts: Mapping[str, int]
    category_percentages: Mapping[str, float]
    per_split: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __add__(self, other: "StatsReport") -> "StatsReport":
        counts = dict(self.category_counts)
        for k, v in other.category_counts.items():
            counts[k] = counts.get(k, 0) + v
        per_split: dict[str, dict[str, int]] = {}
        for src in (self.per_split, other.per_split):
            for split, row in src.items():
                acc = per_split.setdefault(split, {})
                for k, v in row.items():
                    acc[k] = acc.get(k, 0) + v
        return _finish_stats(
            self.conversations + other.conversations,
            self.turns + other.turns,
            self.tokens + other.tokens,
            self.cleanup_tokens + other.cleanup_tokens,
            counts,
            per_split,
        )


def _finish_stats(convs, turns, tokens, cleanup, counts, per_split) -> StatsReport:
    total = sum(counts.values())
    pct = {
        k: (100.0 * v / total if total else 0.0) for k, v in sorted(counts.items())
    }
    return StatsReport(convs, turns, tokens, cleanup, dict(sorted(counts.items())), pct, per_split)


def dataset_stats(
    convs: Iterable[Conversation], labels: Iterable[LabelSet] = ()
) -> StatsReport:
    """Count conversations, turns, tokens, and cleanup tokens, with per-category
    percentages. Raises DanglingLabelError for labels on unknown conversations."""
    by_id = {c.conv_id: c for c in convs}
    n_turns = sum(len(c.turns) for c in by_id.values())
    n_tokens = sum(c.token_count for c in by_id.values())
    per_split: dict[str, dict[str, int]] = {}
    for c in by_id.values():
        row = per_split.setdefault(c.split, {"conversations": 0, "turns": 0, "tokens": 0, "cleanup_tokens": 0})
        row["conversations"] += 1
        row["turns"] += len(c.turns)
        row["tokens"] += c.token_count

    counts: dict[str, int] = {}
    n_cleanup = 0
    for ls in labels:
        conv = by_id.get(ls.conv_id)
        if conv is None:
            raise DanglingLabelError(ls.conv_id)
        ls.validate_against(conv)
        n_cleanup += len(ls.removals)
        per_split[conv.split]["cleanup_tokens"] += len(ls.removals)
        for cat in ls.removals.values():
            counts[cat.value] = counts.get(cat.value, 0) + 1
    return _finish_stats(len(by_id), n_turns, n_tokens, n_cleanup, counts, per_split)


# --- serialization -----------------------------------------------------------
#
# Transcript file: one conversation per JSON line,
#   {"conv_id": ..., "split": ..., "turns": [{"speaker": ..., "slash_units": [[tok, ...], ...]}]}
# Label file: one JSON object per conversation,
#   {"conv_id": ..., "source": ..., "removals": [{"turn": t, "position": p, "category": name}]}


def conversation_to_obj(conv: Conversation) -> dict:
    return {
        "conv_id": conv.conv_id,
        "split": conv.split,
        "turns": [
            {
                "speaker": turn.speaker,
                "slash_units": [[tok.text for tok in su] for su in turn.slash_units],
            }
            for turn in conv.turns
        ],
    }


def conversation_from_obj(obj: dict) -> Conversation:
    return build_conversation(
        obj["conv_id"],
        [(t["speaker"], t["slash_units"]) for t in obj["turns"]],
        obj.get("split", "unsplit"),
    )


def labelset_to_obj(ls: LabelSet) -> dict:
    removals = []
    for tid in sorted(ls.removals, key=lambda t: parse_token_id(t)[1:]):
        _, turn, pos = parse_token_id(tid)
        removals.append({"turn": turn, "position": pos, "category": ls.removals[tid].value})
    return {"conv_id": ls.conv_id, "source": ls.source, "removals": removals}


def labelset_from_obj(obj: dict) -> LabelSet:
    removals = {
        token_id(obj["conv_id"], r["turn"], r["position"]): Category(r["category"])
        for r in obj["removals"]
    }
    return LabelSet(obj["conv_id"], obj["source"], removals)


def write_jsonl(objs: Iterable[dict], fp: TextIO) -> None:
    for obj in objs:
        fp.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_jsonl(fp: TextIO) -> Iterator[dict]:
    for line in fp:
        line = line.strip()
        if line:
            yield json.loads(line)


def write_conversations(convs: Iterable[Conversation], fp: TextIO) -> None:
    write_jsonl((conversation_to_obj(c) for c in convs), fp)


def read_conversations(fp: TextIO) -> list[Conversation]:
    return [conversation_from_obj(o) for o in read_jsonl(fp)]


def write_labels(labels: Iterable[LabelSet], fp: TextIO) -> None:
    write_jsonl((labelset_to_obj(ls) for ls in labels), fp)


def read_labels(fp: TextIO) -> list[LabelSet]:
    return [labelset_from_obj(o) for o in read_jsonl(fp)]
