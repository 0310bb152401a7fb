"""Overlapping, turn-aligned chunking of conversations plus OR-merge.

Chunk boundaries never split a speaker turn. Each chunk grows to the
smallest turn-aligned token count >= the target (or to the end of the
conversation); the stride between chunk starts is the turn-aligned token
count closest to ``target * (1 - overlap_fraction)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .model import Category, Conversation, PipelineConfig


class ChunkingError(Exception):
    pass


class TurnTooLong(ChunkingError):
    def __init__(self, turn_index: int, token_count: int, target: int):
        self.turn_index = turn_index
        super().__init__(
            f"turn {turn_index} has {token_count} tokens, above the chunk target {target}"
        )


class UncoveredToken(ChunkingError):
    def __init__(self, token_id: str):
        self.token_id = token_id
        super().__init__(f"token {token_id} is not covered by any chunk")


@dataclass(frozen=True)
class Hit:
    """One annotation/inference chunk: a contiguous run of whole turns."""

    hit_id: str
    conv_id: str
    chunk_index: int
    turn_start: int  # inclusive
    turn_end: int  # exclusive
    token_start: int  # flat token index, inclusive
    token_end: int  # flat token index, exclusive
    overlap_left: tuple[int, int] = (0, 0)  # token-index range shared with previous chunk
    overlap_right: tuple[int, int] = (0, 0)  # shared with next chunk

    @property
    def token_count(self) -> int:
        return self.token_end - self.token_start

    def token_ids(self, conv: Conversation) -> list[str]:
        return conv.token_ids()[self.token_start : self.token_end]

    def turns(self, conv: Conversation):
        return conv.turns[self.turn_start : self.turn_end]


def _turn_prefix_sums(conv: Conversation) -> list[int]:
    sums = [0]
    for turn in conv.turns:
        sums.append(sums[-1] + turn.token_count)
    return sums


def chunk_conversation(
    conv: Conversation,
    cfg: PipelineConfig,
    target: Optional[int] = None,
    fit_within: bool = False,
) -> list[Hit]:
    """Split a conversation into overlapping turn-aligned chunks.

    ``target`` overrides cfg.chunk_target_tokens (inference uses the model's
    max sequence length instead of the annotation HIT size). By default each
    chunk is the smallest turn-aligned run >= target; with ``fit_within`` it
    is the largest run <= target, so chunks never exceed a model's sequence
    budget."""
    if not conv.turns:
        raise ChunkingError("cannot chunk an empty conversation")
    target = target if target is not None else cfg.chunk_target_tokens
    for ti, turn in enumerate(conv.turns):
        if turn.token_count > target:
            raise TurnTooLong(ti, turn.token_count, target)

    prefix = _turn_prefix_sums(conv)
    n_turns = len(conv.turns)
    ideal_stride = target * (1.0 - cfg.chunk_overlap_fraction)

    hits: list[Hit] = []
    start = 0
    while True:
        if fit_within:
            # largest turn-aligned chunk with <= target tokens
            end = start + 1
            while end < n_turns and prefix[end + 1] - prefix[start] <= target:
                end += 1
        else:
            # smallest turn-aligned chunk with >= target tokens
            end = start
            while end < n_turns and prefix[end] - prefix[start] < target:
                end += 1
        hits.append(
            Hit(
                hit_id=f"{conv.conv_id}#{len(hits)}",
                conv_id=conv.conv_id,
                chunk_index=len(hits),
                turn_start=start,
                turn_end=end,
                token_start=prefix[start],
                token_end=prefix[end],
            )
        )
        if end >= n_turns:
            break
        # next start: turn boundary whose token offset is closest to the stride
        best = None
        for cand in range(start + 1, end + 1):
            dist = abs((prefix[cand] - prefix[start]) - ideal_stride)
            if best is None or dist < best[0]:
                best = (dist, cand)
        start = best[1]

    # fill in overlap ranges now that neighbours are known
    out: list[Hit] = []
    for i, hit in enumerate(hits):
        left = (0, 0)
        right = (0, 0)
        if i > 0 and hits[i - 1].token_end > hit.token_start:
            left = (hit.token_start, hits[i - 1].token_end)
        if i + 1 < len(hits) and hit.token_end > hits[i + 1].token_start:
            right = (hits[i + 1].token_start, hit.token_end)
        out.append(
            Hit(
                hit.hit_id, hit.conv_id, hit.chunk_index, hit.turn_start, hit.turn_end,
                hit.token_start, hit.token_end, left, right,
            )
        )
    return out


@dataclass(frozen=True)
class TokenLabel:
    """One chunk-level decision for one token."""

    removed: bool
    category: Optional[Category] = None


def reassemble(
    conv: Conversation,
    hits: Sequence[Hit],
    per_hit_labels: Mapping[str, Mapping[str, TokenLabel]],
) -> dict[str, TokenLabel]:
    """OR-merge chunk-level labels back onto the whole conversation.

    A token is removed if any covering chunk removes it; when two chunks
    disagree on the category, the earlier chunk wins. Raises UncoveredToken
    on coverage gaps."""
    all_ids = conv.token_ids()
    covered = [False] * len(all_ids)
    merged: dict[str, TokenLabel] = {}
    for hit in sorted(hits, key=lambda h: h.chunk_index):
        labels = per_hit_labels.get(hit.hit_id, {})
        for idx in range(hit.token_start, hit.token_end):
            covered[idx] = True
            tid = all_ids[idx]
            label = labels.get(tid, TokenLabel(False))
            prev = merged.get(tid)
            if prev is None:
                merged[tid] = label
            elif label.removed and not prev.removed:
                merged[tid] = label
            # prev.removed stays; earlier chunk's category wins on conflict
    for idx, ok in enumerate(covered):
        if not ok:
            raise UncoveredToken(all_ids[idx])
    return merged


def merged_removals(merged: Mapping[str, TokenLabel]) -> dict[str, Optional[Category]]:
    return {tid: lbl.category for tid, lbl in merged.items() if lbl.removed}


def hit_to_obj(hit: Hit) -> dict:
    return {
        "hit_id": hit.hit_id,
        "conv_id": hit.conv_id,
        "chunk_index": hit.chunk_index,
        "turn_start": hit.turn_start,
        "turn_end": hit.turn_end,
        "token_start": hit.token_start,
        "token_end": hit.token_end,
        "overlap_left": list(hit.overlap_left),
        "overlap_right": list(hit.overlap_right),
    }


def hit_from_obj(obj: dict) -> Hit:
    return Hit(
        obj["hit_id"], obj["conv_id"], obj["chunk_index"], obj["turn_start"],
        obj["turn_end"], obj["token_start"], obj["token_end"],
        tuple(obj.get("overlap_left", (0, 0))), tuple(obj.get("overlap_right", (0, 0))),
    )
