"""End-to-end cleanup flows: two-stage (single-turn detect -> redact ->
multi-turn detect) and combined single-pass, with chunked inference,
overlap merge, and evaluation against gold."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .chunking import Hit, TokenLabel, chunk_conversation, reassemble
from .detectors import Detector, DetectorError, DetectorInput, TurnView
from .model import Category, Conversation, LabelSet, PipelineConfig, build_conversation
from .quality import MetricsReport, token_prf


class PipelineError(Exception):
    def __init__(self, stage: str, address: str, cause: Exception):
        self.stage = stage
        self.address = address
        self.cause = cause
        super().__init__(f"[{stage}] {address}: {cause}")


def _label_category(label: TokenLabel) -> Category:
    # nondistinctive detector output falls back to the catch-all category
    return label.category if label.category is not None else Category.OTHERS


def run_std(conv: Conversation, std: Detector) -> LabelSet:
    """Run a single-turn detector over every slash unit independently.

    Slash units longer than the detector's max_seq are split at max_seq
    with no overlap and the label runs concatenated."""
    if std.spec.scope != "single_turn":
        raise ValueError(f"run_std needs a single_turn detector, got {std.spec.scope}")
    removals: dict[str, Category] = {}
    for ti, turn in enumerate(conv.turns):
        for si, su in enumerate(turn.slash_units):
            for seg_start in range(0, len(su), std.spec.max_seq):
                seg = su[seg_start : seg_start + std.spec.max_seq]
                chunk = DetectorInput(
                    f"{conv.conv_id}:{ti}:{si}:{seg_start}",
                    (TurnView(turn.speaker, tuple(t.id for t in seg), tuple(t.text for t in seg)),),
                )
                try:
                    labels = std.detect(chunk)
                except DetectorError as e:
                    raise PipelineError("std", chunk.chunk_id, e) from e
                for tok, lbl in zip(seg, labels):
                    if lbl.removed:
                        removals[tok.id] = _label_category(lbl)
    return LabelSet(conv.conv_id, f"prediction:{std.spec.kind}", removals)


def redact(conv: Conversation, labels: LabelSet) -> tuple[Conversation, dict[str, str]]:
    """Remove labeled tokens; returns the redacted conversation plus a map
    from surviving (re-indexed) token ids back to original ids.

    Emptied slash units and turns are dropped and indices re-densified."""
    labels.validate_against(conv)
    removed = labels.removed_ids()
    survivors_per_turn: list[tuple[str, list[list[str]], list[str]]] = []
    for turn in conv.turns:
        sus: list[list[str]] = []
        ids: list[str] = []
        for su in turn.slash_units:
            kept = [t for t in su if t.id not in removed]
            if kept:
                sus.append([t.text for t in kept])
                ids.extend(t.id for t in kept)
        if sus:
            survivors_per_turn.append((turn.speaker, sus, ids))
    redacted = build_conversation(
        conv.conv_id, [(sp, sus) for sp, sus, _ in survivors_per_turn], conv.split
    )
    original_ids = [tid for _, _, ids in survivors_per_turn for tid in ids]
    back_map = dict(zip(redacted.token_ids(), original_ids))
    return redacted, back_map


def _hit_input(conv: Conversation, hit: Hit, id_map: Optional[Mapping[str, str]] = None) -> DetectorInput:
    """Detector view of one chunk. ``id_map`` substitutes token ids (the
    two-stage flow shows the detector original ids, not redacted ones)."""
    views = []
    for turn in hit.turns(conv):
        ids = tuple(t.id for t in turn.tokens())
        if id_map is not None:
            ids = tuple(id_map[tid] for tid in ids)
        views.append(TurnView(turn.speaker, ids, tuple(t.text for t in turn.tokens())))
    return DetectorInput(hit.hit_id, tuple(views))


def _detect_chunks(
    conv: Conversation,
    detector: Detector,
    cfg: PipelineConfig,
    stage: str,
    jobs: int = 1,
    id_map: Optional[Mapping[str, str]] = None,
) -> dict[str, Optional[Category]]:
    """Chunk, detect (optionally in parallel), and OR-merge. Output is
    identical at any parallelism level: the merge orders by chunk index.
    Returned keys are the ids the detector saw (mapped ids, if any)."""
    hits = chunk_conversation(conv, cfg, target=detector.spec.max_seq, fit_within=True)
    inputs = [_hit_input(conv, h, id_map) for h in hits]

    def one(hit: Hit, inp: DetectorInput) -> dict[str, TokenLabel]:
        try:
            labels = detector.detect(inp)
        except DetectorError as e:
            raise PipelineError(stage, inp.chunk_id, e) from e
        # key the merge by the conversation's own ids so coverage checks work
        return dict(zip(hit.token_ids(conv), labels))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, hits, inputs))
    else:
        results = [one(hit, inp) for hit, inp in zip(hits, inputs)]
    per_hit = {hit.hit_id: res for hit, res in zip(hits, results)}
    merged = reassemble(conv, hits, per_hit)
    out: dict[str, Optional[Category]] = {}
    for tid, lbl in merged.items():
        if lbl.removed:
            out[id_map[tid] if id_map is not None else tid] = lbl.category
    return out


def run_two_stage(
    conv: Conversation,
    std: Detector,
    mtd: Detector,
    cfg: PipelineConfig,
    jobs: int = 1,
) -> LabelSet:
    """Stage 1 single-turn labels, redact, then multi-turn detection over
    50%-overlap chunks of the redacted text, mapped back to original ids.

    The two stages' label sets are disjoint by construction: stage 2 only
    sees tokens stage 1 kept."""
    if mtd.spec.scope != "multi_turn":
        raise ValueError(f"stage 2 needs a multi_turn detector, got {mtd.spec.scope}")
    stage1 = run_std(conv, std)
    redacted, back_map = redact(conv, stage1)
    removals: dict[str, Category] = dict(stage1.removals)
    if redacted.turns:
        stage2 = _detect_chunks(redacted, mtd, cfg, "mtd", jobs, id_map=back_map)
        for tid, cat in stage2.items():
            removals[tid] = cat if cat is not None else Category.OTHERS
    return LabelSet(
        conv.conv_id, f"prediction:two-stage({std.spec.kind},{mtd.spec.kind})", removals
    )


def run_combined(
    conv: Conversation, detector: Detector, cfg: PipelineConfig, jobs: int = 1
) -> LabelSet:
    """Single pass over 50%-overlap chunks of the unredacted conversation."""
    if detector.spec.scope != "multi_turn":
        raise ValueError(f"combined mode needs a multi_turn detector, got {detector.spec.scope}")
    if not conv.turns:
        return LabelSet(conv.conv_id, f"prediction:combined({detector.spec.kind})", {})
    found = _detect_chunks(conv, detector, cfg, "combined", jobs)
    removals = {
        tid: (cat if cat is not None else Category.OTHERS) for tid, cat in found.items()
    }
    return LabelSet(conv.conv_id, f"prediction:combined({detector.spec.kind})", removals)


def evaluate(
    pred: LabelSet, gold: LabelSet, universe: Optional[set[str]] = None
) -> MetricsReport:
    """Per-token P/R/F1 plus per-category recall over gold categories."""
    base = token_prf(pred, gold, universe)
    per_cat: dict[str, float] = {}
    pred_ids = pred.removed_ids()
    by_cat: dict[str, list[str]] = {}
    for tid, cat in gold.removals.items():
        if universe is not None and tid not in universe:
            continue
        by_cat.setdefault(cat.value, []).append(tid)
    for cat, ids in sorted(by_cat.items()):
        hit = sum(1 for tid in ids if tid in pred_ids)
        per_cat[cat] = hit / len(ids)
    return MetricsReport(
        base.precision, base.recall, base.f1, base.tp, base.fp, base.fn, per_cat
    )


def render_cleaned(conv: Conversation, labels: LabelSet) -> str:
    """Cleaned-transcript text: one line per surviving turn, 'Speaker: words'."""
    cleaned, _ = redact(conv, labels)
    lines = []
    for turn in cleaned.turns:
        words = " ".join(t.text for t in turn.tokens())
        lines.append(f"{turn.speaker}: {words}")
    return "\n".join(lines) + ("\n" if lines else "")
