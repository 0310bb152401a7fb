"""Worker scoring, qualification gating, aggregation, and agreement.

All scoring functions are pure; WorkerRecord is mutated only by the
annotation service's serialized update path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import Category, LabelSet

KEEP = "keep"
KAPPA_CATEGORIES = (KEEP,) + tuple(c.value for c in Category)


class QualityError(Exception):
    pass


class MissingGold(QualityError):
    pass


class UnlabeledTurn(QualityError):
    def __init__(self, conv_id: str, turn_index: int):
        self.conv_id = conv_id
        self.turn_index = turn_index
        super().__init__(f"no annotation covers {conv_id} turn {turn_index}")


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_category_recall: Mapping[str, float] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_category_recall": dict(self.per_category_recall),
        }


def token_prf(
    pred: "LabelSet | set[str]",
    gold: "LabelSet | set[str]",
    universe: Optional[set[str]] = None,
) -> MetricsReport:
    """Per-token precision / recall / F1 over a token-id universe.

    Empty-denominator conventions: P=1 with no predictions, R=1 with no gold
    positives, so F1=1 when both sides are empty and 0 when exactly one is.
    """
    pred_ids = pred.removed_ids() if isinstance(pred, LabelSet) else set(pred)
    gold_ids = gold.removed_ids() if isinstance(gold, LabelSet) else set(gold)
    if universe is not None:
        pred_ids &= universe
        gold_ids &= universe
    tp = len(pred_ids & gold_ids)
    fp = len(pred_ids - gold_ids)
    fn = len(gold_ids - pred_ids)
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return MetricsReport(precision, recall, f1, tp, fp, fn)


@dataclass
class WorkerRecord:
    """Running quality state for one worker."""

    worker_id: str
    qualified: bool = False
    excluded: bool = False
    f1_history: list[tuple[str, float]] = field(default_factory=list)  # (checkpoint id, F1)
    hit_count: int = 0
    elapsed_times: list[float] = field(default_factory=list)

    @property
    def mean_f1(self) -> float:
        """Running mean over checkpoint F1s (qualification counts as checkpoint 0)."""
        if not self.f1_history:
            return 0.0
        return sum(f for _, f in self.f1_history) / len(self.f1_history)

    @property
    def mean_elapsed(self) -> float:
        if not self.elapsed_times:
            return 0.0
        return sum(self.elapsed_times) / len(self.elapsed_times)


@dataclass(frozen=True)
class Annotation:
    """One worker's submission on one HIT: per-token keep/remove labels."""

    worker_id: str
    hit_id: str
    removals: Mapping[str, Category]  # token id -> category; absent = keep
    token_ids: tuple[str, ...]  # the HIT's full token span, in order
    submitted_at: float = 0.0
    elapsed_seconds: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "removals", dict(self.removals))
        extra = set(self.removals) - set(self.token_ids)
        if extra:
            raise QualityError(f"labels outside the HIT span: {sorted(extra)[:5]}")


def qualify_worker(
    submission: Annotation, gold_removals: Optional[set[str]], threshold: float
) -> tuple[bool, float]:
    """Score a qualification submission against gold; pass iff F1 >= threshold."""
    if gold_removals is None:
        raise MissingGold(f"no gold for qualification hit {submission.hit_id}")
    report = token_prf(set(submission.removals), gold_removals, set(submission.token_ids))
    return report.f1 >= threshold, report.f1


def checkpoint_filter(
    workers: Sequence[WorkerRecord],
    checkpoint_results: Mapping[str, float],
    threshold: float,
    checkpoint_id: str = "checkpoint",
) -> set[str]:
    """Exclude workers whose checkpoint F1 falls below the threshold.

    Boundary workers (F1 == threshold) survive. Scores are appended to each
    worker's history; excluded workers are marked on the record."""
    excluded: set[str] = set()
    by_id = {w.worker_id: w for w in workers}
    for worker_id, f1 in checkpoint_results.items():
        record = by_id.get(worker_id)
        if record is None:
            continue
        record.f1_history.append((checkpoint_id, f1))
        if f1 < threshold:
            record.qualified = False
            record.excluded = True
            excluded.add(worker_id)
    return excluded


def purge_and_repost(
    annotations: Iterable[Annotation],
    excluded_workers: set[str],
    min_annotations_per_hit: int,
) -> tuple[list[Annotation], set[str]]:
    """Drop all annotations by excluded workers; queue deficient HITs for repost.

    Returns (surviving annotations, hit ids needing more annotations)."""
    kept: list[Annotation] = []
    per_hit: dict[str, int] = {}
    for ann in annotations:
        per_hit.setdefault(ann.hit_id, 0)
        if ann.worker_id in excluded_workers:
            continue
        kept.append(ann)
        per_hit[ann.hit_id] += 1
    repost = {hit_id for hit_id, n in per_hit.items() if n < min_annotations_per_hit}
    return kept, repost


def aggregate_best_worker(
    turn_token_ids: Sequence[str],
    annotations: Sequence[Annotation],
    records: Mapping[str, WorkerRecord],
    conv_id: str = "",
    turn_index: int = -1,
) -> dict[str, Category]:
    """Copy the best covering worker's labels for one turn, verbatim.

    Best = highest running mean checkpoint F1; ties break on completed HIT
    count, then lexicographic worker id. Only annotations whose span covers
    the whole turn count as covering."""
    turn_ids = set(turn_token_ids)
    covering = [a for a in annotations if turn_ids <= set(a.token_ids)]
    if not covering:
        raise UnlabeledTurn(conv_id, turn_index)

    def rank(ann: Annotation):
        rec = records.get(ann.worker_id)
        mean_f1 = rec.mean_f1 if rec else 0.0
        hits = rec.hit_count if rec else 0
        return (-mean_f1, -hits, ann.worker_id)

    best = min(covering, key=rank)
    return {tid: cat for tid, cat in best.removals.items() if tid in turn_ids}


# --- Fleiss' kappa -----------------------------------------------------------


def fleiss_kappa_counts(counts: np.ndarray) -> float:
    """Fleiss' kappa from an items x categories rating-count matrix.

    Every item must carry the same number of ratings (>= 2). Degenerate
    matrices where expected agreement is 1 return 1.0 on perfect agreement
    and 0.0 otherwise."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] == 0:
        raise QualityError("rating matrix must be non-empty and 2-D")
    row_sums = counts.sum(axis=1)
    n = row_sums[0]
    if n < 2 or not np.all(row_sums == n):
        raise QualityError("every item needs the same number (>= 2) of ratings")
    p_item = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    p_j = counts.sum(axis=0) / counts.sum()
    p_e = float((p_j * p_j).sum())
    if abs(1.0 - p_e) < 1e-12:
        return 1.0 if abs(1.0 - p_bar) < 1e-12 else 0.0
    return float((p_bar - p_e) / (1.0 - p_e))


def _rating_matrix(rater_labels: Sequence[Sequence[str]]) -> np.ndarray:
    n_items = len(rater_labels[0])
    for labels in rater_labels:
        if len(labels) != n_items:
            raise QualityError("all raters must label every token of the turn")
    index = {cat: j for j, cat in enumerate(KAPPA_CATEGORIES)}
    counts = np.zeros((n_items, len(KAPPA_CATEGORIES)), dtype=int)
    for labels in rater_labels:
        for i, label in enumerate(labels):
            counts[i, index[label]] += 1
    return counts


def fleiss_kappa(rater_labels: Sequence[Sequence[str]]) -> float:
    """Kappa for one turn: items are tokens, categories are keep plus the
    five removal categories; each inner sequence is one rater's labels."""
    if len(rater_labels) < 2:
        raise QualityError("Fleiss' kappa needs >= 2 raters")
    return fleiss_kappa_counts(_rating_matrix(rater_labels))


def corpus_fleiss_kappa(turns: Iterable[Sequence[Sequence[str]]]) -> Optional[float]:
    """Unweighted mean kappa over turns with >= 2 raters; turns with fewer
    raters are skipped, not scored zero. None when no turn qualifies."""
    scores = [fleiss_kappa(t) for t in turns if len(t) >= 2]
    if not scores:
        return None
    return sum(scores) / len(scores)


def annotation_kappa_labels(ann: Annotation, turn_token_ids: Sequence[str]) -> list[str]:
    """Project an annotation onto a turn as keep/category labels for kappa."""
    return [
        ann.removals[tid].value if tid in ann.removals else KEEP
        for tid in turn_token_ids
    ]


# --- worker analytics --------------------------------------------------------


@dataclass(frozen=True)
class AnalyticsReport:
    """Plot-ready worker quality summary."""

    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
    workers: tuple[tuple[str, float, int, float], ...]  # (id, mean F1, hits, mean elapsed)
    below_threshold_worker_fraction: float
    below_threshold_assignment_share: float
    dominance_flag: bool

    def to_obj(self) -> dict:
        return {
            "histogram": {
                "edges": list(self.histogram_edges),
                "counts": list(self.histogram_counts),
            },
            "workers": [
                {"worker_id": w, "mean_f1": f, "hit_count": h, "mean_elapsed": e}
                for w, f, h, e in self.workers
            ],
            "below_threshold_worker_fraction": self.below_threshold_worker_fraction,
            "below_threshold_assignment_share": self.below_threshold_assignment_share,
            "dominance_flag": self.dominance_flag,
        }


def worker_analytics(
    records: Sequence[WorkerRecord],
    threshold: float = 0.3,
    bins: int = 10,
) -> AnalyticsReport:
    """F1 histogram plus per-worker (F1, HIT count, mean elapsed) rows.

    The dominance flag fires when sub-threshold workers hold the majority of
    completed assignments, the failure mode checkpoint filtering exists for."""
    f1s = np.array([r.mean_f1 for r in records], dtype=float)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(f1s, bins=edges) if len(records) else (np.zeros(bins, dtype=int), edges)
    rows = tuple(
        (r.worker_id, r.mean_f1, r.hit_count, r.mean_elapsed)
        for r in sorted(records, key=lambda r: r.worker_id)
    )
    total_hits = sum(r.hit_count for r in records)
    below = [r for r in records if r.mean_f1 < threshold]
    frac = len(below) / len(records) if records else 0.0
    share = sum(r.hit_count for r in below) / total_hits if total_hits else 0.0
    return AnalyticsReport(
        tuple(edges.tolist()),
        tuple(int(c) for c in counts),
        rows,
        frac,
        share,
        share > 0.5,
    )
