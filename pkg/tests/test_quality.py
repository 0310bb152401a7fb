import itertools
import random

import numpy as np
import pytest

from convclean.model import Category
from convclean.quality import (
    Annotation,
    MissingGold,
    QualityError,
    UnlabeledTurn,
    WorkerRecord,
    aggregate_best_worker,
    annotation_kappa_labels,
    checkpoint_filter,
    corpus_fleiss_kappa,
    fleiss_kappa,
    fleiss_kappa_counts,
    purge_and_repost,
    qualify_worker,
    token_prf,
    worker_analytics,
    KAPPA_CATEGORIES,
    KEEP,
)


def reference_fleiss_kappa(counts):
    """Straight transcription of the agreement formula, kept independent of
    the library implementation on purpose."""
    counts = [[float(x) for x in row] for row in counts]
    n = sum(counts[0])
    big_n = len(counts)
    p_bar = 0.0
    for row in counts:
        p_bar += (sum(x * x for x in row) - n) / (n * (n - 1))
    p_bar /= big_n
    total = n * big_n
    p_e = sum((sum(row[j] for row in counts) / total) ** 2 for j in range(len(counts[0])))
    return (p_bar - p_e) / (1.0 - p_e)


class TestTokenPrf:
    def test_perfect(self):
        ids = {f"c:0:{i}" for i in range(5)}
        r = token_prf(ids, ids)
        assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)

    def test_hand_computed(self):
        pred = {"a", "b", "x", "y"}
        gold = {"a", "b", "p", "q"}
        r = token_prf(pred, gold)
        assert (r.tp, r.fp, r.fn) == (2, 2, 2)
        assert (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5)

    def test_both_empty_convention(self):
        r = token_prf(set(), set())
        assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)

    def test_one_side_empty(self):
        r = token_prf(set(), {"a"})
        assert (r.precision, r.recall, r.f1) == (1.0, 0.0, 0.0)
        r = token_prf({"a"}, set())
        assert (r.precision, r.recall, r.f1) == (0.0, 1.0, 0.0)

    def test_universe_restriction(self):
        r = token_prf({"a", "z"}, {"a"}, universe={"a", "b"})
        assert (r.tp, r.fp, r.fn) == (1, 0, 0)

    def test_precision_recall_duality(self):
        rng = random.Random(5)
        universe = [f"t{i}" for i in range(50)]
        for _ in range(50):
            pred = {t for t in universe if rng.random() < 0.3}
            gold = {t for t in universe if rng.random() < 0.3}
            assert token_prf(pred, gold).precision == token_prf(gold, pred).recall


def make_annotation(worker, hit, token_ids, removed, cat=Category.OTHERS):
    return Annotation(worker, hit, {t: cat for t in removed}, tuple(token_ids))


class TestQualifyWorker:
    IDS = tuple(f"c:0:{i}" for i in range(10))

    def score(self, n_right, n_wrong, gold_n=5):
        gold = set(self.IDS[:gold_n])
        pred = set(self.IDS[:n_right]) | set(self.IDS[gold_n : gold_n + n_wrong])
        ann = make_annotation("w", "h", self.IDS, pred)
        return qualify_worker(ann, gold, 0.3)

    def test_boundary_inclusive(self):
        # tp=2, fp=4, fn=3 -> P=1/3, R=2/5, F1=4/11... craft exact 0.3 instead:
        gold = set(self.IDS[:3])
        pred = {self.IDS[0], self.IDS[3], self.IDS[4], self.IDS[5], self.IDS[6], self.IDS[7], self.IDS[8]}
        ann = make_annotation("w", "h", self.IDS, pred)
        passed, f1 = qualify_worker(ann, gold, 0.3)
        assert f1 == pytest.approx(0.2)
        assert not passed

    def test_exact_threshold_passes(self):
        gold = set(self.IDS[:4])
        pred = {self.IDS[0]} | set(self.IDS[4:7])  # tp=1 fp=3 fn=3 -> P=R=0.25
        ann = make_annotation("w", "h", self.IDS, pred)
        passed, f1 = qualify_worker(ann, gold, 0.25)
        assert f1 == pytest.approx(0.25)
        assert passed

    def test_perfect_passes(self):
        passed, f1 = self.score(5, 0)
        assert passed and f1 == 1.0

    def test_missing_gold(self):
        ann = make_annotation("w", "h", self.IDS, set())
        with pytest.raises(MissingGold):
            qualify_worker(ann, None, 0.3)


class TestCheckpointFilter:
    def test_below_threshold_excluded(self):
        w = WorkerRecord("w1", qualified=True)
        excluded = checkpoint_filter([w], {"w1": 0.2}, 0.3, "cp1")
        assert excluded == {"w1"}
        assert w.excluded and not w.qualified
        assert w.f1_history == [("cp1", 0.2)]

    def test_boundary_survives(self):
        w = WorkerRecord("w1", qualified=True)
        assert checkpoint_filter([w], {"w1": 0.3}, 0.3) == set()
        assert w.qualified

    def test_empty(self):
        assert checkpoint_filter([], {}, 0.3) == set()


class TestPurgeAndRepost:
    IDS = tuple(f"c:0:{i}" for i in range(4))

    def test_deficient_hit_queued(self):
        anns = [
            make_annotation("good", "h1", self.IDS, set()),
            make_annotation("bad", "h1", self.IDS, set()),
        ]
        kept, repost = purge_and_repost(anns, {"bad"}, 2)
        assert [a.worker_id for a in kept] == ["good"]
        assert repost == {"h1"}

    def test_sufficient_hit_not_queued(self):
        anns = [make_annotation(f"w{i}", "h1", self.IDS, set()) for i in range(3)]
        kept, repost = purge_and_repost(anns, set(), 2)
        assert len(kept) == 3 and repost == set()

    def test_all_excluded(self):
        anns = [make_annotation("bad", h, self.IDS, set()) for h in ("h1", "h2")]
        kept, repost = purge_and_repost(anns, {"bad"}, 2)
        assert kept == [] and repost == {"h1", "h2"}


class TestAggregateBestWorker:
    IDS = tuple(f"c:0:{i}" for i in range(6))

    def records(self, **f1s):
        out = {}
        for wid, (f1, hits) in f1s.items():
            out[wid] = WorkerRecord(wid, qualified=True, f1_history=[("q", f1)], hit_count=hits)
        return out

    def test_highest_f1_wins(self):
        anns = [
            make_annotation("lo", "h", self.IDS, {self.IDS[0]}),
            make_annotation("hi", "h", self.IDS, {self.IDS[1]}, Category.THINK_ALOUD),
        ]
        labels = aggregate_best_worker(self.IDS, anns, self.records(lo=(0.4, 5), hi=(0.6, 5)))
        assert labels == {self.IDS[1]: Category.THINK_ALOUD}

    def test_single_annotator(self):
        anns = [make_annotation("w", "h", self.IDS, {self.IDS[2]})]
        labels = aggregate_best_worker(self.IDS, anns, self.records(w=(0.5, 1)))
        assert labels == {self.IDS[2]: Category.OTHERS}

    def test_tie_breaks_on_hits_then_id(self):
        anns = [
            make_annotation("b", "h", self.IDS, {self.IDS[0]}),
            make_annotation("a", "h", self.IDS, {self.IDS[1]}),
        ]
        labels = aggregate_best_worker(self.IDS, anns, self.records(a=(0.5, 3), b=(0.5, 7)))
        assert labels == {self.IDS[0]: Category.OTHERS}  # more HITs wins
        labels = aggregate_best_worker(self.IDS, anns, self.records(a=(0.5, 3), b=(0.5, 3)))
        assert labels == {self.IDS[1]: Category.OTHERS}  # then lexicographic id

    def test_verbatim_single_provenance(self):
        anns = [
            make_annotation("w1", "h", self.IDS, {self.IDS[0], self.IDS[3]}),
            make_annotation("w2", "h", self.IDS, {self.IDS[1]}),
        ]
        labels = aggregate_best_worker(self.IDS, anns, self.records(w1=(0.9, 1), w2=(0.8, 1)))
        assert set(labels) == {self.IDS[0], self.IDS[3]}  # never mixed

    def test_uncovered_turn(self):
        with pytest.raises(UnlabeledTurn):
            aggregate_best_worker(self.IDS, [], {}, "c", 0)

    def test_partial_coverage_not_covering(self):
        anns = [make_annotation("w", "h", self.IDS[:3], set())]
        with pytest.raises(UnlabeledTurn):
            aggregate_best_worker(self.IDS, anns, self.records(w=(0.9, 1)))


class TestFleissKappa:
    def test_unanimous_is_one(self):
        labels = [["keep", "Others", "keep"], ["keep", "Others", "keep"]]
        assert fleiss_kappa(labels) == 1.0

    def test_unanimous_single_category_degenerate(self):
        assert fleiss_kappa([[KEEP] * 4, [KEEP] * 4]) == 1.0

    def test_chance_equality_is_zero(self):
        counts = np.array([[2, 0], [0, 2], [1, 1], [1, 1]])
        assert fleiss_kappa_counts(counts) == pytest.approx(0.0, abs=1e-12)

    def test_hand_derived_two_rater_case(self):
        # agree on 2 tokens, disagree on 2: P-bar=0.5, Pe=0.625 -> -1/3
        a = ["Others", "Others", "Others", "Others"]
        b = ["Others", "Others", "keep", "ThinkAloud"]
        # rows: [2,0,..],[2,0,..],[1,1,..],[1,0,1,..]  (recompute directly)
        expected = reference_fleiss_kappa([[2, 0, 0], [2, 0, 0], [1, 1, 0], [1, 0, 1]])
        assert fleiss_kappa([a, b]) == pytest.approx(expected, abs=1e-12)

    def test_matches_reference_on_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            items = rng.integers(2, 30)
            cats = rng.integers(2, 6)
            raters = rng.integers(2, 8)
            counts = rng.multinomial(raters, np.ones(cats) / cats, size=items)
            p_j = counts.sum(axis=0) / counts.sum()
            if np.max(p_j) == 1.0:
                continue  # degenerate; conventions differ by design
            assert fleiss_kappa_counts(counts) == pytest.approx(
                reference_fleiss_kappa(counts.tolist()), abs=1e-9
            )

    def test_category_permutation_invariance(self):
        rng = random.Random(2)
        labels = [
            [rng.choice(KAPPA_CATEGORIES[:3]) for _ in range(8)] for _ in range(3)
        ]
        base = fleiss_kappa(labels)
        mapping = dict(zip(KAPPA_CATEGORIES[:3], KAPPA_CATEGORIES[2::-1]))
        permuted = [[mapping[l] for l in row] for row in labels]
        assert fleiss_kappa(permuted) == pytest.approx(base, abs=1e-12)

    def test_rater_order_invariance(self):
        labels = [["keep", "Others"], ["Others", "keep"], ["keep", "keep"]]
        for perm in itertools.permutations(labels):
            assert fleiss_kappa(list(perm)) == pytest.approx(fleiss_kappa(labels), abs=1e-12)

    def test_fewer_than_two_raters_rejected(self):
        with pytest.raises(QualityError):
            fleiss_kappa([["keep"]])

    def test_corpus_mean_skips_single_rater_turns(self):
        turns = [
            [["keep", "Others"], ["keep", "Others"]],  # kappa 1
            [["keep"]],  # skipped
        ]
        assert corpus_fleiss_kappa(turns) == 1.0
        assert corpus_fleiss_kappa([[["keep"]]]) is None

    def test_annotation_projection(self):
        ids = ("c:0:0", "c:0:1", "c:0:2")
        ann = make_annotation("w", "h", ids, {ids[1]}, Category.THINK_ALOUD)
        assert annotation_kappa_labels(ann, ids) == ["keep", "ThinkAloud", "keep"]


class TestWorkerAnalytics:
    def make_records(self, n_bad, n_good, bad_hits, good_hits):
        recs = []
        for i in range(n_bad):
            recs.append(WorkerRecord(f"bad{i}", f1_history=[("q", 0.1)], hit_count=bad_hits))
        for i in range(n_good):
            recs.append(WorkerRecord(f"good{i}", f1_history=[("q", 0.7)], hit_count=good_hits))
        return recs

    def test_dominance_fixture_flagged(self):
        # 23 of 100 workers below threshold, holding >80% of assignments
        recs = self.make_records(23, 77, 45, 3)
        report = worker_analytics(recs, 0.3)
        assert report.below_threshold_worker_fraction == pytest.approx(0.23)
        assert report.below_threshold_assignment_share > 0.8
        assert report.dominance_flag

    def test_single_worker(self):
        report = worker_analytics([WorkerRecord("w", f1_history=[("q", 0.5)], hit_count=2)])
        assert len(report.workers) == 1
        assert not report.dominance_flag

    def test_uniform_f1_histogram(self):
        recs = [
            WorkerRecord(f"w{i}", f1_history=[("q", (i + 0.5) / 10)], hit_count=1)
            for i in range(10)
        ]
        report = worker_analytics(recs, 0.3)
        assert report.histogram_counts == (1,) * 10

    def test_empty(self):
        report = worker_analytics([])
        assert report.workers == ()
        assert report.below_threshold_worker_fraction == 0.0
