"""Walkthrough: the crowd quality-control math.

Workers qualify by scoring F1 >= 0.3 against gold on a qualification
task, keep getting measured by hidden checkpoints, and are excluded (and
their work purged) if they slip below the bar. Surviving annotations are
aggregated by taking the best worker per turn, and agreement is reported
as Fleiss' kappa.
"""

from convclean.quality import (
    Annotation,
    WorkerRecord,
    aggregate_best_worker,
    checkpoint_filter,
    fleiss_kappa,
    purge_and_repost,
    qualify_worker,
    token_prf,
    worker_analytics,
)
from convclean.model import Category

SPAN = tuple(f"c:0:{i}" for i in range(8))
GOLD = {"c:0:0", "c:0:1"}


def submission(worker, removed):
    return Annotation(
        worker, "hit-1",
        {tid: Category.OTHERS for tid in removed}, SPAN, elapsed_seconds=90.0,
    )


def main() -> None:
    print("== qualification ==")
    for worker, answer in [("good", {"c:0:0", "c:0:1"}), ("sloppy", {"c:0:5"})]:
        passed, f1 = qualify_worker(submission(worker, answer), GOLD, 0.3)
        print(f"  {worker}: F1={f1:.2f} -> {'pass' if passed else 'fail'}")

    print("\n== checkpoint filtering ==")
    records = [WorkerRecord("good", qualified=True), WorkerRecord("sloppy", qualified=True)]
    scores = {"good": 0.9, "sloppy": 0.1}
    excluded = checkpoint_filter(records, scores, 0.3, checkpoint_id="cp-1")
    print(f"  excluded={sorted(excluded)}")

    annotations = [submission("good", GOLD), submission("sloppy", {"c:0:7"})]
    surviving, repost = purge_and_repost(annotations, excluded, 2)
    print(f"  purge leaves {len(surviving)} annotations; repost queue: {sorted(repost)}")

    print("\n== best-worker aggregation ==")
    records_by_id = {r.worker_id: r for r in records}
    winner = aggregate_best_worker(SPAN, annotations, records_by_id, "c", 0)
    print(f"  aggregated removals: {sorted(winner)}  (taken verbatim from 'good')")

    print("\n== agreement ==")
    unanimous = [["keep", "Others", "keep"], ["keep", "Others", "keep"]]
    split = [["keep", "Others", "keep"], ["Others", "keep", "keep"]]
    print(f"  unanimous raters: kappa={fleiss_kappa(unanimous):.3f}")
    print(f"  disagreeing raters: kappa={fleiss_kappa(split):.3f}")

    print("\n== analytics ==")
    report = worker_analytics(list(records_by_id.values()), 0.3)
    for worker_id, mean_f1, hit_count, _elapsed in report.workers:
        print(f"  {worker_id}: mean F1 {mean_f1:.2f}, {hit_count} hits")
    print(f"  fraction of workers below threshold: "
          f"{report.below_threshold_worker_fraction:.2f}")

    print("\n== raw token metric ==")
    r = token_prf({"c:0:0", "c:0:5"}, GOLD, set(SPAN))
    print(f"  P={r.precision:.2f} R={r.recall:.2f} F1={r.f1:.2f} "
          f"(tp={r.tp} fp={r.fp} fn={r.fn})")


if __name__ == "__main__":
    main()
