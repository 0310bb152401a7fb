"""Walkthrough: the annotation service, driven end to end in process.

A batch of HITs is posted with a qualification task and a hidden
checkpoint. Two diligent workers and one careless one work through it;
the careless worker is caught at the checkpoint, excluded, and their
work is purged and re-served. The surviving annotations are exported as
aggregated labels.

The same flow is available over HTTP (`convclean serve`); this demo uses
the service object directly so it runs without a network.
"""

import tempfile
from pathlib import Path

from convclean.service import AnnotationService, UnqualifiedWorker

GOLD = [
    {"turn": 0, "position": 0, "category": "Others"},
    {"turn": 0, "position": 1, "category": "Others"},
]


def make_hit(hit_id, conv_id, texts):
    return {
        "hit_id": hit_id,
        "conv_id": conv_id,
        "chunk_index": 0,
        "turns": [{
            "turn_index": 0,
            "speaker": "A",
            "tokens": [{"position": p, "text": t} for p, t in enumerate(texts)],
        }],
    }


def work(svc, worker, answer_for):
    """Pull HITs until none are available, answering with answer_for(hit)."""
    while True:
        try:
            got = svc.next_hit(worker)
        except UnqualifiedWorker as e:
            print(f"  {worker}: turned away ({e})")
            return
        if got is None:
            return
        hit = got["hit"]
        outcome = svc.submit(worker, hit["hit_id"], answer_for(hit), elapsed=75.0)
        note = ""
        if "f1" in outcome:
            note = f"  [scored F1={outcome['f1']:.2f}" + \
                (", excluded]" if outcome.get("excluded") else "]")
        print(f"  {worker}: submitted {hit['hit_id']}{note}")


def main() -> None:
    log = Path(tempfile.mkdtemp()) / "service.jsonl"
    svc = AnnotationService(str(log))
    texts = ["uh", "um", "we", "went", "home", "fine"]
    svc.create_batch({
        "batch_id": "demo-batch",
        "hits": [make_hit("qual", "qualconv", texts),
                 make_hit("cp", "cpconv", texts),
                 make_hit("h1", "conv1", texts),
                 make_hit("h2", "conv2", texts)],
        "checkpoints": [
            {"hit_id": "qual", "role": "qualification", "gold": GOLD},
            {"hit_id": "cp", "gold": GOLD},
        ],
    })

    careful = lambda hit: GOLD  # noqa: E731
    careless = lambda hit: [{"turn": 0, "position": 4, "category": "ThinkAloud"}]  # noqa: E731

    print("== careless worker games the qualification, then gets caught ==")
    svc.next_hit("mallory")
    svc.submit("mallory", "qual", GOLD, elapsed=20.0)  # copies the example answer
    work(svc, "mallory", careless)

    print("\n== diligent workers fill the batch ==")
    for w in ("alice", "bob"):
        svc.next_hit(w)
        svc.submit(w, "qual", GOLD, elapsed=60.0)
        work(svc, w, careful)

    print("\n== state after the dust settles ==")
    print(f"  mallory excluded: {svc.worker_info('mallory')['excluded']}")
    print(f"  repost queue: {svc.repost_queue()}")
    export = svc.export_labels()
    for ls in export["labels"]:
        print(f"  {ls['conv_id']}: {len(ls['removals'])} aggregated removals")
    print(f"  unlabeled turns: {export['unlabeled_turns']}")

    print("\n== durability: replaying the command log ==")
    svc.close()
    revived = AnnotationService(str(log))
    same = revived.export_labels() == export
    print(f"  {len(revived.submissions)} submissions recovered; exports identical: {same}")
    revived.close()


if __name__ == "__main__":
    main()
