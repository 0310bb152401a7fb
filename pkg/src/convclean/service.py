"""Annotation service: batch posting, HIT assignment, submission storage,
checkpoint-based quality gating, and aggregated export.

State lives in memory behind a single lock; every accepted mutation is
appended (with fsync) to a JSONL command log before the call returns, and
a restart replays the log. Checkpoint HITs look exactly like normal HITs
to clients; gold stays server-side.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .model import Category, token_id
from .quality import (
    Annotation,
    WorkerRecord,
    aggregate_best_worker,
    token_prf,
    worker_analytics,
    UnlabeledTurn,
)

DEFAULT_LEASE_SECONDS = 30 * 60  # ~3 min/HIT median, 10x headroom


class ServiceError(Exception):
    status = 400


class UnqualifiedWorker(ServiceError):
    status = 403


class NoActiveLease(ServiceError):
    status = 409


class SpanMismatch(ServiceError):
    status = 422

    def __init__(self, diff: list[str]):
        self.diff = diff
        super().__init__(f"labels outside the HIT span: {diff[:10]}")


class DuplicateBatch(ServiceError):
    status = 409


@dataclass
class HitRecord:
    hit_id: str
    batch_id: str
    conv_id: str
    chunk_index: int
    turns: list[dict]  # [{"turn_index", "speaker", "tokens": [{"position", "text"}]}]
    order: int  # serving-order position within the batch
    role: str = "normal"  # normal | checkpoint | qualification
    gold: Optional[dict[str, Category]] = None

    @property
    def token_ids(self) -> tuple[str, ...]:
        return tuple(
            token_id(self.conv_id, t["turn_index"], tok["position"])
            for t in self.turns
            for tok in t["tokens"]
        )

    def payload(self) -> dict:
        # byte-identical shape whether or not gold-backed
        return {
            "hit_id": self.hit_id,
            "conv_id": self.conv_id,
            "chunk_index": self.chunk_index,
            "turns": self.turns,
        }


@dataclass
class WorkerState:
    record: WorkerRecord
    assigned: set[str] = field(default_factory=set)  # every hit ever assigned
    leases: dict[str, float] = field(default_factory=dict)  # hit_id -> expiry
    submitted: set[str] = field(default_factory=set)


class AnnotationService:
    """Single-writer annotation store with an append-only command log."""

    def __init__(
        self,
        log_path: str,
        qualification_threshold: float = 0.3,
        min_annotations_per_hit: int = 2,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
    ):
        self.log_path = log_path
        self.threshold = qualification_threshold
        self.min_annotations = min_annotations_per_hit
        self.lease_seconds = lease_seconds
        self._lock = threading.RLock()
        self._log_fp = None
        self.batches: dict[str, list[str]] = {}  # batch_id -> ordered hit ids
        self.hits: dict[str, HitRecord] = {}
        self.workers: dict[str, WorkerState] = {}
        self.submissions: list[Annotation] = []
        self._replaying = False
        if os.path.exists(log_path):
            self._replay()
        self._log_fp = open(log_path, "a", encoding="utf-8")

    # --- persistence ---------------------------------------------------------

    def _append(self, record: dict) -> None:
        if self._replaying:
            return
        self._log_fp.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._log_fp.flush()
        os.fsync(self._log_fp.fileno())

    def _replay(self) -> None:
        self._replaying = True
        try:
            with open(self.log_path, encoding="utf-8") as fp:
                for line in fp:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    kind = rec["type"]
                    if kind == "batch":
                        self._apply_batch(rec["payload"])
                    elif kind == "assign":
                        self._apply_assign(rec["worker"], rec["hit"], rec["lease_until"])
                    elif kind == "submit":
                        self._apply_submit(
                            rec["worker"], rec["hit"], rec["removals"], rec["elapsed"], rec["ts"]
                        )
                    elif kind == "score":
                        self._apply_score(rec["worker"], rec["checkpoint"], rec["f1"], rec["passed"])
                    elif kind == "exclude":
                        self._apply_exclude(rec["worker"])
        finally:
            self._replaying = False

    def close(self) -> None:
        if self._log_fp:
            self._log_fp.close()
            self._log_fp = None

    # --- batches -------------------------------------------------------------

    def create_batch(self, payload: dict) -> dict:
        """Register a batch of HITs; checkpoints (gold-backed) are interleaved
        at seeded-random serving positions. Idempotency: re-posting an existing
        batch id is an error."""
        with self._lock:
            batch_id = payload["batch_id"]
            if batch_id in self.batches:
                raise DuplicateBatch(f"batch {batch_id!r} already exists")
            if not payload.get("hits"):
                raise ServiceError("batch needs at least one hit")
            ids = [h["hit_id"] for h in payload["hits"]]
            dup = {i for i in ids if ids.count(i) > 1} | (set(ids) & set(self.hits))
            if dup:
                raise ServiceError(f"duplicate hit ids: {sorted(dup)}")
            known = set(ids)
            for cp in payload.get("checkpoints", []):
                if cp["hit_id"] not in known:
                    raise ServiceError(f"checkpoint {cp['hit_id']!r} not in the manifest")
            self._apply_batch(payload)
            self._append({"type": "batch", "payload": payload})
            return {"batch_id": batch_id, "hits": len(ids)}

    def _apply_batch(self, payload: dict) -> None:
        batch_id = payload["batch_id"]
        roles: dict[str, tuple[str, dict[str, Category]]] = {}
        for cp in payload.get("checkpoints", []):
            gold = {
                token_id(self._hit_conv(payload, cp["hit_id"]), r["turn"], r["position"]): Category(r["category"])
                for r in cp["gold"]
            }
            roles[cp["hit_id"]] = (cp.get("role", "checkpoint"), gold)

        normal = [h for h in payload["hits"] if h["hit_id"] not in roles]
        special = [h for h in payload["hits"] if h["hit_id"] in roles]
        rng = random.Random(batch_id)
        order = list(normal)
        for h in special:
            order.insert(rng.randint(0, len(order)), h)

        self.batches[batch_id] = [h["hit_id"] for h in order]
        for pos, h in enumerate(order):
            role, gold = roles.get(h["hit_id"], ("normal", None))
            self.hits[h["hit_id"]] = HitRecord(
                hit_id=h["hit_id"],
                batch_id=batch_id,
                conv_id=h["conv_id"],
                chunk_index=h.get("chunk_index", 0),
                turns=h["turns"],
                order=pos,
                role=role,
                gold=gold,
            )

    @staticmethod
    def _hit_conv(payload: dict, hit_id: str) -> str:
        for h in payload["hits"]:
            if h["hit_id"] == hit_id:
                return h["conv_id"]
        raise ServiceError(f"checkpoint {hit_id!r} not in the manifest")

    # --- workers and assignment ---------------------------------------------

    def _worker(self, worker_id: str) -> WorkerState:
        state = self.workers.get(worker_id)
        if state is None:
            state = WorkerState(WorkerRecord(worker_id))
            self.workers[worker_id] = state
        return state

    def _annotation_count(self, hit_id: str) -> int:
        return sum(1 for a in self.submissions if a.hit_id == hit_id)

    def _counts(self) -> dict[str, int]:
        counts = {hid: 0 for hid in self.hits}
        for a in self.submissions:
            counts[a.hit_id] += 1
        return counts

    def _lease_counts(self, now: float) -> dict[str, int]:
        """Unexpired, unsubmitted leases per hit; counted against demand so
        concurrent workers do not over-annotate a HIT."""
        counts: dict[str, int] = {}
        for state in self.workers.values():
            for hid, expiry in state.leases.items():
                if expiry >= now:
                    counts[hid] = counts.get(hid, 0) + 1
        return counts

    def batch_state(self, batch_id: str) -> str:
        counts = self._counts()
        done = all(counts[hid] >= self.min_annotations for hid in self.batches[batch_id])
        return "closed" if done else "open"

    def next_hit(self, worker_id: str, now: Optional[float] = None) -> Optional[dict]:
        """Assign the neediest open HIT this worker has never seen.

        Unqualified workers get the qualification HIT (once). Checkpoint HITs
        the worker has not done yet are served first so every active worker
        gets measured."""
        now = now if now is not None else time.time()
        with self._lock:
            state = self._worker(worker_id)
            if state.record.excluded:
                raise UnqualifiedWorker(f"worker {worker_id!r} is excluded")
            if not state.record.qualified:
                qual = next(
                    (h for h in self.hits.values() if h.role == "qualification"), None
                )
                if qual is None or qual.hit_id in state.assigned:
                    raise UnqualifiedWorker(
                        f"worker {worker_id!r} has not passed qualification"
                    )
                return self._assign(state, qual, now)

            counts = self._counts()
            leases = self._lease_counts(now)
            open_batches = {b for b in self.batches if self.batch_state(b) == "open"}
            candidates = [
                h
                for h in self.hits.values()
                if h.batch_id in open_batches
                and h.role != "qualification"
                and h.hit_id not in state.assigned
                and (
                    h.role == "checkpoint"
                    or counts[h.hit_id] + leases.get(h.hit_id, 0) < self.min_annotations
                )
            ]
            if not candidates:
                return None
            candidates.sort(
                key=lambda h: (h.role != "checkpoint", counts[h.hit_id], h.batch_id, h.order)
            )
            return self._assign(state, candidates[0], now)

    def _assign(self, state: WorkerState, hit: HitRecord, now: float) -> dict:
        lease_until = now + self.lease_seconds
        self._apply_assign(state.record.worker_id, hit.hit_id, lease_until)
        self._append(
            {"type": "assign", "worker": state.record.worker_id, "hit": hit.hit_id,
             "ts": now, "lease_until": lease_until}
        )
        return {"hit": hit.payload(), "lease_until": lease_until}

    def _apply_assign(self, worker_id: str, hit_id: str, lease_until: float) -> None:
        state = self._worker(worker_id)
        state.assigned.add(hit_id)
        state.leases[hit_id] = lease_until

    # --- submission ----------------------------------------------------------

    def submit(
        self,
        worker_id: str,
        hit_id: str,
        removals: list[dict],
        elapsed: float,
        now: Optional[float] = None,
    ) -> dict:
        """Store a submission; checkpoint HITs trigger scoring and, on a
        sub-threshold F1, immediate exclusion, purge, and repost."""
        now = now if now is not None else time.time()
        with self._lock:
            state = self._worker(worker_id)
            hit = self.hits.get(hit_id)
            if hit is None:
                raise ServiceError(f"unknown hit {hit_id!r}")
            lease = state.leases.get(hit_id)
            if lease is None or hit_id in state.submitted:
                raise NoActiveLease(f"no active lease on {hit_id!r}")
            if lease < now:
                raise NoActiveLease(f"lease on {hit_id!r} expired")
            span = set(hit.token_ids)
            parsed = {
                token_id(hit.conv_id, r["turn"], r["position"]): Category(r["category"])
                for r in removals
            }
            bad = sorted(set(parsed) - span)
            if bad:
                raise SpanMismatch(bad)

            self._apply_submit(worker_id, hit_id, removals, elapsed, now)
            self._append(
                {"type": "submit", "worker": worker_id, "hit": hit_id,
                 "removals": removals, "elapsed": elapsed, "ts": now}
            )
            outcome: dict = {"accepted": True}

            if hit.role in ("qualification", "checkpoint"):
                report = token_prf(set(parsed), set(hit.gold or {}), span)
                passed = report.f1 >= self.threshold
                self._apply_score(worker_id, hit_id, report.f1, passed)
                self._append(
                    {"type": "score", "worker": worker_id, "checkpoint": hit_id,
                     "f1": report.f1, "passed": passed}
                )
                outcome["f1"] = report.f1
                if hit.role == "qualification":
                    outcome["qualified"] = passed
                elif not passed:
                    self._apply_exclude(worker_id)
                    self._append({"type": "exclude", "worker": worker_id})
                    outcome["excluded"] = True
            return outcome

    def _apply_submit(
        self, worker_id: str, hit_id: str, removals: list[dict], elapsed: float, ts: float
    ) -> None:
        state = self._worker(worker_id)
        hit = self.hits[hit_id]
        parsed = {
            token_id(hit.conv_id, r["turn"], r["position"]): Category(r["category"])
            for r in removals
        }
        self.submissions.append(
            Annotation(worker_id, hit_id, parsed, hit.token_ids, ts, elapsed)
        )
        state.submitted.add(hit_id)
        state.leases.pop(hit_id, None)
        state.record.hit_count += 1
        state.record.elapsed_times.append(elapsed)

    def _apply_score(self, worker_id: str, checkpoint: str, f1: float, passed: bool) -> None:
        state = self._worker(worker_id)
        hit = self.hits.get(checkpoint)
        state.record.f1_history.append((checkpoint, f1))
        if hit is not None and hit.role == "qualification":
            state.record.qualified = passed

    def _apply_exclude(self, worker_id: str) -> None:
        state = self._worker(worker_id)
        state.record.qualified = False
        state.record.excluded = True
        # purge: deficient HITs reopen automatically since counts derive
        # from the live submission list
        self.submissions = [a for a in self.submissions if a.worker_id != worker_id]

    # --- queries and exports -------------------------------------------------

    def worker_info(self, worker_id: str) -> dict:
        with self._lock:
            state = self.workers.get(worker_id)
            if state is None:
                raise ServiceError(f"unknown worker {worker_id!r}")
            r = state.record
            return {
                "worker_id": r.worker_id,
                "qualified": r.qualified,
                "excluded": r.excluded,
                "mean_f1": r.mean_f1,
                "hit_count": r.hit_count,
                "f1_history": [{"checkpoint": c, "f1": f} for c, f in r.f1_history],
            }

    def repost_queue(self) -> list[str]:
        with self._lock:
            counts = self._counts()
            return sorted(
                hid for hid, n in counts.items()
                if n < self.min_annotations and self.hits[hid].role != "qualification"
            )

    def export_labels(self) -> dict:
        """Best-worker aggregation per turn, in the label file shape.

        Turns no annotation covers are reported, not fatal."""
        with self._lock:
            records = {w: s.record for w, s in self.workers.items()}
            # conversation turn structure from hit payloads
            conv_turns: dict[str, dict[int, list[str]]] = {}
            for hit in self.hits.values():
                if hit.role == "qualification":
                    continue
                turns = conv_turns.setdefault(hit.conv_id, {})
                for t in hit.turns:
                    turns[t["turn_index"]] = [
                        token_id(hit.conv_id, t["turn_index"], tok["position"])
                        for tok in t["tokens"]
                    ]
            usable = [
                a for a in self.submissions
                if not self.workers[a.worker_id].record.excluded
                and self.hits[a.hit_id].role != "qualification"
            ]
            labels = []
            unlabeled = []
            for conv_id, turns in sorted(conv_turns.items()):
                removals = []
                for turn_index, tids in sorted(turns.items()):
                    covering = [a for a in usable if set(tids) <= set(a.token_ids)]
                    try:
                        turn_labels = aggregate_best_worker(
                            tids, covering, records, conv_id, turn_index
                        )
                    except UnlabeledTurn:
                        unlabeled.append({"conv_id": conv_id, "turn": turn_index})
                        continue
                    for tid in sorted(turn_labels, key=lambda t: int(t.rsplit(":", 1)[1])):
                        _, pos = tid.rsplit(":", 1)
                        removals.append(
                            {"turn": turn_index, "position": int(pos),
                             "category": turn_labels[tid].value}
                        )
                labels.append({"conv_id": conv_id, "source": "gold", "removals": removals})
            return {"labels": labels, "unlabeled_turns": unlabeled}

    def export_analytics(self) -> dict:
        with self._lock:
            records = [s.record for s in self.workers.values()]
            return worker_analytics(records, self.threshold).to_obj()


# --- HTTP surface ------------------------------------------------------------


def create_app(service: AnnotationService):
    """FastAPI app exposing the /v1 JSON API."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="convclean annotation service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        body = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, SpanMismatch):
            body["diff"] = exc.diff
        return JSONResponse(status_code=exc.status, content=body)

    @app.post("/v1/batches")
    def post_batch(payload: dict):
        return service.create_batch(payload)

    @app.get("/v1/hits/next")
    def get_next(worker: str):
        result = service.next_hit(worker)
        return result if result is not None else {"hit": None}

    @app.post("/v1/hits/{hit_id}/submit")
    def post_submit(hit_id: str, payload: dict):
        return service.submit(
            payload["worker_id"], hit_id, payload.get("removals", []),
            float(payload.get("elapsed_seconds", 0.0)),
        )

    @app.get("/v1/workers/{worker_id}")
    def get_worker(worker_id: str):
        return service.worker_info(worker_id)

    @app.get("/v1/exports/labels")
    def get_labels():
        return service.export_labels()

    @app.get("/v1/exports/analytics")
    def get_analytics():
        return service.export_analytics()

    return app
