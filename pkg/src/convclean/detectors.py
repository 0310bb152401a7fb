"""Detector abstraction and concrete detectors.

Detectors map a token sequence (with turn boundaries) to one removal label
per token. Three families ship here: a gold-replaying oracle, simple
category-aligned heuristics, and an adapter that talks a line protocol to
an external model process.

External protocol, one line per chunk, UTF-8, newline-terminated:
  request: tab-separated token texts, turns demarcated by the literal
           token ``[SEP]``;
  reply:   space-separated labels from {0,1} or {0,A,R,T,I,O}.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .chunking import TokenLabel
from .model import Category, LabelSet

SEP = "[SEP]"
PROTOCOL_VERSION = 1


class DetectorError(Exception):
    pass


class OverlongInput(DetectorError):
    def __init__(self, length: int, max_seq: int):
        super().__init__(f"input of {length} tokens exceeds max_seq {max_seq}")


class ExternalProtocolError(DetectorError):
    def __init__(self, chunk_id: str, detail: str):
        self.chunk_id = chunk_id
        super().__init__(f"external detector failed on chunk {chunk_id!r}: {detail}")


@dataclass(frozen=True)
class TurnView:
    """One turn as a detector sees it: speaker plus aligned ids and texts."""

    speaker: str
    token_ids: tuple[str, ...]
    texts: tuple[str, ...]


@dataclass(frozen=True)
class DetectorInput:
    """A chunk (or single slash unit) handed to a detector."""

    chunk_id: str
    turns: tuple[TurnView, ...]

    @property
    def token_ids(self) -> tuple[str, ...]:
        return tuple(tid for t in self.turns for tid in t.token_ids)

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(tx for t in self.turns for tx in t.texts)

    def __len__(self) -> int:
        return sum(len(t.token_ids) for t in self.turns)


@dataclass(frozen=True)
class DetectorSpec:
    kind: str  # oracle | heuristic:<name> | external:<command>
    scope: str  # single_turn | multi_turn
    max_seq: int


class Detector:
    """Base class; subclasses implement _predict and stay stateless per call."""

    spec: DetectorSpec

    def detect(self, chunk: DetectorInput) -> list[TokenLabel]:
        n = len(chunk)
        if n > self.spec.max_seq:
            raise OverlongInput(n, self.spec.max_seq)
        labels = self._predict(chunk)
        if len(labels) != n:
            raise DetectorError(
                f"detector returned {len(labels)} labels for {n} tokens on {chunk.chunk_id}"
            )
        return labels

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        raise NotImplementedError


class OracleDetector(Detector):
    """Replays gold labels restricted to the chunk. Categories pass through."""

    def __init__(self, gold: dict[str, LabelSet], scope: str = "multi_turn", max_seq: int = 512):
        self.gold = gold
        self.spec = DetectorSpec("oracle", scope, max_seq)

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        out = []
        for tid in chunk.token_ids:
            conv_id = tid.rsplit(":", 2)[0]
            ls = self.gold.get(conv_id)
            cat = ls.removals.get(tid) if ls else None
            out.append(TokenLabel(cat is not None, cat))
        return out


class NegativeDetector(Detector):
    """Labels everything keep; the degenerate lower bound."""

    def __init__(self, scope: str = "multi_turn", max_seq: int = 512):
        self.spec = DetectorSpec("heuristic:negative", scope, max_seq)

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        return [TokenLabel(False)] * len(chunk)


def _normalize(word: str) -> str:
    return word.lower().rstrip(".,!?")


def load_ack_lexicon(path: Optional[str] = None) -> frozenset[str]:
    if path is not None:
        text = open(path, encoding="utf-8").read()
    else:
        text = resources.files("convclean.data").joinpath("ack_lexicon.txt").read_text("utf-8")
    entries = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(_normalize(line))
    return frozenset(entries)


class AcknowledgmentHeuristic(Detector):
    """Flags single-token backchannel turns sandwiched between two turns of
    the same other speaker."""

    def __init__(self, lexicon: Optional[frozenset[str]] = None, max_seq: int = 512):
        self.lexicon = lexicon if lexicon is not None else load_ack_lexicon()
        self.spec = DetectorSpec("heuristic:acknowledgment", "multi_turn", max_seq)

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        marked: set[str] = set()
        turns = chunk.turns
        for i in range(1, len(turns) - 1):
            turn = turns[i]
            if len(turn.texts) != 1:
                continue
            if _normalize(turn.texts[0]) not in self.lexicon:
                continue
            if turns[i - 1].speaker == turns[i + 1].speaker != turn.speaker:
                marked.update(turn.token_ids)
        return [
            TokenLabel(True, Category.ACKNOWLEDGMENT_CONFIRMATION) if tid in marked else TokenLabel(False)
            for tid in chunk.token_ids
        ]


class RepetitionHeuristic(Detector):
    """Flags the first occurrence of a maximal n-gram (n >= min_n) repeated
    verbatim by the same speaker within a window of 2 turns."""

    MAX_N = 24  # repeats longer than this do not occur in practice

    def __init__(self, min_n: int = 3, window: int = 2, max_seq: int = 512):
        self.min_n = min_n
        self.window = window
        self.spec = DetectorSpec("heuristic:repetition", "multi_turn", max_seq)

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        flat: list[tuple[int, str, str, str]] = []  # (turn, speaker, id, text)
        for ti, turn in enumerate(chunk.turns):
            for tid, tx in zip(turn.token_ids, turn.texts):
                flat.append((ti, turn.speaker, tid, tx))
        marked: set[str] = set()
        covered: set[int] = set()
        top = min(self.MAX_N, len(flat))
        for n in range(top, self.min_n - 1, -1):
            occurrences: dict[tuple[str, ...], list[int]] = {}
            for a in range(len(flat) - n + 1):
                gram = tuple(flat[a + k][3] for k in range(n))
                occurrences.setdefault(gram, []).append(a)
            for positions in occurrences.values():
                if len(positions) < 2:
                    continue
                for ai, a in enumerate(positions):
                    if any(p in covered for p in range(a, a + n)):
                        continue
                    hit = next(
                        (
                            b
                            for b in positions[ai + 1 :]
                            if b >= a + n  # occurrences must not overlap
                            and flat[a][1] == flat[b][1]
                            and abs(flat[b][0] - flat[a][0]) <= self.window
                        ),
                        None,
                    )
                    if hit is not None:
                        for p in range(a, a + n):
                            marked.add(flat[p][2])
                            covered.add(p)
        return [
            TokenLabel(True, Category.REPETITION_PARAPHRASE) if tid in marked else TokenLabel(False)
            for tid in chunk.token_ids
        ]


class HeuristicBundle(Detector):
    """Runs several detectors and OR-merges their labels; the first detector
    to mark a token supplies its category."""

    def __init__(self, detectors: Sequence[Detector], max_seq: int = 512):
        self.detectors = list(detectors)
        self.spec = DetectorSpec("heuristic:bundle", "multi_turn", max_seq)

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        merged = [TokenLabel(False)] * len(chunk)
        for det in self.detectors:
            for i, lbl in enumerate(det.detect(chunk)):
                if lbl.removed and not merged[i].removed:
                    merged[i] = lbl
        return merged


def default_heuristic_bundle(max_seq: int = 512) -> HeuristicBundle:
    return HeuristicBundle([AcknowledgmentHeuristic(max_seq=max_seq), RepetitionHeuristic(max_seq=max_seq)], max_seq=max_seq)


# --- external adapter --------------------------------------------------------


def encode_request_line(chunk: DetectorInput) -> str:
    parts: list[str] = []
    for i, turn in enumerate(chunk.turns):
        if i > 0:
            parts.append(SEP)
        parts.extend(turn.texts)
    return "\t".join(parts)


def decode_reply_line(line: str, chunk: DetectorInput) -> list[TokenLabel]:
    fields = line.split()
    n = len(chunk)
    if len(fields) != n:
        raise ExternalProtocolError(
            chunk.chunk_id, f"expected {n} labels, got {len(fields)}"
        )
    labels = []
    for f in fields:
        if f == "0":
            labels.append(TokenLabel(False))
        elif f == "1":
            labels.append(TokenLabel(True))
        else:
            try:
                labels.append(TokenLabel(True, Category.from_code(f)))
            except ValueError:
                raise ExternalProtocolError(chunk.chunk_id, f"bad label {f!r}") from None
    return labels


class ExternalDetector(Detector):
    """Bridges to a subprocess speaking the line protocol.

    The child receives all request lines on stdin and must answer exactly
    one reply line per request. Word-level labels are the child's contract;
    subword projection is its problem."""

    def __init__(
        self,
        command: Sequence[str],
        scope: str = "multi_turn",
        max_seq: int = 512,
        timeout: float = 60.0,
    ):
        self.command = list(command)
        self.timeout = timeout
        self.spec = DetectorSpec(f"external:{' '.join(command)}", scope, max_seq)

    def detect_batch(self, chunks: Sequence[DetectorInput]) -> list[list[TokenLabel]]:
        for chunk in chunks:
            if len(chunk) > self.spec.max_seq:
                raise OverlongInput(len(chunk), self.spec.max_seq)
        request = "".join(encode_request_line(c) + "\n" for c in chunks)
        first_id = chunks[0].chunk_id if chunks else "<empty>"
        try:
            proc = subprocess.run(
                self.command,
                input=request.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            raise ExternalProtocolError(first_id, f"timeout after {self.timeout}s") from None
        except OSError as e:
            raise ExternalProtocolError(first_id, f"failed to start: {e}") from None
        if proc.returncode != 0:
            raise ExternalProtocolError(
                first_id, f"exit code {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:200]}"
            )
        lines = proc.stdout.decode("utf-8").splitlines()
        if len(lines) != len(chunks):
            raise ExternalProtocolError(
                first_id, f"expected {len(chunks)} reply lines, got {len(lines)}"
            )
        return [decode_reply_line(line, chunk) for line, chunk in zip(lines, chunks)]

    def _predict(self, chunk: DetectorInput) -> list[TokenLabel]:
        return self.detect_batch([chunk])[0]


def external_roundtrip(
    command: Sequence[str], chunks: Sequence[DetectorInput], **kwargs
) -> list[list[TokenLabel]]:
    return ExternalDetector(command, **kwargs).detect_batch(chunks)
