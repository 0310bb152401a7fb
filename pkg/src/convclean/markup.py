"""Parser and preprocessor for Treebank-3 style disfluency markup.

Grammar, over whitespace-separated tokens of one slash unit:

    edited      := '[' seq '+' ( curly )* seq? ']'
    curly       := ('{' | '{D' | '{E' | '{F') seq '}'
    seq         := ( word | edited | curly | marker )*

Everything that is not structural markup is classified as a leaf: plain
words, noise markers (``<<laughter>>``, ``{breathing}``, ``(laughter)``),
angle markers (``<English bike>``), double-paren uncertainty groups
(``((yesterday))``), plus-marked words (``+sight-seeing+``), prosodic
symbols (``#``, ``/``), and a fixed list of stray punctuation tokens.

Cleanup happens in two stages: :func:`strip_markers` drops the non-speech
leaves, then :func:`remove_disfluencies` recursively deletes reparanda and
interregna while keeping repairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .model import Conversation, build_conversation

PROSODIC_SYMBOLS = {"#", "/"}
STRAY_PUNCTUATION = {"%", "**", "&", "/>", "+>", "<]>", "()", "((", "))", "[[", "]]"}
CURLY_OPENERS = {"{", "{D", "{E", "{F"}


class MarkupError(Exception):
    """Base class for markup parse failures. Carries a character position."""

    def __init__(self, position: int, message: str):
        self.position = position
        super().__init__(f"{message} (at char {position})")


class UnbalancedBracket(MarkupError):
    def __init__(self, position: int):
        super().__init__(position, "unbalanced '[' / ']'")


class UnbalancedBrace(MarkupError):
    def __init__(self, position: int):
        super().__init__(position, "unbalanced '{' / '}'")


class StrayInterruptionPoint(MarkupError):
    def __init__(self, position: int):
        super().__init__(position, "'+' outside an edited region")


class MissingInterruptionPoint(MarkupError):
    def __init__(self, position: int):
        super().__init__(position, "edited region closed before its '+'")


Span = tuple[int, int]
NO_SPAN: Span = (-1, -1)


@dataclass(frozen=True)
class Word:
    text: str
    span: Span = NO_SPAN


@dataclass(frozen=True)
class Edited:
    reparandum: tuple["Node", ...]
    interregnum: tuple["Node", ...]
    repair: tuple["Node", ...]
    span: Span = NO_SPAN


@dataclass(frozen=True)
class Interregnum:
    kind: str  # 'D' | 'E' | 'F' | 'unknown'
    children: tuple["Node", ...]
    span: Span = NO_SPAN


@dataclass(frozen=True)
class NoiseMarker:
    raw: str
    span: Span = NO_SPAN


@dataclass(frozen=True)
class AngleMarker:
    raw: str
    span: Span = NO_SPAN


@dataclass(frozen=True)
class DoubleParen:
    children: tuple["Node", ...]
    span: Span = NO_SPAN


@dataclass(frozen=True)
class PlusMarked:
    text: str
    span: Span = NO_SPAN


@dataclass(frozen=True)
class ProsodicSymbol:
    symbol: str
    span: Span = NO_SPAN


Node = Union[Word, Edited, Interregnum, NoiseMarker, AngleMarker, DoubleParen, PlusMarked, ProsodicSymbol]


@dataclass
class CleanupTrace:
    """Character-span provenance for one cleaned slash unit.

    ``kept`` holds the source span of each output token in order; ``removed``
    holds (span, reason) for everything deleted. Reasons: reparandum,
    interregnum, noise, prosodic, angle, plus, punctuation-symbol,
    double-paren-syntax.
    """

    kept: list[Span] = field(default_factory=list)
    removed: list[tuple[Span, str]] = field(default_factory=list)

    @property
    def kept_count(self) -> int:
        return len(self.kept)


# --- tokenization ------------------------------------------------------------


_TOKEN_RE = re.compile(r"\S+")


def _lex(raw: str) -> list[tuple[str, Span]]:
    return [(m.group(), (m.start(), m.end())) for m in _TOKEN_RE.finditer(raw)]


# --- parser ------------------------------------------------------------------


_STOP_NONE: frozenset[str] = frozenset()
_STOP_PLUS_OR_CLOSE = frozenset({"+", "]"})
_STOP_CLOSE_BRACKET = frozenset({"]"})
_STOP_CLOSE_BRACE = frozenset({"}"})


class _Parser:
    def __init__(self, raw: str):
        self.toks = _lex(raw)
        self.i = 0

    def peek(self) -> Optional[tuple[str, Span]]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> tuple[str, Span]:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self) -> tuple[Node, ...]:
        nodes = self._sequence(stop=_STOP_NONE)
        if self.peek() is not None:
            text, span = self.peek()
            if text == "]":
                raise UnbalancedBracket(span[0])
            if text == "}":
                raise UnbalancedBrace(span[0])
            raise MarkupError(span[0], f"unexpected token {text!r}")
        return nodes

    def _sequence(self, stop: frozenset[str]) -> tuple[Node, ...]:
        nodes: list[Node] = []
        toks, n = self.toks, len(self.toks)
        while True:
            i = self.i
            if i >= n:
                return tuple(nodes)
            text, span = toks[i]
            if text in stop:
                return tuple(nodes)
            if text == "[":
                nodes.append(self._edited())
            elif text in CURLY_OPENERS:
                nodes.append(self._curly())
            elif text == "]":
                raise UnbalancedBracket(span[0])
            elif text == "}":
                raise UnbalancedBrace(span[0])
            elif text == "+":
                raise StrayInterruptionPoint(span[0])
            else:
                nodes.append(self._leaf())

    def _edited(self) -> Edited:
        open_text, open_span = self.next()  # '['
        reparandum = self._sequence(stop=_STOP_PLUS_OR_CLOSE)
        nxt = self.peek()
        if nxt is None:
            raise UnbalancedBracket(open_span[0])
        if nxt[0] == "]":
            raise MissingInterruptionPoint(nxt[1][0])
        self.next()  # '+'
        after = self._sequence(stop=_STOP_CLOSE_BRACKET)
        nxt = self.peek()
        if nxt is None:
            raise UnbalancedBracket(open_span[0])
        _, close_span = self.next()  # ']'
        # leading curly groups after '+' are the interregnum; the rest repairs
        k = 0
        while k < len(after) and isinstance(after[k], Interregnum):
            k += 1
        return Edited(
            reparandum=reparandum,
            interregnum=after[:k],
            repair=after[k:],
            span=(open_span[0], close_span[1]),
        )

    def _curly(self) -> Interregnum:
        open_text, open_span = self.next()
        kind = open_text[1:] if len(open_text) > 1 else "unknown"
        children = self._sequence(stop=_STOP_CLOSE_BRACE)
        if self.peek() is None:
            raise UnbalancedBrace(open_span[0])
        _, close_span = self.next()  # '}'
        return Interregnum(kind, children, span=(open_span[0], close_span[1]))

    def _leaf(self) -> Node:
        text, span = self.next()
        if text in STRAY_PUNCTUATION or text in PROSODIC_SYMBOLS:
            # '((' may open a spaced uncertainty group; prefer that reading
            # when a matching '))' follows.
            if text == "((" and self._find_ahead("))") is not None:
                return self._double_paren_group(span)
            return ProsodicSymbol(text, span)
        if text.startswith("((") and text.endswith("))") and len(text) > 4:
            inner = text[2:-2]
            return DoubleParen((Word(inner, span),), span)
        if text.startswith("<<"):
            return self._scan_run(text, span, ">>", NoiseMarker)
        if text.startswith("<"):
            return self._scan_run(text, span, ">", AngleMarker)
        if text.startswith("{"):
            # attached-brace noise like {breathing} or {again, imitates ...}
            return self._scan_run(text, span, "}", NoiseMarker)
        if text.startswith("(") and text.endswith(")") and len(text) > 2:
            return NoiseMarker(text, span)
        if text.startswith("+") and text.endswith("+") and len(text) > 2:
            return PlusMarked(text[1:-1], span)
        return Word(text, span)

    def _find_ahead(self, needle: str) -> Optional[int]:
        for j in range(self.i, len(self.toks)):
            if self.toks[j][0] == needle:
                return j
        return None

    def _double_paren_group(self, open_span: Span) -> DoubleParen:
        children: list[Node] = []
        while True:
            if self.peek() is None:
                return DoubleParen(tuple(children), open_span)
            text, span = self.next()
            if text == "))":
                return DoubleParen(tuple(children), (open_span[0], span[1]))
            children.append(Word(text, span))

    def _scan_run(self, first: str, first_span: Span, closer: str, cls) -> Node:
        """Consume follow-on tokens until one ends with ``closer``; the whole
        run becomes a single marker leaf (handles multi-word angle/noise)."""
        parts = [first]
        end = first_span[1]
        while not parts[-1].endswith(closer):
            if self.peek() is None:
                break
            text, span = self.next()
            parts.append(text)
            end = span[1]
        return cls(" ".join(parts), (first_span[0], end))


def parse_markup(raw: str) -> tuple[Node, ...]:
    """Parse one slash unit's markup into a node sequence.

    Unmatched brackets raise, rather than being silently repaired."""
    return _Parser(raw).parse()


# --- marker stripping --------------------------------------------------------


_MARKER_REASONS = {
    NoiseMarker: "noise",
    AngleMarker: "angle",
    PlusMarked: "plus",
    DoubleParen: "double-paren-syntax",
}


def _marker_reason(node: Node) -> Optional[str]:
    reason = _MARKER_REASONS.get(type(node))
    if reason is not None:
        return reason
    if type(node) is ProsodicSymbol:
        return "prosodic" if node.symbol in PROSODIC_SYMBOLS else "punctuation-symbol"
    return None


def strip_markers(
    nodes: Sequence[Node],
    trace: Optional[CleanupTrace] = None,
    keep_uncertain_words: bool = False,
) -> tuple[Node, ...]:
    """Drop non-speech leaves, recursing into edited regions and interregna.

    With ``keep_uncertain_words`` the inner words of double-paren uncertainty
    groups survive (the markers themselves never do)."""
    out: list[Node] = []
    for node in nodes:
        reason = _marker_reason(node)
        if reason is not None:
            if isinstance(node, DoubleParen) and keep_uncertain_words:
                out.extend(strip_markers(node.children, trace, keep_uncertain_words))
                continue
            if trace is not None and node.span != NO_SPAN:
                trace.removed.append((node.span, reason))
            continue
        if isinstance(node, Edited):
            out.append(
                Edited(
                    strip_markers(node.reparandum, trace, keep_uncertain_words),
                    strip_markers(node.interregnum, trace, keep_uncertain_words),
                    strip_markers(node.repair, trace, keep_uncertain_words),
                    node.span,
                )
            )
        elif isinstance(node, Interregnum):
            out.append(
                Interregnum(node.kind, strip_markers(node.children, trace, keep_uncertain_words), node.span)
            )
        else:
            out.append(node)
    return tuple(out)


# --- disfluency removal ------------------------------------------------------


def _collect_removed(nodes: Sequence[Node], reason: str, trace: CleanupTrace) -> None:
    for node in nodes:
        if isinstance(node, Word):
            trace.removed.append((node.span, reason))
        elif isinstance(node, Edited):
            _collect_removed(node.reparandum, reason, trace)
            _collect_removed(node.interregnum, "interregnum", trace)
            _collect_removed(node.repair, reason, trace)
        elif isinstance(node, Interregnum):
            _collect_removed(node.children, "interregnum", trace)
        else:
            r = _marker_reason(node)
            trace.removed.append((node.span, r or reason))


def remove_disfluencies(
    nodes: Sequence[Node], trace: Optional[CleanupTrace] = None
) -> tuple[list[Word], CleanupTrace]:
    """Recursively delete reparanda and interregna; keep repairs and words.

    Returns the kept words in source order plus the cleanup trace."""
    if trace is None:
        trace = CleanupTrace()
    kept: list[Word] = []
    _remove_into(nodes, kept, trace)
    return kept, trace


def _remove_into(nodes: Sequence[Node], kept: list[Word], trace: CleanupTrace) -> None:
    for node in nodes:
        if isinstance(node, Word):
            kept.append(node)
            trace.kept.append(node.span)
        elif isinstance(node, Edited):
            _collect_removed(node.reparandum, "reparandum", trace)
            _collect_removed(node.interregnum, "interregnum", trace)
            _remove_into(node.repair, kept, trace)
        elif isinstance(node, Interregnum):
            _collect_removed(node.children, "interregnum", trace)
        else:
            # marker leaf that survived stripping (caller skipped strip stage)
            r = _marker_reason(node)
            trace.removed.append((node.span, r or "noise"))


def clean_slash_unit(
    raw: str, keep_uncertain_words: bool = False
) -> tuple[list[str], CleanupTrace]:
    """parse -> strip -> remove for one slash unit; returns kept token texts."""
    trace = CleanupTrace()
    nodes = parse_markup(raw)
    nodes = strip_markers(nodes, trace, keep_uncertain_words)
    kept, trace = remove_disfluencies(nodes, trace)
    return [w.text for w in kept], trace


# --- conversation-level preprocessing ---------------------------------------


@dataclass(frozen=True)
class RawTurn:
    speaker: str
    slash_units: tuple[str, ...]


@dataclass(frozen=True)
class RawConversation:
    conv_id: str
    turns: tuple[RawTurn, ...]
    split: str = "unsplit"


class PreprocessError(Exception):
    """Wraps a MarkupError with its conversation coordinates."""

    def __init__(self, conv_id: str, turn: int, slash_unit: int, cause: MarkupError):
        self.conv_id = conv_id
        self.turn = turn
        self.slash_unit = slash_unit
        self.cause = cause
        super().__init__(
            f"{conv_id} turn {turn} slash unit {slash_unit}: {cause}"
        )


def preprocess_conversation(
    raw: RawConversation, keep_uncertain_words: bool = False
) -> tuple[Conversation, list[CleanupTrace]]:
    """Clean every slash unit of a raw conversation.

    Slash units that clean to nothing are dropped; turns left empty are
    dropped and turn indices re-densified. Traces are returned in input
    order, including those of dropped units."""
    traces: list[CleanupTrace] = []
    turns: list[tuple[str, list[list[str]]]] = []
    for ti, rturn in enumerate(raw.turns):
        sus: list[list[str]] = []
        for si, su_raw in enumerate(rturn.slash_units):
            try:
                tokens, trace = clean_slash_unit(su_raw, keep_uncertain_words)
            except MarkupError as e:
                raise PreprocessError(raw.conv_id, ti, si, e) from e
            traces.append(trace)
            if tokens:
                sus.append(tokens)
        if sus:
            turns.append((rturn.speaker, sus))
    return build_conversation(raw.conv_id, turns, raw.split), traces


def raw_conversation_from_obj(obj: dict) -> RawConversation:
    return RawConversation(
        obj["conv_id"],
        tuple(RawTurn(t["speaker"], tuple(t["slash_units"])) for t in obj["turns"]),
        obj.get("split", "unsplit"),
    )


def raw_conversation_to_obj(raw: RawConversation) -> dict:
    return {
        "conv_id": raw.conv_id,
        "split": raw.split,
        "turns": [
            {"speaker": t.speaker, "slash_units": list(t.slash_units)} for t in raw.turns
        ],
    }
