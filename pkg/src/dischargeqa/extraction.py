"""Event extraction, relation candidates, pair marking, and span scoring."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

import httpx

from .corpus import (
    RELATION_SIGNATURES,
    EventType,
    MedicalEvent,
    RelationType,
    Span,
    type_compliant_pairs,
)
from .errors import (
    ExtractorProtocolError,
    ExtractorUnavailable,
    InvalidPair,
    UnknownTypeError,
)
from .textutil import normalize_surface, sentence_enclosing

logger = logging.getLogger(__name__)


class DetailedEntityType(str, Enum):
    """Entity categories found in the detailed-instructions section."""

    MedicineDosage = "MedicineDosage"
    MedicineFrequency = "MedicineFrequency"
    MedicineDuration = "MedicineDuration"
    MedicationName = "MedicationName"
    SignSymptom = "SignSymptom"
    DiagnosticProcedure = "DiagnosticProcedure"
    UpcomingAppointment = "UpcomingAppointment"


# The entity kinds patients most often get wrong; cloze questions target these.
PRIORITY_DETAIL_TYPES = frozenset({
    DetailedEntityType.MedicineDosage,
    DetailedEntityType.MedicineFrequency,
    DetailedEntityType.MedicineDuration,
    DetailedEntityType.UpcomingAppointment,
})


@dataclass(frozen=True)
class DetailedEntity:
    """A typed span in a note's detailed-instructions section."""

    span: Span
    surface: str
    etype: DetailedEntityType

    @property
    def priority(self):
        return self.etype in PRIORITY_DETAIL_TYPES


# Four-letter marker codes used when a candidate pair is marked in text.
MARKER_CODES = {
    EventType.Disease: "dsyn",
    EventType.Symptom: "symp",
    EventType.Complication: "comp",
    EventType.Test: "test",
    EventType.TestGoal: "tsgl",
    EventType.TestResult: "tsrs",
    EventType.TestImplication: "tsim",
    EventType.Procedure: "proc",
    EventType.Medicine: "medi",
    EventType.TreatmentGoal: "trgl",
    EventType.TreatmentResult: "trrs",
}
CODE_TO_EVENT = {code: etype for etype, code in MARKER_CODES.items()}


@dataclass(frozen=True)
class PatternRule:
    """A regex rule that yields detailed entities; group selects the span."""

    etype: DetailedEntityType
    regex: re.Pattern
    group: int = 0


def default_detail_patterns():
    """Built-in rules for the four priority entity kinds plus drug names."""
    return [
        PatternRule(
            DetailedEntityType.MedicationName,
            re.compile(
                r"(?i:\b(?:called|start(?:ed)?|stop(?:ped)?|continue(?:d)?"
                r"|increase(?:d)?|decrease(?:d)?|change(?:d)?|take|taking|on))"
                r"\s+([A-Z][A-Za-z0-9]*(?:[ -][A-Z][A-Za-z0-9]*)*)"),
            group=1,
        ),
        PatternRule(
            DetailedEntityType.MedicineDosage,
            re.compile(r"\b\d+(?:\.\d+)?\s?(?:mg|mcg|g|ml|cc|units?|tablets?|puffs?)\b",
                       re.IGNORECASE),
        ),
        PatternRule(
            DetailedEntityType.MedicineFrequency,
            re.compile(
                r"\b(?:(?:once|twice|three times|four times|\d+ times)"
                r"(?: a| per| each) (?:day|night|week|month)"
                r"|daily|nightly|weekly|every \d+ hours|at bedtime|as needed)\b",
                re.IGNORECASE),
        ),
        PatternRule(
            DetailedEntityType.MedicineDuration,
            re.compile(r"\bfor (?:\d+|one|two|three|four|five|six|seven|eight|nine|ten)"
                       r"(?: more)? (?:days?|weeks?|months?)\b",
                       re.IGNORECASE),
        ),
        PatternRule(
            DetailedEntityType.UpcomingAppointment,
            re.compile(r"\b(?:follow[ -]?up|appointment|clinic visit)\b[^.\n!?]*",
                       re.IGNORECASE),
        ),
    ]


@dataclass
class ExtractorBackend:
    """Where extraction answers come from: built-in rules or an HTTP service."""

    kind: str
    endpoint: str | None = None
    event_terms: dict[EventType, tuple[str, ...]] = field(default_factory=dict)
    detail_terms: dict[DetailedEntityType, tuple[str, ...]] = field(default_factory=dict)
    patterns: list[PatternRule] = field(default_factory=list)
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("gazetteer", "external"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external backend needs an endpoint")
        if self.kind == "gazetteer" and not (self.event_terms or self.detail_terms):
            raise ValueError("gazetteer backend needs a non-empty lexicon")


def gazetteer_backend(lexicon, patterns=None):
    """Build a gazetteer backend from {type name: [terms]} plus pattern rules.

    Type names may be event types or detailed-entity types; anything else is
    an UnknownTypeError.  When no pattern rules are given the built-in
    detailed-instruction rules apply.
    """
    event_terms = {}
    detail_terms = {}
    for name, terms in lexicon.items():
        if name in EventType.__members__:
            event_terms[EventType(name)] = tuple(terms)
        elif name in DetailedEntityType.__members__:
            detail_terms[DetailedEntityType(name)] = tuple(terms)
        else:
            raise UnknownTypeError(f"unknown lexicon type {name!r}")
    if patterns is None:
        rules = default_detail_patterns()
    else:
        rules = []
        for raw in patterns:
            name = raw["type"]
            if name not in DetailedEntityType.__members__:
                raise UnknownTypeError(f"unknown pattern type {name!r}")
            rules.append(PatternRule(DetailedEntityType(name),
                                     re.compile(raw["regex"]),
                                     int(raw.get("group", 0))))
    return ExtractorBackend("gazetteer", event_terms=event_terms,
                            detail_terms=detail_terms, patterns=rules)


def external_backend(endpoint, timeout=10.0):
    return ExtractorBackend("external", endpoint=endpoint, timeout=timeout)


def _term_matches(text, base, terms_by_type):
    """Word-boundary, case-insensitive matches of every lexicon term."""
    found = []
    for etype, terms in terms_by_type.items():
        for term in terms:
            pattern = re.compile(r"\b" + re.escape(term) + r"\b", re.IGNORECASE)
            for m in pattern.finditer(text):
                found.append((base + m.start(), base + m.end(), etype))
    return found


def _resolve_overlaps(candidates):
    """Keep the longest span first, then the leftmost, dropping overlaps."""
    ordered = sorted(candidates,
                     key=lambda c: (-(c[1] - c[0]), c[0], c[2].value))
    kept = []
    for start, end, etype in ordered:
        if all(end <= k[0] or k[1] <= start for k in kept):
            kept.append((start, end, etype))
    kept.sort(key=lambda c: (c[0], c[1]))
    return kept


def _events_from_spans(full_text, spans):
    return [MedicalEvent(f"e{start}_{end}", Span(start, end),
                         full_text[start:end], etype)
            for start, end, etype in spans]


def extract_events(note, backend):
    """Extract medical events from the visit-recap section only.

    Results come back sorted by span start with overlaps resolved
    (longest span wins, then the leftmost).
    """
    if backend.kind == "gazetteer":
        raw = _term_matches(note.recap_text, note.visit_recap.start, backend.event_terms)
    else:
        payload = _call_external(backend, {"text": note.recap_text, "task": "events"})
        raw = _parse_external_events(payload, note)
    return _events_from_spans(note.full_text, _resolve_overlaps(raw))


def _call_external(backend, body):
    try:
        response = httpx.post(backend.endpoint, json=body, timeout=backend.timeout)
    except httpx.HTTPError as exc:
        raise ExtractorUnavailable(f"{backend.endpoint}: {exc}") from None
    if response.status_code >= 500:
        raise ExtractorUnavailable(f"{backend.endpoint} answered {response.status_code}")
    if response.status_code != 200:
        raise ExtractorProtocolError(f"{backend.endpoint} answered {response.status_code}")
    try:
        return response.json()
    except ValueError:
        raise ExtractorProtocolError("extractor response is not JSON") from None


def _parse_external_events(payload, note):
    if not isinstance(payload, dict) or not isinstance(payload.get("events"), list):
        raise ExtractorProtocolError("extractor response lacks an events array")
    base = note.visit_recap.start
    limit = len(note.recap_text)
    raw = []
    for item in payload["events"]:
        try:
            start, end, name = int(item["start"]), int(item["end"]), item["etype"]
        except (KeyError, TypeError, ValueError):
            raise ExtractorProtocolError(f"malformed event record: {item!r}") from None
        if not 0 <= start < end <= limit:
            raise ExtractorProtocolError(f"event span [{start}, {end}) outside the recap")
        if name not in EventType.__members__:
            raise ExtractorProtocolError(f"unknown event type {name!r}")
        raw.append((base + start, base + end, EventType(name)))
    return raw


def extract_detailed_entities(note, backend):
    """Extract detailed-instruction entities (rule- and lexicon-driven).

    This stage is always rule-based; the external protocol only covers recap
    events and relation scoring.  Overlaps are resolved within each entity
    type, so e.g. an appointment phrase may still contain a dosage.
    """
    text = note.instructions_text
    base = note.detailed_instructions.start
    raw = _term_matches(text, base, backend.detail_terms)
    for rule in backend.patterns:
        for m in rule.regex.finditer(text):
            start, end = m.span(rule.group)
            if end > start:
                raw.append((base + start, base + end, rule.etype))

    entities = []
    for etype in DetailedEntityType:
        mine = [c for c in raw if c[2] is etype]
        entities.extend(_resolve_overlaps(mine))
    entities.sort(key=lambda c: (c[0], c[1], c[2].value))
    return [DetailedEntity(Span(start, end), note.full_text[start:end], etype)
            for start, end, etype in entities]


@dataclass(frozen=True)
class MarkedSequence:
    """A text with exactly one head and one tail span wrapped in markers."""

    text: str
    head: MedicalEvent
    tail: MedicalEvent
    source: str


def mark_pair(text, head, tail):
    """Wrap head and tail spans in their four-letter type markers.

    The later span is inserted first so the earlier offsets stay valid, and
    stripping the markers restores the text byte for byte.
    """
    for ev in (head, tail):
        if ev.span.end > len(text):
            raise InvalidPair(f"event {ev.event_id} is outside the text")
        if ev.span.slice(text) != ev.surface:
            raise InvalidPair(f"event {ev.event_id} surface does not match the text")
    if head.span.overlaps(tail.span):
        raise InvalidPair("head and tail spans overlap")

    marked = text
    for ev in sorted((head, tail), key=lambda e: e.span.start, reverse=True):
        code = MARKER_CODES[ev.etype]
        marked = (marked[:ev.span.start]
                  + f"<{code}> " + ev.surface + f" </{code}>"
                  + marked[ev.span.end:])
    return MarkedSequence(marked, head, tail, text)


_MARKED_RE = re.compile(r"<([a-z]{4})> (.*?) </\1>", re.DOTALL)


def strip_pair_markers(marked_text):
    """Undo mark_pair: return (original text, [(span, etype), (span, etype)]).

    The two spans come back in text order.
    """
    pieces = []
    spans = []
    cursor = 0
    removed = 0
    for m in _MARKED_RE.finditer(marked_text):
        code, content = m.group(1), m.group(2)
        if code not in CODE_TO_EVENT:
            raise InvalidPair(f"unknown marker code {code!r}")
        pieces.append(marked_text[cursor:m.start()])
        pieces.append(content)
        start = m.start() - removed
        spans.append((Span(start, start + len(content)), CODE_TO_EVENT[code]))
        removed += len(m.group(0)) - len(content)
        cursor = m.end()
    pieces.append(marked_text[cursor:])
    if len(spans) != 2:
        raise InvalidPair(f"expected exactly two marked spans, found {len(spans)}")
    return "".join(pieces), spans


def generate_candidates(events):
    """All ordered event pairs compatible with some relation signature."""
    return type_compliant_pairs(events)


@dataclass(frozen=True)
class RelationPrediction:
    label: bool
    confidence: float


def _infer_rtype(head_type, tail_type):
    for rtype, (heads, tails) in RELATION_SIGNATURES.items():
        if head_type in heads and tail_type in tails:
            return rtype
    return None


def _span_gap(a, b):
    if b.start >= a.end:
        return b.start - a.end
    if a.start >= b.end:
        return a.start - b.end
    return 0


def _nearest(anchor, others):
    return min(others, key=lambda e: (_span_gap(anchor.span, e.span), e.span.start))


def classify_relation(marked, backend):
    """Decide whether the marked head/tail pair are actually related.

    The gazetteer baseline says yes only when both spans share a sentence and
    each is the other's nearest type-compliant partner there; an external
    backend is asked over HTTP and its label (or a 0.5 confidence cut) wins.
    """
    if backend.kind == "external":
        payload = _call_external(backend, {
            "text": marked.source,
            "task": "relation",
            "marked_text": marked.text,
        })
        if not isinstance(payload, dict) or ("label" not in payload and "confidence" not in payload):
            raise ExtractorProtocolError(f"malformed relation response: {payload!r}")
        confidence = float(payload.get("confidence", 0.0))
        if "label" in payload:
            label = bool(payload["label"])
            if "confidence" not in payload:
                confidence = 1.0 if label else 0.0
        else:
            label = confidence >= 0.5
        return RelationPrediction(label, confidence)

    head, tail = marked.head, marked.tail
    rtype = _infer_rtype(head.etype, tail.etype)
    if rtype is None:
        return RelationPrediction(False, 0.0)

    sentence = sentence_enclosing(marked.source, head.span.start, head.span.end)
    if sentence is None or not (sentence[0] <= tail.span.start and tail.span.end <= sentence[1]):
        return RelationPrediction(False, 0.0)

    pool = [head, tail]
    for start, end, etype in _term_matches(marked.source, 0, backend.event_terms):
        if not (sentence[0] <= start and end <= sentence[1]):
            continue
        span = Span(start, end)
        if span.overlaps(head.span) or span.overlaps(tail.span):
            continue
        pool.append(MedicalEvent(f"e{start}_{end}", span,
                                 marked.source[start:end], etype))

    heads_allowed, tails_allowed = RELATION_SIGNATURES[rtype]
    tail_side = [e for e in pool if e.etype in tails_allowed]
    head_side = [e for e in pool if e.etype in heads_allowed]
    mutual = (_nearest(head, tail_side).span == tail.span
              and _nearest(tail, head_side).span == head.span)
    return RelationPrediction(mutual, 1.0 if mutual else 0.0)


@dataclass(frozen=True)
class IEScore:
    """Micro precision/recall/F1 with a per-category breakdown."""

    precision: float
    recall: float
    f1: float
    support: int
    per_category: dict = field(default_factory=dict)


def _prf(tp, n_pred, n_gold):
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _score_keyed(gold_keys, pred_keys, category_of):
    tp = len(gold_keys & pred_keys)
    precision, recall, f1 = _prf(tp, len(pred_keys), len(gold_keys))
    per_category = {}
    for cat in sorted({category_of(k) for k in gold_keys | pred_keys}):
        g = {k for k in gold_keys if category_of(k) == cat}
        p = {k for k in pred_keys if category_of(k) == cat}
        cp, cr, cf = _prf(len(g & p), len(p), len(g))
        per_category[cat] = IEScore(cp, cr, cf, len(g))
    return IEScore(precision, recall, f1, len(gold_keys), per_category)


def score_events(gold, predicted):
    """Score predicted events against gold by exact (span, type) match."""
    key = lambda ev: (ev.span.start, ev.span.end, ev.etype.value)
    return _score_keyed({key(e) for e in gold}, {key(e) for e in predicted},
                        lambda k: k[2])


def score_relations(gold, predicted):
    """Score predicted relations against gold by (head span, tail span, rtype)."""
    key = lambda r: (r.head.span.start, r.head.span.end,
                     r.tail.span.start, r.tail.span.end, r.rtype.value)
    return _score_keyed({key(r) for r in gold if r.label},
                        {key(r) for r in predicted if r.label},
                        lambda k: k[4])


def seen_unseen_split(train_events, eval_events):
    """Split eval events by whether their surface occurred in training."""
    known = {normalize_surface(ev.surface) for ev in train_events}
    seen = [ev for ev in eval_events if normalize_surface(ev.surface) in known]
    unseen = [ev for ev in eval_events if normalize_surface(ev.surface) not in known]
    return seen, unseen
