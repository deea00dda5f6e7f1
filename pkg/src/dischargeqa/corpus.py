"""Discharge-note data model: notes, medical events, relations, annotations."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import AnnotationError, InvalidNote, ParseError, UnknownTypeError

PROVENANCES = ("synthetic", "annotated", "user_supplied")
SPLITS = ("train", "validation", "test")


class EventType(str, Enum):
    """Medical event categories a note can mention."""

    Symptom = "Symptom"
    Disease = "Disease"
    Complication = "Complication"
    Test = "Test"
    TestGoal = "TestGoal"
    TestResult = "TestResult"
    TestImplication = "TestImplication"
    Procedure = "Procedure"
    Medicine = "Medicine"
    TreatmentGoal = "TreatmentGoal"
    TreatmentResult = "TreatmentResult"


# Procedures and medicines are the two concrete kinds of treatment.
TREATMENT_KINDS = frozenset({EventType.Procedure, EventType.Medicine})


class RelationType(str, Enum):
    """Directed relation categories between two medical events."""

    SymptomCausedByDisease = "SymptomCausedByDisease"
    TestGoal = "TestGoal"
    TestResult = "TestResult"
    TestImplication = "TestImplication"
    TreatmentGoal = "TreatmentGoal"
    TreatmentResult = "TreatmentResult"


# rtype -> (allowed head types, allowed tail types)
RELATION_SIGNATURES = {
    RelationType.SymptomCausedByDisease: (
        frozenset({EventType.Symptom}),
        frozenset({EventType.Disease}),
    ),
    RelationType.TestGoal: (
        frozenset({EventType.Test}),
        frozenset({EventType.TestGoal}),
    ),
    RelationType.TestResult: (
        frozenset({EventType.Test}),
        frozenset({EventType.TestResult}),
    ),
    RelationType.TestImplication: (
        frozenset({EventType.Test}),
        frozenset({EventType.TestImplication}),
    ),
    RelationType.TreatmentGoal: (
        TREATMENT_KINDS,
        frozenset({EventType.TreatmentGoal}),
    ),
    RelationType.TreatmentResult: (
        TREATMENT_KINDS,
        frozenset({EventType.TreatmentResult}),
    ),
}


@dataclass(frozen=True, order=True)
class Span:
    """Half-open [start, end) character range into a note's full text."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"bad span [{self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start

    def slice(self, text):
        return text[self.start:self.end]

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end


@dataclass
class DischargeNote:
    """One discharge note with its two sections located inside full_text."""

    note_id: str
    full_text: str
    visit_recap: Span
    detailed_instructions: Span
    provenance: str = "user_supplied"

    def __post_init__(self):
        if not self.full_text or not self.full_text.strip():
            raise InvalidNote("note text is empty")
        if self.provenance not in PROVENANCES:
            raise InvalidNote(f"unknown provenance {self.provenance!r}")
        n = len(self.full_text)
        for name, span in (("visit_recap", self.visit_recap),
                           ("detailed_instructions", self.detailed_instructions)):
            if span.end > n:
                raise InvalidNote(f"{name} range [{span.start}, {span.end}) exceeds note length {n}")
        if self.visit_recap.overlaps(self.detailed_instructions):
            raise InvalidNote("visit_recap and detailed_instructions overlap")

    @property
    def recap_text(self):
        return self.visit_recap.slice(self.full_text)

    @property
    def instructions_text(self):
        return self.detailed_instructions.slice(self.full_text)


@dataclass(frozen=True)
class MedicalEvent:
    """A typed span in a note's visit recap."""

    event_id: str
    span: Span
    surface: str
    etype: EventType

    def __post_init__(self):
        if len(self.span) == 0:
            raise ValueError(f"event {self.event_id} has an empty span")


@dataclass(frozen=True)
class EventRelation:
    """A directed relation between two events, referenced by id."""

    head: str
    tail: str
    rtype: RelationType
    label: bool = True

    def __post_init__(self):
        if self.head == self.tail:
            raise ValueError("relation head and tail are the same event")


@dataclass(frozen=True)
class ResolvedRelation:
    """An EventRelation with its endpoints resolved to the actual events."""

    head: MedicalEvent
    tail: MedicalEvent
    rtype: RelationType
    label: bool = True


@dataclass
class AnnotatedNote:
    """A note plus its gold events, gold relations, and dataset split."""

    note: DischargeNote
    events: list[MedicalEvent] = field(default_factory=list)
    relations: list[EventRelation] = field(default_factory=list)
    split: str = "train"

    def __post_init__(self):
        self.validate()

    def validate(self):
        nid = self.note.note_id

        def bad(reason):
            raise AnnotationError(nid, reason)

        if self.split not in SPLITS:
            bad(f"unknown split {self.split!r}")

        n = len(self.note.full_text)
        seen_keys = set()
        by_id = {}
        for ev in self.events:
            if ev.span.end > n:
                bad(f"event {ev.event_id} span exceeds note length")
            if ev.surface != ev.span.slice(self.note.full_text):
                bad(f"event {ev.event_id} surface does not match its span")
            key = (ev.span, ev.etype)
            if key in seen_keys:
                bad(f"duplicate event at [{ev.span.start}, {ev.span.end}) with type {ev.etype.value}")
            seen_keys.add(key)
            if ev.event_id in by_id:
                bad(f"duplicate event id {ev.event_id}")
            by_id[ev.event_id] = ev

        for rel in self.relations:
            if rel.head not in by_id or rel.tail not in by_id:
                bad(f"relation references unknown event ({rel.head}, {rel.tail})")
            if not rel.label:
                bad("annotated relations must carry label=true")
            heads, tails = RELATION_SIGNATURES[rel.rtype]
            if by_id[rel.head].etype not in heads or by_id[rel.tail].etype not in tails:
                bad(f"relation {rel.rtype.value} violates its type signature "
                    f"({by_id[rel.head].etype.value} -> {by_id[rel.tail].etype.value})")

    def event_by_id(self, event_id):
        for ev in self.events:
            if ev.event_id == event_id:
                return ev
        raise KeyError(event_id)

    def resolved_relations(self):
        """Relations with endpoints resolved to MedicalEvent objects."""
        return [ResolvedRelation(self.event_by_id(r.head), self.event_by_id(r.tail), r.rtype, r.label)
                for r in self.relations]


@dataclass(frozen=True)
class RelationExample:
    """One labeled (head, tail, rtype) pair for relation-classifier training."""

    note_id: str
    head: str
    tail: str
    rtype: RelationType
    label: bool


# Headings that open the detailed-instructions section of a plain-text note:
# "Followup Instructions" lines, or heading lines about medications.
DEFAULT_HEADING_RE = re.compile(
    r"^(?:followup instructions\b[^\n]*|[^\n]*\bmedications?\b[^\n]*:)[ \t]*$",
    re.IGNORECASE | re.MULTILINE,
)


def _generated_note_id(full_text):
    return "note-" + hashlib.sha1(full_text.encode("utf-8")).hexdigest()[:10]


def ingest_note(raw, fmt="plain", note_id=None, heading_re=None, provenance="user_supplied"):
    """Turn raw input into a DischargeNote with located sections.

    Plain text is split at the first heading that matches heading_re (the
    detailed-instructions section starts at the heading line); if nothing
    matches, the whole note is treated as visit recap.  sectioned_json input
    carries the two sections explicitly.
    """
    if fmt == "plain":
        if not isinstance(raw, str) or not raw.strip():
            raise InvalidNote("empty note")
        pattern = heading_re or DEFAULT_HEADING_RE
        if isinstance(pattern, str):
            pattern = re.compile(pattern, re.IGNORECASE | re.MULTILINE)
        match = pattern.search(raw)
        if match is None:
            recap = Span(0, len(raw))
            detail = Span(len(raw), len(raw))
        else:
            cut = match.start()
            recap = Span(0, cut)
            detail = Span(cut, len(raw))
        return DischargeNote(note_id or _generated_note_id(raw), raw, recap, detail,
                             provenance=provenance)

    if fmt == "sectioned_json":
        try:
            payload = json.loads(raw)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ParseError(f"not valid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise ParseError("sectioned note must be a JSON object")
        recap_text = payload.get("visit_recap")
        detail_text = payload.get("detailed_instructions", "")
        if not isinstance(recap_text, str) or not isinstance(detail_text, str):
            raise ParseError("visit_recap and detailed_instructions must be strings")
        full = recap_text + detail_text
        if not full.strip():
            raise InvalidNote("empty note")
        return DischargeNote(
            payload.get("note_id") or note_id or _generated_note_id(full),
            full,
            Span(0, len(recap_text)),
            Span(len(recap_text), len(full)),
            provenance=provenance,
        )

    raise ParseError(f"unknown note format {fmt!r}")


def _event_type(name):
    try:
        return EventType(name)
    except ValueError:
        raise UnknownTypeError(f"unknown event type {name!r}") from None


def _relation_type(name):
    try:
        return RelationType(name)
    except ValueError:
        raise UnknownTypeError(f"unknown relation type {name!r}") from None


def annotated_note_from_dict(doc):
    """Build one AnnotatedNote from its JSON representation."""
    try:
        note_id = doc["note_id"]
        full_text = doc["full_text"]
        recap = Span(*doc["visit_recap"])
        detail = Span(*doc["detailed_instructions"])
        split = doc.get("split", "train")
        raw_events = doc.get("events", [])
        raw_relations = doc.get("relations", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(doc.get("note_id", "<unknown>"), f"malformed record: {exc}") from None

    note = DischargeNote(note_id, full_text, recap, detail, provenance="annotated")
    events = []
    for raw in raw_events:
        etype = _event_type(raw["etype"])
        span = Span(raw["start"], raw["end"])
        events.append(MedicalEvent(raw["event_id"], span, span.slice(full_text), etype))
    relations = [EventRelation(raw["head"], raw["tail"], _relation_type(raw["rtype"]))
                 for raw in raw_relations]
    return AnnotatedNote(note, events, relations, split)


def annotated_note_to_dict(annotated):
    note = annotated.note
    return {
        "note_id": note.note_id,
        "full_text": note.full_text,
        "visit_recap": [note.visit_recap.start, note.visit_recap.end],
        "detailed_instructions": [note.detailed_instructions.start, note.detailed_instructions.end],
        "split": annotated.split,
        "events": [
            {"event_id": ev.event_id, "start": ev.span.start, "end": ev.span.end,
             "etype": ev.etype.value}
            for ev in annotated.events
        ],
        "relations": [
            {"head": r.head, "tail": r.tail, "rtype": r.rtype.value}
            for r in annotated.relations
        ],
    }


def load_annotations(path):
    """Load and validate an annotation file (JSON array of note records)."""
    with open(path, encoding="utf-8") as fh:
        try:
            docs = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(docs, list):
        raise ParseError(f"{path}: top level must be an array of notes")
    return [annotated_note_from_dict(doc) for doc in docs]


def save_annotations(notes, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([annotated_note_to_dict(n) for n in notes], fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def type_compliant_pairs(events):
    """All ordered (head, tail, rtype) triples allowed by the signatures.

    Order is (head start, head end, tail start, tail end, rtype name), which
    every consumer treats as the canonical candidate order.
    """
    out = []
    for i, head in enumerate(events):
        for j, tail in enumerate(events):
            if i == j:
                continue
            for rtype, (heads, tails) in RELATION_SIGNATURES.items():
                if head.etype in heads and tail.etype in tails:
                    out.append((head, tail, rtype))
    out.sort(key=lambda c: (c[0].span.start, c[0].span.end,
                            c[1].span.start, c[1].span.end, c[2].name))
    return out


def derive_relation_dataset(notes):
    """Label every type-compliant pair in every note.

    Pairs that were annotated are positives; every other compliant ordered
    pair of the same note becomes a negative.
    """
    examples = []
    for annotated in notes:
        positive = {(r.head, r.tail, r.rtype) for r in annotated.relations}
        for head, tail, rtype in type_compliant_pairs(annotated.events):
            label = (head.event_id, tail.event_id, rtype) in positive
            examples.append(RelationExample(annotated.note.note_id,
                                            head.event_id, tail.event_id, rtype, label))
    return examples
