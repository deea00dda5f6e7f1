"""Interactive question answering over hospital discharge instructions."""

from .corpus import (
    AnnotatedNote,
    DischargeNote,
    EventRelation,
    EventType,
    MedicalEvent,
    RelationType,
    ResolvedRelation,
    Span,
    ingest_note,
    type_compliant_pairs,
)
from .dialogue import (
    Condition,
    DialogueSession,
    Phase,
    Turn,
    TurnKind,
    finish_session,
    next_turn,
    start_session,
    submit_answer,
)
from .errors import DischargeQaError
from .extraction import (
    DetailedEntity,
    DetailedEntityType,
    classify_relation,
    extract_detailed_entities,
    extract_events,
    gazetteer_backend,
    mark_pair,
)
from .llmclient import ChatRequest, complete, request_digest
from .qgen import AssemblyMode, Question, QuestionSet, QuestionSource, question_set_from_note
from .verify import Verdict, VerdictLabel, verify_answer

__version__ = "0.1.0"

__all__ = [
    "AnnotatedNote",
    "AssemblyMode",
    "ChatRequest",
    "Condition",
    "DetailedEntity",
    "DetailedEntityType",
    "DialogueSession",
    "DischargeNote",
    "DischargeQaError",
    "EventRelation",
    "EventType",
    "MedicalEvent",
    "Phase",
    "Question",
    "QuestionSet",
    "QuestionSource",
    "RelationType",
    "ResolvedRelation",
    "Span",
    "Turn",
    "TurnKind",
    "Verdict",
    "VerdictLabel",
    "classify_relation",
    "complete",
    "extract_detailed_entities",
    "extract_events",
    "finish_session",
    "gazetteer_backend",
    "ingest_note",
    "mark_pair",
    "next_turn",
    "question_set_from_note",
    "request_digest",
    "start_session",
    "submit_answer",
    "type_compliant_pairs",
    "verify_answer",
    "__version__",
]
