"""Question generation: relation templates, cloze rewrites, direct LLM asks."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .corpus import RelationType, Span
from .errors import (
    AssemblyError,
    GenerationError,
    LlmUnavailable,
    FixtureMiss,
    RetryableGenerationError,
)
from .llmclient import ChatRequest, complete
from .textutil import normalize_answer, sentence_enclosing, spell_count

logger = logging.getLogger(__name__)

BLANK = "_____"

DEFAULT_MODEL = "gpt-4"

# One question template per relation type; the head surface fills the slot
# and the tail surface is the expected answer.
TEMPLATES = {
    RelationType.SymptomCausedByDisease: "What is the cause of your symptom {head}?",
    RelationType.TestGoal: "What is the goal of test {head}?",
    RelationType.TestResult: "What is the result of test {head}?",
    RelationType.TestImplication: "What does test {head} imply?",
    RelationType.TreatmentGoal: "What is the goal of treatment {head}?",
    RelationType.TreatmentResult: "What is the result of treatment {head}?",
}

DIRECT_INSTRUCTION = ("Generate at least {n} questions to help the patient understand "
                      "crucial medical events in the above discharge instruction.")

CLOZE_INSTRUCTION = "Generate a simple question targeting the blank in the above sentence."


class QuestionSource(str, Enum):
    Human = "Human"
    DirectLLM = "DirectLLM"
    TemplateIE = "TemplateIE"
    ClozeIE = "ClozeIE"


class AssemblyMode(str, Enum):
    GPT = "GPT"
    GPT_IE = "GPT_IE"
    HUMAN = "Human"


@dataclass(frozen=True)
class Question:
    """One question to put to the patient, with its provenance."""

    question_id: str
    note_id: str
    text: str
    answer_key: str
    source: QuestionSource
    trigger: Span | None = None
    fallback: bool = False


@dataclass
class QuestionSet:
    """The deduplicated, ordered questions for one note."""

    note_id: str
    questions: list[Question] = field(default_factory=list)
    generation_config: dict = field(default_factory=dict)


def _question_id(note_id, source, text, answer_key):
    digest = hashlib.sha1(f"{note_id}|{source.value}|{text}|{answer_key}".encode("utf-8"))
    return "q" + digest.hexdigest()[:10]


def _make_question(note_id, text, answer_key, source, trigger=None, fallback=False):
    return Question(_question_id(note_id, source, text, answer_key),
                    note_id, text, answer_key, source, trigger, fallback)


def template_question(rel, note_id):
    """Instantiate the template for rel's type with its head surface."""
    if not rel.label:
        raise GenerationError("template questions need a positive relation")
    answer = rel.tail.surface.strip()
    if not answer:
        raise GenerationError("relation tail has no surface to use as the answer")
    text = TEMPLATES[rel.rtype].format(head=rel.head.surface)
    return _make_question(note_id, text, rel.tail.surface, QuestionSource.TemplateIE,
                          trigger=rel.head.span)


def disease_treatment_question(disease, treatment, note_id):
    """Extra template asking which treatment addressed a disease (off by default)."""
    text = f"What treatment is applied to disease {disease.surface}?"
    return _make_question(note_id, text, treatment.surface, QuestionSource.TemplateIE,
                          trigger=disease.span)


def blank_sentence(note, span):
    """The sentence around span with the span itself replaced by the blank."""
    enclosing = sentence_enclosing(note.full_text, span.start, span.end)
    if enclosing is None:
        raise GenerationError("entity does not sit inside a single sentence")
    s_start, s_end = enclosing
    sentence = note.full_text[s_start:s_end]
    rel_start, rel_end = span.start - s_start, span.end - s_start
    return sentence[:rel_start] + BLANK + sentence[rel_end:]


def cloze_question(note, entity, transport=None, *, model_id=DEFAULT_MODEL,
                   temperature=0.0, max_tokens=128, allow_fallback=True):
    """Blank out the entity in its sentence and let the LLM phrase a question.

    When no model is reachable the blanked sentence itself stands in as the
    question, and the Question records that through its fallback flag.
    """
    blanked = blank_sentence(note, entity.span)
    prompt = blanked + "\n" + CLOZE_INSTRUCTION

    text = None
    if transport is not None:
        request = ChatRequest(model_id, (("user", prompt),),
                              temperature=temperature, max_tokens=max_tokens)
        try:
            result = complete(request, transport)
            for line in result.text.splitlines():
                if line.strip():
                    text = line.strip()
                    break
        except (LlmUnavailable, FixtureMiss) as exc:
            logger.warning("cloze rewrite unavailable for %s: %s", note.note_id, exc)

    fallback = text is None
    if fallback and not allow_fallback:
        raise GenerationError("cloze rewrite failed and the fallback is disabled")
    return _make_question(note.note_id, blanked if fallback else text, entity.surface,
                          QuestionSource.ClozeIE, trigger=entity.span, fallback=fallback)


_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s+)(.+?)\s*$", re.MULTILINE)


def _parse_enumerated(text):
    items = [m.group(1) for m in _ITEM_RE.finditer(text)]
    if items:
        return items
    return [line.strip() for line in text.splitlines() if line.strip().endswith("?")]


def direct_llm_questions(note, transport, n_min=4, *, model_id=DEFAULT_MODEL,
                         temperature=0.0, max_tokens=512):
    """Ask the model directly for questions about the whole note."""
    prompt = note.full_text + "\n" + DIRECT_INSTRUCTION.format(n=spell_count(n_min))
    request = ChatRequest(model_id, (("user", prompt),),
                          temperature=temperature, max_tokens=max_tokens)

    items = []
    for attempt in range(2):
        items = _parse_enumerated(complete(request, transport).text)
        if len(items) >= n_min:
            break
        logger.warning("model returned %d questions, wanted at least %d (attempt %d)",
                       len(items), n_min, attempt + 1)
    if len(items) < n_min:
        raise RetryableGenerationError(
            f"model produced {len(items)} questions, needed at least {n_min}")
    return [_make_question(note.note_id, text, "", QuestionSource.DirectLLM)
            for text in items]


def load_human_questions(path, note_id):
    """Read expert-written questions for one note from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        rows = doc.get(note_id)
        if rows is None:
            raise AssemblyError(f"{path} has no questions for note {note_id}")
    elif isinstance(doc, list):
        rows = doc
    else:
        raise AssemblyError(f"{path}: expected an object keyed by note id or an array")
    return [_make_question(note_id, row["text"], row.get("answer_key", ""),
                           QuestionSource.Human)
            for row in rows]


def _section_rank(note, question):
    if question.trigger is None:
        return 2
    if note.visit_recap.start <= question.trigger.start < note.visit_recap.end:
        return 0
    return 1


def assemble_question_set(note, mode, *, relations=(), entities=(), transport=None,
                          human_path=None, n_min=4, include_disease_treatment=False,
                          disease_treatment_pairs=(), model_id=DEFAULT_MODEL,
                          temperature=0.0):
    """Build the ordered, deduplicated question set for one note.

    GPT keeps only direct model questions; GPT_IE keeps template and cloze
    questions built from extraction output; Human loads an expert file.
    Recap-triggered questions come before detailed-instruction ones, each
    ordered by trigger position.
    """
    if mode is AssemblyMode.GPT:
        questions = direct_llm_questions(note, transport, n_min,
                                         model_id=model_id, temperature=temperature)
    elif mode is AssemblyMode.GPT_IE:
        questions = [template_question(rel, note.note_id)
                     for rel in relations if rel.label]
        if include_disease_treatment:
            questions.extend(disease_treatment_question(d, t, note.note_id)
                             for d, t in disease_treatment_pairs)
        questions.extend(cloze_question(note, entity, transport, model_id=model_id,
                                        temperature=temperature)
                         for entity in entities if getattr(entity, "priority", True))
    elif mode is AssemblyMode.HUMAN:
        if human_path is None:
            raise AssemblyError("Human mode needs a question file")
        questions = load_human_questions(human_path, note.note_id)
    else:
        raise AssemblyError(f"unknown assembly mode {mode!r}")

    for q in questions:
        if q.note_id != note.note_id:
            raise AssemblyError(f"question {q.question_id} belongs to note {q.note_id}, "
                                f"not {note.note_id}")

    deduped = []
    seen = set()
    for q in questions:
        key = (normalize_answer(q.text), normalize_answer(q.answer_key))
        if key in seen:
            continue
        seen.add(key)
        deduped.append(q)
    deduped.sort(key=lambda q: (_section_rank(note, q),
                                q.trigger.start if q.trigger else 0))

    config = {
        "mode": mode.value,
        "n_min": n_min,
        "include_disease_treatment": include_disease_treatment,
        "model_id": model_id,
        "temperature": temperature,
    }
    return QuestionSet(note.note_id, deduped, config)


def question_set_from_note(note, mode, *, backend=None, transport=None, human_path=None,
                           n_min=4, include_disease_treatment=False,
                           model_id=DEFAULT_MODEL, temperature=0.0):
    """Run whatever pipeline the mode needs on a bare note, then assemble.

    GPT_IE extracts events, keeps the relation candidates the classifier
    accepts, and pairs them with the priority detailed entities.
    """
    relations = []
    entities = []
    if mode is AssemblyMode.GPT_IE:
        from .corpus import ResolvedRelation
        from .extraction import (
            classify_relation,
            extract_detailed_entities,
            extract_events,
            generate_candidates,
            mark_pair,
        )

        if backend is None:
            raise AssemblyError("GPT_IE mode needs an extraction backend")
        events = extract_events(note, backend)
        for head, tail, rtype in generate_candidates(events):
            marked = mark_pair(note.full_text, head, tail)
            if classify_relation(marked, backend).label:
                relations.append(ResolvedRelation(head, tail, rtype))
        # An entity must leave some of its sentence standing: a blank with no
        # surrounding context (or no single enclosing sentence) is unusable.
        for entity in extract_detailed_entities(note, backend):
            if not entity.priority:
                continue
            try:
                blanked = blank_sentence(note, entity.span)
            except GenerationError:
                continue
            if blanked.strip() != BLANK:
                entities.append(entity)
    return assemble_question_set(note, mode, relations=relations, entities=entities,
                                 transport=transport, human_path=human_path, n_min=n_min,
                                 include_disease_treatment=include_disease_treatment,
                                 model_id=model_id, temperature=temperature)


def question_to_dict(q):
    return {
        "question_id": q.question_id,
        "note_id": q.note_id,
        "text": q.text,
        "answer_key": q.answer_key,
        "source": q.source.value,
        "trigger": [q.trigger.start, q.trigger.end] if q.trigger else None,
        "fallback": q.fallback,
    }


def question_from_dict(doc):
    trigger = Span(*doc["trigger"]) if doc.get("trigger") else None
    return Question(doc["question_id"], doc["note_id"], doc["text"],
                    doc.get("answer_key", ""), QuestionSource(doc["source"]),
                    trigger, doc.get("fallback", False))


def question_set_to_dict(qs):
    return {
        "note_id": qs.note_id,
        "generation_config": qs.generation_config,
        "questions": [question_to_dict(q) for q in qs.questions],
    }


def question_set_from_dict(doc):
    return QuestionSet(doc["note_id"],
                       [question_from_dict(q) for q in doc.get("questions", [])],
                       doc.get("generation_config", {}))
