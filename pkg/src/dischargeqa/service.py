"""REST service and the append-only session store behind it."""

from __future__ import annotations

import json
import logging
import os
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import dialogue
from .corpus import DischargeNote, Span, ingest_note
from .dialogue import (
    Condition,
    Phase,
    TurnKind,
    finish_session,
    next_turn,
    start_session,
    submit_answer,
    turn_to_dict,
    verdict_from_dict,
    verdict_to_dict,
)
from .errors import (
    AssemblyError,
    ClozeFormatError,
    ConsistencyError,
    CorruptLog,
    DischargeQaError,
    EmptyAnswer,
    FixtureMiss,
    InvalidNote,
    LlmUnavailable,
    NotFound,
    ParseError,
    ProtocolError,
    SessionConfigError,
    StorageError,
    UnknownTypeError,
)
from .evaluation import ClozeItem, ClozeTest, score_cloze
from .extraction import gazetteer_backend
from .llmclient import HttpTransport, RecordingTransport, ReplayTransport
from .qgen import (
    AssemblyMode,
    question_from_dict,
    question_set_from_note,
    question_to_dict,
)
from .verify import verify_answer

logger = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    """Everything the service needs, loadable from a TOML file."""

    store_dir: str = "sessions"
    gazetteer_path: str | None = None
    human_questions: str | None = None
    cloze_dir: str | None = None
    repeat_on_incorrect: bool = False
    use_answer_key: bool = False
    llm_fixture: str | None = None
    record_fixture: str | None = None
    generation_model: str = "gpt-4"
    verify_model: str = "gpt-4"
    generation_temperature: float = 0.0
    verify_temperature: float = 0.0
    n_min: int = 4
    frontend_dir: str | None = None


def load_config(path=None, **overrides):
    """Read a TOML config file and apply keyword overrides on top."""
    values = {}
    if path:
        import tomli

        with open(path, "rb") as fh:
            doc = tomli.load(fh)
        section_keys = {
            "service": ("store_dir", "frontend_dir"),
            "extraction": ("gazetteer_path",),
            "qgen": ("human_questions", "n_min"),
            "dialogue": ("repeat_on_incorrect",),
            "verify": ("use_answer_key",),
            "llm": ("llm_fixture", "record_fixture", "generation_model",
                    "verify_model", "generation_temperature", "verify_temperature"),
            "eval": ("cloze_dir",),
        }
        for section, keys in section_keys.items():
            for key in keys:
                if key in doc.get(section, {}):
                    values[key] = doc[section][key]
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ServiceConfig(**values)


def transport_from_config(config):
    """Pick the LLM transport: replay fixture, live HTTP, or nothing."""
    fixture = config.llm_fixture or os.environ.get("DISCHARGEQA_LLM_FIXTURE")
    if fixture:
        transport = ReplayTransport(fixture)
    elif os.environ.get("LLM_BASE_URL"):
        transport = HttpTransport()
    else:
        transport = None
    record = config.record_fixture or os.environ.get("DISCHARGEQA_RECORD_FIXTURE")
    if record and transport is not None:
        transport = RecordingTransport(transport, record)
    return transport


def _note_to_dict(note):
    return {
        "note_id": note.note_id,
        "full_text": note.full_text,
        "visit_recap": [note.visit_recap.start, note.visit_recap.end],
        "detailed_instructions": [note.detailed_instructions.start,
                                  note.detailed_instructions.end],
        "provenance": note.provenance,
    }


def _note_from_dict(doc):
    return DischargeNote(doc["note_id"], doc["full_text"], Span(*doc["visit_recap"]),
                         Span(*doc["detailed_instructions"]), doc.get("provenance", "user_supplied"))


class SessionStore:
    """Append-only JSONL event logs, one per session, with in-memory snapshots."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions = {}
        self._last_seq = {}
        self._answers = {}

    def _log_path(self, session_id):
        return self.root / f"{session_id}.jsonl"

    def last_seq(self, session_id):
        return self._last_seq.get(session_id, 0)

    def persist_event(self, session_id, event):
        """Durably append one event; its seq must be exactly last+1."""
        expected = self.last_seq(session_id) + 1
        if event.get("seq") != expected:
            raise ConsistencyError(
                f"session {session_id}: expected seq {expected}, got {event.get('seq')}")
        line = json.dumps(event, ensure_ascii=False)
        try:
            with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to session log: {exc}") from None
        self._last_seq[session_id] = event["seq"]

    def append(self, session_id, kind, data):
        event = {"seq": self.last_seq(session_id) + 1, "type": kind, "data": data}
        self.persist_event(session_id, event)
        return event

    def track(self, session):
        self._sessions[session.session_id] = session

    def cache_answer(self, session_id, request_id, response):
        if request_id:
            self._answers.setdefault(session_id, {})[request_id] = response

    def cached_answer(self, session_id, request_id):
        if not request_id:
            return None
        return self._answers.get(session_id, {}).get(request_id)

    def get_session(self, session_id):
        if session_id in self._sessions:
            return self._sessions[session_id]
        return self.replay_session(session_id)

    def session_ids(self):
        known = set(self._sessions)
        known.update(p.stem for p in self.root.glob("*.jsonl"))
        return sorted(known)

    def replay_session(self, session_id):
        """Rebuild a session by folding its event log through the state machine.

        Every recorded event is re-run against the real dialogue code (with
        timestamps fed back through the clock) and the produced turns must
        match the recorded ones byte for byte; any divergence is a corrupt log.
        """
        path = self._log_path(session_id)
        if not path.exists():
            raise NotFound(f"no session {session_id}")

        events = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CorruptLog(f"{path}:{lineno}: not JSON: {exc}") from None
        if not events:
            raise CorruptLog(f"{path}: empty log")

        session = None
        answers = {}
        try:
            for i, event in enumerate(events):
                if event.get("seq") != i + 1:
                    raise CorruptLog(f"sequence gap at position {i + 1}")
                kind, data = event.get("type"), event.get("data", {})
                recorded = data.get("turns", [])
                feed = [t["timestamp"] for t in recorded]
                clock = lambda feed=feed: feed.pop(0) if feed else _fail_clock()

                if kind == "started":
                    if session is not None:
                        raise CorruptLog("second started event")
                    note = _note_from_dict(data["note"])
                    questions = [question_from_dict(q) for q in data["questions"]]
                    session = start_session(
                        note, Condition(data["condition"]),
                        AssemblyMode(data["question_source"]), questions,
                        session_id=data["session_id"],
                        repeat_on_incorrect=data.get("repeat_on_incorrect", False),
                        clock=clock)
                    produced = session.turns
                elif session is None:
                    raise CorruptLog(f"{kind} event before started")
                elif kind == "advanced":
                    session.clock = clock
                    produced = next_turn(session)
                elif kind == "answered":
                    verdict_doc = data.get("verdict")
                    if session.condition is not Condition.QA and verdict_doc is not None:
                        raise CorruptLog(
                            f"verified feedback recorded in condition {session.condition.value}")
                    session.clock = clock
                    if session.condition is Condition.QA:
                        if verdict_doc is None:
                            raise CorruptLog("QA answer event lacks a verdict")
                        verdict = verdict_from_dict(verdict_doc)
                        produced = submit_answer(session, data["text"],
                                                 lambda *args: verdict)
                    else:
                        produced = submit_answer(session, data["text"])
                    # The answer endpoint advances in the same breath, so the
                    # follow-on prompt (or quiz hand-off) is part of this event.
                    if session.phase is Phase.Asking:
                        produced = produced + next_turn(session)
                    if data.get("request_id"):
                        answers[data["request_id"]] = data.get("response")
                elif kind == "finished":
                    finish_session(session, data.get("cloze"))
                    produced = []
                else:
                    raise CorruptLog(f"unknown event type {kind!r}")

                if [turn_to_dict(t) for t in produced] != recorded:
                    raise CorruptLog(f"event {i + 1} ({kind}) does not replay to the "
                                     f"recorded turns")
        except (DischargeQaError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CorruptLog):
                raise
            raise CorruptLog(f"cannot replay session {session_id}: {exc}") from None

        session.clock = dialogue._utc_now
        self._sessions[session_id] = session
        self._last_seq[session_id] = len(events)
        self._answers[session_id] = answers
        return session


def _fail_clock():
    raise CorruptLog("more turns produced than the log recorded")


class NoteIn(BaseModel):
    text: str | None = None
    sections: dict | None = None
    note_id: str | None = None
    cloze_items: list | None = None


class SessionIn(BaseModel):
    note_id: str
    condition: str
    question_source: str


class AnswerIn(BaseModel):
    text: str
    request_id: str | None = None


class ClozeIn(BaseModel):
    responses: list


_ERROR_STATUS = {
    NotFound: 404,
    ProtocolError: 409,
    EmptyAnswer: 422,
    ClozeFormatError: 422,
    AssemblyError: 422,
    SessionConfigError: 422,
    InvalidNote: 422,
    ParseError: 422,
    UnknownTypeError: 422,
    LlmUnavailable: 503,
    FixtureMiss: 503,
    ConsistencyError: 500,
    StorageError: 500,
    CorruptLog: 500,
}


def create_app(config=None):
    """Build the FastAPI application around one SessionStore."""
    config = config or ServiceConfig()
    store = SessionStore(config.store_dir)
    notes_dir = Path(config.store_dir) / "notes"
    notes_dir.mkdir(parents=True, exist_ok=True)
    transport = transport_from_config(config)

    backend = None
    if config.gazetteer_path:
        with open(config.gazetteer_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        backend = gazetteer_backend(doc.get("terms", doc), doc.get("patterns"))

    app = FastAPI(title="dischargeqa")

    @app.exception_handler(DischargeQaError)
    async def _domain_error(request: Request, exc: DischargeQaError):
        status = 500
        for klass, code in _ERROR_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    def save_note(note, cloze_items):
        doc = _note_to_dict(note)
        doc["cloze_items"] = cloze_items
        path = notes_dir / f"{note.note_id}.json"
        path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")

    def load_note(note_id):
        path = notes_dir / f"{note_id}.json"
        if not path.exists():
            raise NotFound(f"no note {note_id}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        return _note_from_dict(doc), doc.get("cloze_items")

    def cloze_test_for(note):
        _, items = load_note(note.note_id)
        if items:
            return ClozeTest(note.note_id,
                             [ClozeItem(i["blanked_sentence"], i["gold"],
                                        tuple(i.get("aliases", ()))) for i in items])
        if config.cloze_dir:
            path = Path(config.cloze_dir) / f"{note.note_id}.json"
            if path.exists():
                doc = json.loads(path.read_text(encoding="utf-8"))
                return ClozeTest(doc["note_id"],
                                 [ClozeItem(i["blanked_sentence"], i["gold"],
                                            tuple(i.get("aliases", ()))) for i in doc["items"]])
        raise NotFound(f"no cloze test for note {note.note_id}")

    def build_questions(note, mode):
        if mode is AssemblyMode.GPT_IE and backend is None:
            raise AssemblyError("GPT_IE needs a gazetteer (set extraction.gazetteer_path)")
        return question_set_from_note(
            note, mode, backend=backend, transport=transport,
            human_path=config.human_questions, n_min=config.n_min,
            model_id=config.generation_model,
            temperature=config.generation_temperature)

    def make_verifier():
        def verifier(note_text, history, question, answer):
            return verify_answer(
                note_text, history, question.text, answer, transport,
                model_id=config.verify_model, temperature=config.verify_temperature,
                answer_key=question.answer_key, use_answer_key=config.use_answer_key)
        return verifier

    def emit(session, kind, data, turns):
        data = dict(data)
        data["turns"] = [turn_to_dict(t) for t in turns]
        store.append(session.session_id, kind, data)

    @app.get("/")
    def root():
        return {"service": "dischargeqa", "sessions": store.session_ids()}

    @app.post("/notes")
    def post_note(body: NoteIn):
        if body.sections is not None:
            raw = json.dumps({"note_id": body.note_id, **body.sections})
            note = ingest_note(raw, "sectioned_json", note_id=body.note_id)
        elif body.text is not None:
            note = ingest_note(body.text, "plain", note_id=body.note_id)
        else:
            raise InvalidNote("provide either text or sections")
        if body.cloze_items is not None:
            ClozeTest(note.note_id,
                      [ClozeItem(i["blanked_sentence"], i["gold"],
                                 tuple(i.get("aliases", ()))) for i in body.cloze_items])
        save_note(note, body.cloze_items)
        return {"note_id": note.note_id}

    @app.post("/sessions")
    def post_session(body: SessionIn):
        note, _ = load_note(body.note_id)
        try:
            condition = Condition(body.condition)
            mode = AssemblyMode(body.question_source)
        except ValueError as exc:
            raise SessionConfigError(str(exc)) from None

        question_set = (build_questions(note, mode)
                        if condition is not Condition.NONE else None)
        questions = question_set.questions if question_set else []
        session = start_session(note, condition, mode, questions,
                                session_id="s" + uuid.uuid4().hex[:12],
                                repeat_on_incorrect=config.repeat_on_incorrect)
        store.track(session)
        emit(session, "started", {
            "session_id": session.session_id,
            "note": _note_to_dict(note),
            "condition": condition.value,
            "question_source": mode.value,
            "questions": [question_to_dict(q) for q in questions],
            "repeat_on_incorrect": session.repeat_on_incorrect,
        }, session.turns)

        opened = next_turn(session)
        emit(session, "advanced", {}, opened)
        return {"session_id": session.session_id, "phase": session.phase.value,
                "turns": [turn_to_dict(t) for t in session.turns]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.get_session(session_id)
        try:
            blanks = [i.blanked_sentence for i in cloze_test_for(session.note).items]
        except NotFound:
            blanks = None
        return {
            "session_id": session.session_id,
            "note_id": session.note.note_id,
            "note_text": session.note.full_text,
            "condition": session.condition.value,
            "question_source": session.question_source.value,
            "phase": session.phase.value,
            "cloze_result": session.cloze_result,
            "cloze_blanks": blanks,
            "turns": [turn_to_dict(t) for t in session.turns],
        }

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: AnswerIn):
        session = store.get_session(session_id)
        cached = store.cached_answer(session_id, body.request_id)
        if cached is not None:
            return cached

        verifier = make_verifier() if session.condition is Condition.QA else None
        emitted = submit_answer(session, body.text, verifier)
        verdict = next((t.verdict for t in emitted if t.kind is TurnKind.Feedback), None)
        if session.phase is Phase.Asking:
            emitted = emitted + next_turn(session)

        response = {"turns": [turn_to_dict(t) for t in emitted],
                    "phase": session.phase.value}
        emit(session, "answered", {
            "text": body.text,
            "request_id": body.request_id,
            "verdict": verdict_to_dict(verdict),
            "response": response,
        }, emitted)
        store.cache_answer(session_id, body.request_id, response)
        return response

    @app.post("/sessions/{session_id}/cloze")
    def post_cloze(session_id: str, body: ClozeIn):
        session = store.get_session(session_id)
        if session.phase is not Phase.ClozeTest:
            raise ProtocolError(f"cloze submitted in phase {session.phase.value}")
        test = cloze_test_for(session.note)
        score = score_cloze(test, [str(r) for r in body.responses])
        result = {
            "accuracy": score.accuracy,
            "items": [{"given": r.given, "expected": r.expected, "correct": r.correct}
                      for r in score.per_item],
        }
        finish_session(session, result)
        emit(session, "finished", {"cloze": result}, [])
        return {"phase": session.phase.value, **result}

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        session = store.get_session(session_id)
        verdict_counts = {}
        for turn in session.turns:
            if turn.verdict is not None:
                key = turn.verdict.label.value
                verdict_counts[key] = verdict_counts.get(key, 0) + 1
        prompts = [t for t in session.turns if t.kind is TurnKind.Prompt]
        return {
            "kind": "session",
            "data": {
                "session_id": session.session_id,
                "note_id": session.note.note_id,
                "condition": session.condition.value,
                "question_source": session.question_source.value,
                "phase": session.phase.value,
                "questions_asked": len({t.question_id for t in prompts}),
                "prompt_count": len(prompts),
                "turn_count": len(session.turns),
                "verdict_counts": verdict_counts,
                "cloze": session.cloze_result,
            },
        }

    if config.frontend_dir and Path(config.frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=config.frontend_dir, html=True),
                  name="ui")

    app.state.config = config
    app.state.store = store
    return app
