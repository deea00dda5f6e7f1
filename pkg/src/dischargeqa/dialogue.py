"""The prompt/evaluate/expand dialogue loop over one discharge note."""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .errors import EmptyAnswer, ProtocolError, SessionConfigError
from .qgen import AssemblyMode
from .verify import Verdict, VerdictLabel


class Condition(str, Enum):
    """How much the bot does: nothing, questions only, or questions plus feedback."""

    NONE = "None"
    Q = "Q"
    QA = "QA"


class Phase(str, Enum):
    Reading = "Reading"
    Asking = "Asking"
    AwaitingAnswer = "AwaitingAnswer"
    ClozeTest = "ClozeTest"
    Finished = "Finished"


class TurnKind(str, Enum):
    Prompt = "Prompt"
    Answer = "Answer"
    Feedback = "Feedback"
    Acknowledgment = "Acknowledgment"
    RepeatInvite = "Repeat-Invite"
    System = "System"


ACK_TEXT = "Thank you. Next question."
REPEAT_INVITE_TEXT = "Let's give that question one more try."
QUIZ_TRANSITION_TEXT = "That's all my questions. Let's check what you remember with a short quiz."


@dataclass
class Turn:
    index: int
    speaker: str
    kind: TurnKind
    text: str
    question_id: str | None = None
    verdict: Verdict | None = None
    timestamp: str = ""


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class DialogueSession:
    """All mutable state of one patient-education conversation."""

    session_id: str
    note: object
    condition: Condition
    question_source: AssemblyMode
    questions: dict = field(default_factory=dict)
    queue: list = field(default_factory=list)
    turns: list = field(default_factory=list)
    phase: Phase = Phase.Reading
    repeat_on_incorrect: bool = False
    attempts: dict = field(default_factory=dict)
    pending_question: str | None = None
    cloze_result: dict | None = None
    clock: object = field(default=_utc_now, repr=False, compare=False)

    def _append(self, speaker, kind, text, question_id=None, verdict=None):
        turn = Turn(len(self.turns), speaker, kind, text,
                    question_id=question_id, verdict=verdict,
                    timestamp=self.clock())
        self.turns.append(turn)
        return turn


@dataclass(frozen=True)
class SessionRecord:
    """A finished session: its transcript plus the cloze outcome."""

    session_id: str
    note_id: str
    condition: Condition
    question_source: AssemblyMode
    turns: tuple
    cloze_result: dict | None


def start_session(note, condition, question_source, questions, *,
                  session_id=None, repeat_on_incorrect=False, clock=None):
    """Open a session in the Reading phase with the note on display.

    A None-condition session never asks anything, so any supplied questions
    are dropped there; the other conditions refuse an empty set.
    """
    questions = list(questions)
    if condition is not Condition.NONE and not questions:
        raise SessionConfigError(f"condition {condition.value} needs at least one question")
    if condition is Condition.NONE:
        questions = []

    session = DialogueSession(
        session_id=session_id or "s" + uuid.uuid4().hex[:12],
        note=note,
        condition=condition,
        question_source=question_source,
        questions={q.question_id: q for q in questions},
        queue=[q.question_id for q in questions],
        repeat_on_incorrect=repeat_on_incorrect,
    )
    if clock is not None:
        session.clock = clock
    session._append("bot", TurnKind.System, note.full_text)
    return session


def next_turn(session):
    """Advance the bot: ask the next question or move on to the quiz."""
    if session.phase not in (Phase.Reading, Phase.Asking):
        raise ProtocolError(f"cannot advance from phase {session.phase.value}")
    if session.queue:
        qid = session.queue.pop(0)
        session.attempts[qid] = session.attempts.get(qid, 0) + 1
        session.pending_question = qid
        session.phase = Phase.AwaitingAnswer
        return [session._append("bot", TurnKind.Prompt,
                                session.questions[qid].text, question_id=qid)]
    session.phase = Phase.ClozeTest
    return [session._append("bot", TurnKind.System, QUIZ_TRANSITION_TEXT)]


def _completed_exchanges(session):
    """(question, answer, feedback) triples for every finished exchange so far."""
    triples = []
    prompt = answer = None
    for turn in session.turns:
        if turn.kind is TurnKind.Prompt:
            prompt, answer = turn, None
        elif turn.kind is TurnKind.Answer:
            answer = turn
        elif turn.kind is TurnKind.Feedback and prompt is not None and answer is not None:
            triples.append((prompt.text, answer.text, turn.text))
            prompt = answer = None
    return triples


def submit_answer(session, text, verifier=None):
    """Record the patient's answer and produce the bot's reaction.

    QA sessions get verified feedback (and, with repeat mode on, one retry
    after an incorrect answer); Q sessions get the fixed acknowledgment and
    never touch the verifier.
    """
    if session.phase is not Phase.AwaitingAnswer:
        raise ProtocolError(f"no question is awaiting an answer in phase {session.phase.value}")
    if not text or not text.strip():
        raise EmptyAnswer("the answer is blank")

    qid = session.pending_question
    question = session.questions[qid]
    emitted = [session._append("patient", TurnKind.Answer, text, question_id=qid)]

    if session.condition is Condition.QA:
        if verifier is None:
            raise SessionConfigError("a QA session needs a verifier")
        history = _completed_exchanges(session)
        verdict = verifier(session.note.full_text, history, question, text)
        emitted.append(session._append("bot", TurnKind.Feedback, verdict.feedback,
                                       question_id=qid, verdict=verdict))
        if (verdict.label is VerdictLabel.Incorrect and session.repeat_on_incorrect
                and session.attempts.get(qid, 0) < 2):
            session.queue.insert(0, qid)
            emitted.append(session._append("bot", TurnKind.RepeatInvite,
                                           REPEAT_INVITE_TEXT, question_id=qid))
    else:
        emitted.append(session._append("bot", TurnKind.Acknowledgment, ACK_TEXT,
                                       question_id=qid))

    session.pending_question = None
    session.phase = Phase.Asking
    return emitted


def finish_session(session, cloze_result=None):
    """Close the quiz phase and freeze the session into a SessionRecord."""
    if session.phase is not Phase.ClozeTest:
        raise ProtocolError(f"cannot finish from phase {session.phase.value}")
    session.phase = Phase.Finished
    session.cloze_result = cloze_result
    return SessionRecord(session.session_id, session.note.note_id, session.condition,
                         session.question_source, tuple(session.turns), cloze_result)


def verdict_to_dict(verdict):
    if verdict is None:
        return None
    return {"label": verdict.label.value, "feedback": verdict.feedback,
            "degraded": verdict.degraded}


def verdict_from_dict(doc):
    if doc is None:
        return None
    return Verdict(VerdictLabel(doc["label"]), doc["feedback"], doc.get("degraded", False))


def turn_to_dict(turn):
    return {
        "index": turn.index,
        "speaker": turn.speaker,
        "kind": turn.kind.value,
        "text": turn.text,
        "question_id": turn.question_id,
        "verdict": verdict_to_dict(turn.verdict),
        "timestamp": turn.timestamp,
    }


def turn_from_dict(doc):
    return Turn(doc["index"], doc["speaker"], TurnKind(doc["kind"]), doc["text"],
                doc.get("question_id"), verdict_from_dict(doc.get("verdict")),
                doc.get("timestamp", ""))


def transcript_text(session):
    """Serialize a session as JSONL: one header line, then one line per turn."""
    header = {
        "session_id": session.session_id,
        "note_id": session.note.note_id,
        "condition": session.condition.value,
        "question_source": session.question_source.value,
        "phase": session.phase.value,
        "repeat_on_incorrect": session.repeat_on_incorrect,
    }
    lines = [json.dumps(header, ensure_ascii=False)]
    lines.extend(json.dumps(turn_to_dict(t), ensure_ascii=False) for t in session.turns)
    return "\n".join(lines) + "\n"


def parse_transcript(text):
    """Read a transcript back into (header dict, list of Turns)."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ProtocolError("transcript is empty")
    header = json.loads(lines[0])
    return header, [turn_from_dict(json.loads(line)) for line in lines[1:]]
