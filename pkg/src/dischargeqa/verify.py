"""Answer verification: prompt assembly, verdict parsing, degraded fallback."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyAnswer, FixtureMiss, LlmUnavailable
from .llmclient import ChatRequest, complete
from .textutil import normalize_answer

logger = logging.getLogger(__name__)

PHYSICIAN_ROLE = ("As a physician, your goal in the conversation is to help your patient "
                  "better understand the discharge instructions before they leave the hospital.")

VERIFY_INSTRUCTION = ("verify if the patient's answer is correct, incorrect, or partially "
                      "correct, and generate a suitable response to improve the patient's "
                      "comprehension of this question.")

APOLOGY = ("Sorry, I could not check that answer right now. "
           "Please look at this part of your discharge instructions again.")

DEFAULT_MODEL = "gpt-4"


class VerdictLabel(str, Enum):
    Correct = "Correct"
    PartiallyCorrect = "PartiallyCorrect"
    Incorrect = "Incorrect"
    Unparseable = "Unparseable"


@dataclass(frozen=True)
class Verdict:
    """How the model judged one answer, plus the feedback shown to the patient."""

    label: VerdictLabel
    feedback: str
    degraded: bool = False

    def __post_init__(self):
        if self.label is not VerdictLabel.Unparseable and not self.feedback.strip():
            raise ValueError("feedback must be non-empty unless the verdict is Unparseable")


def build_verification_prompt(note_text, history, question, answer, *,
                              model_id=DEFAULT_MODEL, temperature=0.0, max_tokens=512):
    """Assemble the verification request, byte-deterministic in its inputs.

    history is a sequence of (question, answer, feedback) triples from earlier
    exchanges, rendered as alternating assistant/user messages between the
    note and the current question.
    """
    if not answer or not answer.strip():
        raise EmptyAnswer("cannot verify a blank answer")
    messages = [("system", PHYSICIAN_ROLE), ("user", note_text)]
    for past_q, past_a, past_f in history:
        messages.append(("assistant", past_q))
        messages.append(("user", past_a))
        messages.append(("assistant", past_f))
    messages.append(("assistant", question))
    messages.append(("user", answer))
    messages.append(("user", VERIFY_INSTRUCTION))
    return ChatRequest(model_id, tuple(messages),
                       temperature=temperature, max_tokens=max_tokens)


def parse_verdict(text):
    """Read the model's judgement out of free text.

    "partially correct" outranks the other cues so it can never be mistaken
    for a plain "correct"; "incorrect"/"not correct" outranks "correct".
    """
    lowered = text.lower()
    if "partially correct" in lowered:
        return Verdict(VerdictLabel.PartiallyCorrect, text)
    if "incorrect" in lowered or "not correct" in lowered:
        return Verdict(VerdictLabel.Incorrect, text)
    if "correct" in lowered:
        return Verdict(VerdictLabel.Correct, text)
    return Verdict(VerdictLabel.Unparseable, text)


def verify_answer(note_text, history, question, answer, transport, *,
                  model_id=DEFAULT_MODEL, temperature=0.0, max_tokens=512,
                  answer_key=None, use_answer_key=False):
    """Verify one answer end to end.

    A dead transport degrades to an Unparseable verdict carrying a canned
    apology instead of failing the dialogue.  The exact-match shortcut
    against an answer key is off unless use_answer_key is set.
    """
    if use_answer_key and answer_key and answer and answer.strip():
        if normalize_answer(answer) == normalize_answer(answer_key):
            return Verdict(VerdictLabel.Correct,
                           f"That is correct: {answer_key}.")

    request = build_verification_prompt(note_text, history, question, answer,
                                        model_id=model_id, temperature=temperature,
                                        max_tokens=max_tokens)
    try:
        result = complete(request, transport)
    except (LlmUnavailable, FixtureMiss) as exc:
        logger.warning("verification degraded: %s", exc)
        return Verdict(VerdictLabel.Unparseable, APOLOGY, degraded=True)
    return parse_verdict(result.text)
