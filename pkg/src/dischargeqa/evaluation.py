"""Outcome measurement: cloze scoring, preference MRR, LLM judging, coding rates."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    AggregationError,
    ClozeFormatError,
    JudgeParseError,
    ProtocolError,
    RankingError,
)
from .llmclient import ChatRequest, complete
from .textutil import normalize_answer

DEFAULT_MODEL = "gpt-4"

NOTE_PLACEHOLDER = "[The Patient's Discharge Instruction]"
HISTORY_PLACEHOLDER = "[The Conversation History]"

JUDGE_PROMPT_TEMPLATE = """You are a physician who wants to evaluate how helpful an AI model is for educating patients. The model asks the patient questions, then verifies the patient's answers, in order to help patients memorize their discharge instructions.

Four evaluation aspects for AI model’s question quality includes:

Coverage: Does the conversation cover the cloze test in the evaluation?

Question Appropriateness: Are the answers to the questions contained in the discharge instruction?

Education Outcome: Do you think the chatbot helps patients understand their discharge instructions?

Overall: How do you like the general experience with the chatbot considering the above aspects?

Two evaluation aspects of the AI model’s feedback includes:

Correctness: Are the responses from the AI model factually correct?

Education Potential: Do the AI model's responses provide helpful information for educating patients?

5-point Likert scale:

1: very low rating

2: low rating

3: neutral or medium rating

4: higher rating

5: very highly rating

The patient's discharge instructions: [The Patient's Discharge Instruction]

The conversation between the patient and the AI model: [The Conversation History]

Give the 5-point Likert scale of the AI model's question quality (four aspects) and answer feedback (two aspects) one by one. Return the scores as dictionary objects, adhering to the following structure: {"Coverage": ..., "Question Appropriateness": ...}. Please provide your response solely in the dictionary format without including any additional text."""

JUDGE_SCORE_KEYS = (
    "Coverage",
    "Question Appropriateness",
    "Education Outcome",
    "Overall",
    "Correctness",
    "Education Potential",
)


@dataclass(frozen=True)
class ClozeItem:
    blanked_sentence: str
    gold: str
    aliases: tuple = ()


@dataclass
class ClozeTest:
    """A 5-7 item fill-in quiz whose answers all come from the note."""

    note_id: str
    items: list

    def __post_init__(self):
        if not 5 <= len(self.items) <= 7:
            raise ClozeFormatError(f"cloze test needs 5-7 items, got {len(self.items)}")


@dataclass(frozen=True)
class ClozeItemResult:
    given: str
    expected: str
    correct: bool


@dataclass(frozen=True)
class ClozeScore:
    accuracy: float
    per_item: tuple


def load_cloze_test(path, note=None):
    """Read a cloze test file; with a note given, insist the golds appear in it."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        items = [ClozeItem(i["blanked_sentence"], i["gold"], tuple(i.get("aliases", ())))
                 for i in doc["items"]]
        test = ClozeTest(doc["note_id"], items)
    except (KeyError, TypeError) as exc:
        raise ClozeFormatError(f"{path}: malformed cloze test: {exc}") from None
    if note is not None:
        for item in test.items:
            if item.gold not in note.full_text:
                raise ClozeFormatError(f"gold answer {item.gold!r} is not in note "
                                       f"{note.note_id}")
    return test


def score_cloze(test, responses):
    """Accuracy of the responses, one per item, under answer normalization."""
    if len(responses) != len(test.items):
        raise ClozeFormatError(f"expected {len(test.items)} responses, got {len(responses)}")
    results = []
    for item, given in zip(test.items, responses):
        accepted = {normalize_answer(item.gold)}
        accepted.update(normalize_answer(a) for a in item.aliases)
        results.append(ClozeItemResult(given, item.gold,
                                       normalize_answer(given) in accepted))
    correct = sum(1 for r in results if r.correct)
    return ClozeScore(correct / len(results), tuple(results))


class Aspect(str, Enum):
    Coverage = "Coverage"
    Appropriateness = "Appropriateness"
    EducationOutcome = "EducationOutcome"
    Overall = "Overall"


@dataclass(frozen=True)
class PreferenceRanking:
    """One evaluator's competition-style ranking of the conditions."""

    evaluator_id: str
    aspect: Aspect
    ranks: dict

    def __post_init__(self):
        if not self.ranks:
            raise RankingError(f"{self.evaluator_id}: empty ranking")
        for rank in self.ranks.values():
            if not isinstance(rank, int) or isinstance(rank, bool) or rank < 1:
                raise RankingError(f"{self.evaluator_id}: bad rank {rank!r}")
        values = sorted(self.ranks.values())
        for rank in values:
            expected = 1 + sum(1 for v in values if v < rank)
            if rank != expected:
                raise RankingError(
                    f"{self.evaluator_id}: rank {rank} breaks competition ranking "
                    f"(expected {expected})")


def compute_mrr(rankings, target):
    """Mean reciprocal rank of the target condition across evaluators."""
    if not rankings:
        raise RankingError("no rankings to average")
    total = 0.0
    for ranking in rankings:
        if target not in ranking.ranks:
            raise RankingError(f"{ranking.evaluator_id}: no rank for {target!r}")
        total += 1.0 / ranking.ranks[target]
    return total / len(rankings)


def load_rankings(path, aspect=None, synonyms=None):
    """Read evaluator_id,aspect,condition,rank rows into PreferenceRankings."""
    synonyms = synonyms or {}
    grouped = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            row_aspect = Aspect(row["aspect"])
            if aspect is not None and row_aspect is not Aspect(aspect):
                continue
            condition = synonyms.get(row["condition"], row["condition"])
            key = (row["evaluator_id"], row_aspect)
            grouped.setdefault(key, {})[condition] = int(row["rank"])
    return [PreferenceRanking(evaluator_id, row_aspect, ranks)
            for (evaluator_id, row_aspect), ranks in grouped.items()]


def render_history(turns):
    """Conversation turns as Bot:/Patient: lines; system scaffolding is omitted."""
    lines = []
    for turn in turns:
        kind = getattr(turn.kind, "value", turn.kind)
        if kind == "System":
            continue
        prefix = "Patient" if turn.speaker == "patient" else "Bot"
        lines.append(f"{prefix}: {turn.text}")
    return "\n".join(lines)


def build_judge_prompt(note_text, turns, phase="Finished"):
    """Fill the judging rubric with the note and the finished conversation."""
    phase_value = getattr(phase, "value", phase)
    if phase_value != "Finished":
        raise ProtocolError(f"can only judge a finished session, not {phase_value}")
    return (JUDGE_PROMPT_TEMPLATE
            .replace(NOTE_PLACEHOLDER, note_text)
            .replace(HISTORY_PLACEHOLDER, render_history(turns)))


@dataclass(frozen=True)
class JudgeScores:
    coverage: int
    question_appropriateness: int
    education_outcome: int
    overall: int
    correctness: int
    education_potential: int

    def to_dict(self):
        return dict(zip(JUDGE_SCORE_KEYS,
                        (self.coverage, self.question_appropriateness,
                         self.education_outcome, self.overall,
                         self.correctness, self.education_potential)))


def _first_json_object(text):
    start = text.find("{")
    while start != -1:
        depth = 0
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start:i + 1])
                    except json.JSONDecodeError:
                        break
        start = text.find("{", start + 1)
    raise JudgeParseError("no JSON object in the judge response")


def parse_judge_scores(text, strict=False):
    """Pull the six Likert scores out of a judge response.

    Tolerant mode accepts prose around the score object; strict mode insists
    the response is nothing but the object.
    """
    if strict:
        try:
            payload = json.loads(text.strip())
        except json.JSONDecodeError as exc:
            raise JudgeParseError(f"strict mode: response is not pure JSON: {exc}") from None
        if not isinstance(payload, dict) or set(payload) != set(JUDGE_SCORE_KEYS):
            raise JudgeParseError("strict mode: response must contain exactly the six score keys")
    else:
        payload = _first_json_object(text)
        if not isinstance(payload, dict):
            raise JudgeParseError("judge response is not an object")

    scores = []
    for key in JUDGE_SCORE_KEYS:
        if key not in payload:
            raise JudgeParseError(f"missing score {key!r}")
        value = payload[key]
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise JudgeParseError(f"score {key!r} must be an integer 1..5, got {payload[key]!r}")
        scores.append(value)
    return JudgeScores(*scores)


def judge_transcript(note_text, turns, phase, transport, *, model_id=DEFAULT_MODEL,
                     temperature=0.0, max_tokens=256, strict=False):
    """Run the LLM judge over one finished session."""
    prompt = build_judge_prompt(note_text, turns, phase)
    request = ChatRequest(model_id, (("user", prompt),),
                          temperature=temperature, max_tokens=max_tokens)
    return parse_judge_scores(complete(request, transport).text, strict=strict)


def aggregate_heuristic(codes):
    """Positive rates per coded dimension over a set of binary-coded responses."""
    if not codes:
        raise AggregationError("no coded responses to aggregate")
    dimensions = sorted({key for code in codes for key in code})
    report = {}
    for dim in dimensions:
        marked = [code[dim] for code in codes if dim in code]
        positive = sum(1 for value in marked if value)
        report[dim] = {"positive": positive, "total": len(marked),
                       "rate": positive / len(marked)}
    return report


@dataclass
class EvalReport:
    """A named bundle of evaluation numbers, ready to serialize."""

    kind: str
    data: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "data": self.data}
